"""Classical comparison methods: k-means on windowed RGB features and
greedy graph-based segmentation with Gaussian pre-smoothing."""

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class GsConfig:
    """Graph-based segmentation settings."""

    tau: float = 500.0  # scale parameter: larger favors larger components
    sigma: float = 1.0  # Gaussian pre-smoothing
    min_size: int = 0  # post-merge minimum component size (0 = off)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.min_size < 0:
            raise ValueError("min_size must be >= 0")


def window_features(image, window=5):
    """Per-pixel features: RGB triples of the window x window neighborhood,
    concatenated in row-major window order, clamp-to-edge at the borders.

    Returns an (H*W, 3*window^2) array in pixel scanline order.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 1")
    c, h, w = image.shape
    r = window // 2
    padded = np.pad(image, ((0, 0), (r, r), (r, r)), mode="edge")
    feats = np.empty((h, w, window * window, c), dtype=image.dtype)
    i = 0
    for dy in range(window):
        for dx in range(window):
            feats[:, :, i, :] = padded[:, dy : dy + h, dx : dx + w].transpose(1, 2, 0)
            i += 1
    return feats.reshape(h * w, window * window * c)


def _kmeanspp_init(feats, k, rng):
    n = feats.shape[0]
    centroids = np.empty((k, feats.shape[1]), dtype=feats.dtype)
    centroids[0] = feats[rng.integers(n)]
    d2 = ((feats - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # all remaining points coincide with centroids
        centroids[i] = feats[idx]
        d2 = np.minimum(d2, ((feats - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _cluster_means(feats, labels, k):
    counts = np.bincount(labels, minlength=k)
    sums = np.stack(
        [np.bincount(labels, weights=feats[:, j], minlength=k) for j in range(feats.shape[1])],
        axis=1,
    )
    return sums, counts


def kmeans(features, k, seed=0, max_iter=100):
    """Lloyd iterations from k-means++ seeding; returns one label per row.

    Stops at an assignment fixpoint (where every point sits with its nearest
    centroid and every centroid is the mean of its points) or after max_iter
    rounds. Distance ties break to the lowest centroid index. A cluster left
    empty by an assignment is re-seeded to the point farthest from its own
    centroid.
    """
    feats = np.asarray(features, dtype=np.float64)
    n = feats.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(feats, k, rng)
    f_sq = (feats**2).sum(axis=1)
    labels = None
    prev_obj = math.inf
    for _ in range(max_iter):
        d2 = f_sq[:, None] + (centroids**2).sum(axis=1)[None, :] - 2.0 * feats @ centroids.T
        np.maximum(d2, 0.0, out=d2)
        new_labels = d2.argmin(axis=1)
        obj = float(d2[np.arange(n), new_labels].sum())
        assert obj <= prev_obj + 1e-8 * max(1.0, abs(prev_obj)), "objective increased"
        prev_obj = obj
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums, counts = _cluster_means(feats, labels, k)
        empty = np.flatnonzero(counts == 0)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if empty.size:
            own_d2 = d2[np.arange(n), labels].copy()
            for ci in empty:
                far = int(own_d2.argmax())
                centroids[ci] = feats[far]
                own_d2[far] = -1.0  # one donor point per empty cluster
    return labels.astype(np.int32)


def gaussian_kernel(sigma):
    """Discrete Gaussian truncated at 4*sigma and renormalized to sum 1."""
    radius = int(math.ceil(4.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_smooth(image, sigma):
    """Separable Gaussian blur of each channel with replicate padding."""
    img = np.asarray(image, dtype=np.float64)
    if sigma <= 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    r = (k.size - 1) // 2
    h, w = img.shape[-2:]
    padded = np.pad(img, ((0, 0), (0, 0), (r, r)), mode="edge")
    out = np.zeros_like(img)
    for j, kj in enumerate(k):
        out += kj * padded[:, :, j : j + w]
    padded = np.pad(out, ((0, 0), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for j, kj in enumerate(k):
        out += kj * padded[:, j : j + h, :]
    return out


def felzenszwalb(image, cfg=None):
    """Greedy graph-based segmentation of a (3, H, W) image.

    Builds an 8-connected grid graph weighted by Euclidean RGB distance on
    the smoothed image, then merges components in ascending edge order when
    the connecting weight is within both components' internal difference
    plus tau/|C|. Components smaller than min_size are merged afterwards
    along their cheapest connecting edges. Returns an (H, W) label map with
    dense ids in scanline order of first occurrence.
    """
    if cfg is None:
        cfg = GsConfig()
    c, h, w = image.shape
    smooth = gaussian_smooth(image, cfg.sigma)
    idx = np.arange(h * w).reshape(h, w)
    edges_a, edges_b, weights = [], [], []
    for (ay, ax), (by, bx) in (
        ((slice(None), slice(None, -1)), (slice(None), slice(1, None))),  # right
        ((slice(None, -1), slice(None)), (slice(1, None), slice(None))),  # down
        ((slice(None, -1), slice(None, -1)), (slice(1, None), slice(1, None))),  # down-right
        ((slice(None, -1), slice(1, None)), (slice(1, None), slice(None, -1))),  # down-left
    ):
        a = idx[ay, ax].reshape(-1)
        b = idx[by, bx].reshape(-1)
        diff = smooth[:, ay, ax] - smooth[:, by, bx]
        wgt = np.sqrt((diff * diff).sum(axis=0)).reshape(-1)
        edges_a.append(a)
        edges_b.append(b)
        weights.append(wgt)
    edges_a = np.concatenate(edges_a)
    edges_b = np.concatenate(edges_b)
    weights = np.concatenate(weights)
    order = np.argsort(weights, kind="stable")

    n = h * w
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    threshold = np.full(n, cfg.tau, dtype=np.float64)  # Int(C) + tau/|C|, |C|=1

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for e in order:
        ra, rb = find(edges_a[e]), find(edges_b[e])
        if ra == rb:
            continue
        wgt = weights[e]
        if wgt <= threshold[ra] and wgt <= threshold[rb]:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            threshold[ra] = wgt + cfg.tau / size[ra]

    if cfg.min_size > 0:
        for e in order:
            ra, rb = find(edges_a[e]), find(edges_b[e])
            if ra != rb and (size[ra] < cfg.min_size or size[rb] < cfg.min_size):
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                parent[rb] = ra
                size[ra] += size[rb]

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    _, inverse = np.unique(roots, return_inverse=True)
    first_seen = np.full(inverse.max() + 1, n, dtype=np.int64)
    np.minimum.at(first_seen, inverse, np.arange(n))
    order_ids = np.argsort(first_seen, kind="stable")
    rank = np.empty_like(order_ids)
    rank[order_ids] = np.arange(order_ids.size)
    return rank[inverse].reshape(h, w).astype(np.int32)
