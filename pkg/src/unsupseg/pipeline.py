"""Single-image training loop, reference-image training, fixed-weight
application, and connected-component segment extraction."""

import math
from dataclasses import dataclass

import numpy as np

from .losses import total_loss
from .network import assign_labels, backward, forward, init_params, sgd_momentum_step


class TrainingDiverged(RuntimeError):
    """Raised when the loss stops being finite during optimization."""


@dataclass
class IterationStats:
    """Loss values and the unique-label count recorded each iteration."""

    sim: float
    con: float
    scr: float
    total: float
    unique_labels: int


@dataclass
class SegmentationResult:
    labels: np.ndarray  # (H, W) cluster ids from the final completed iteration
    unique_label_count: int
    loss_history: list  # one IterationStats per completed iteration
    iterations_run: int
    params: "NetworkParams"


@dataclass
class SegmentSet:
    """Binary segment masks plus the cluster label each mask came from."""

    masks: list  # boolean (H, W) arrays
    source_labels: list


def _check_scribbles(image, scribbles, max_labels):
    if scribbles is None:
        return
    h, w = image.shape[1:]
    if scribbles.mask.shape != (h, w):
        raise ValueError(
            f"scribble shape {scribbles.mask.shape} does not match image {(h, w)}"
        )


def _train_step(image, params, hp, scribbles):
    _, response, cache = forward(image, params, hp)
    labels = assign_labels(response)
    breakdown = total_loss(
        response.values,
        labels,
        scribbles,
        mu=hp.mu,
        nu=hp.nu,
        tv_bounds=hp.tv_bounds,
    )
    if not math.isfinite(breakdown.total):
        raise TrainingDiverged(
            f"non-finite loss (sim={breakdown.sim} con={breakdown.con} "
            f"scr={breakdown.scr})"
        )
    grads = backward(image, params, cache, breakdown.grad_response)
    sgd_momentum_step(params, grads, hp.lr, hp.momentum)
    return labels, breakdown


def segment(image, hp, scribbles=None):
    """Jointly optimize the network and the pixel labels on one image.

    Runs up to hp.iters forward/assign/loss/backward/update rounds and stops
    early once the unique-label count drops to hp.min_labels or below. The
    returned label map is the one from the final completed iteration.
    """
    _check_scribbles(image, scribbles, hp.max_labels)
    params = init_params(hp)
    history = []
    labels = None
    unique = 0
    iterations = 0
    for t in range(1, hp.iters + 1):
        try:
            labels, breakdown = _train_step(image, params, hp, scribbles)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"iteration {t}: {exc}") from None
        unique = int(np.unique(labels).size)
        history.append(
            IterationStats(
                breakdown.sim, breakdown.con, breakdown.scr, breakdown.total, unique
            )
        )
        iterations = t
        if unique <= hp.min_labels:
            break
    return SegmentationResult(labels, unique, history, iterations, params)


def train_reference(images, hp, epochs=1):
    """Train network weights with one update per reference image, in order.

    A single pass (epochs=1) matches the reference protocol; more passes are
    allowed for experimentation. No scribbles and no early stopping.
    """
    images = list(images)
    if not images:
        raise ValueError("train_reference needs at least one image")
    for img in images:
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError("reference images must be (3, H, W) arrays")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    params = init_params(hp)
    step = 0
    for _ in range(epochs):
        for img in images:
            step += 1
            try:
                _train_step(img, params, hp, None)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"update {step}: {exc}") from None
    return params


def apply_fixed(params, image, hp):
    """Segment one image with frozen weights: a single forward pass plus
    argmax. Batch statistics are recomputed on this image; params are not
    mutated."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError("expected a (3, H, W) image")
    if (
        params.layers != hp.layers
        or params.feat_dim != hp.feat_dim
        or params.max_labels != hp.max_labels
    ):
        raise ValueError(
            f"params dims (M={params.layers}, p={params.feat_dim}, "
            f"q={params.max_labels}) do not match the hyperparameters"
        )
    _, response, _ = forward(image, params, hp)
    return assign_labels(response)


class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def extract_segments(labels):
    """Partition a label map into maximal 4-connected equal-label regions.

    Uses union-find over the pixel grid; segments are ordered by the scanline
    position of their first pixel.
    """
    labels = np.asarray(labels)
    h, w = labels.shape
    n = h * w
    flat = labels.reshape(-1)
    uf = _UnionFind(n)
    for i in range(n):
        x = i % w
        if x > 0 and flat[i] == flat[i - 1]:
            uf.union(i, i - 1)
        if i >= w and flat[i] == flat[i - w]:
            uf.union(i, i - w)
    roots = np.fromiter((uf.find(i) for i in range(n)), dtype=np.int64, count=n)
    _, inverse = np.unique(roots, return_inverse=True)
    first_seen = np.full(inverse.max() + 1, n, dtype=np.int64)
    np.minimum.at(first_seen, inverse, np.arange(n))
    order = np.argsort(first_seen, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    seg_ids = rank[inverse].reshape(h, w)
    masks = []
    source = []
    firsts = np.sort(first_seen)
    for s, first in enumerate(firsts):
        masks.append(seg_ids == s)
        source.append(int(flat[first]))
    return SegmentSet(masks, source)
