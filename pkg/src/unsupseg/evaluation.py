"""Segmentation scoring: IOU, best-match mIOU, ground-truth variant
selection, and precision-recall curves with average precision."""

from dataclasses import dataclass, field

import numpy as np

from .pipeline import SegmentSet


@dataclass
class GtBundle:
    """All ground-truth annotations of one image (several for BSD-style
    data, one for VOC-style), plus an optional mask of unscored pixels."""

    variants: list  # list[SegmentSet]
    void_mask: np.ndarray = None


@dataclass
class MatchRecord:
    """Best IOU achieved by one estimated segment against any GT segment."""

    est_index: int
    best_gt_index: int
    best_iou: float


@dataclass
class PrCurve:
    points: list  # (recall, precision) pairs in sweep order
    ap: float
    true_positives: int = 0
    empty: bool = False  # set when the match list was empty


def iou(a, b, void=None):
    """Intersection over union of two binary masks, 0 when the union is
    empty; void pixels are removed from both masks first."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    if void is not None:
        keep = ~np.asarray(void).astype(bool)
        a = a & keep
        b = b & keep
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def _mask_matrix(masks, void):
    stacked = np.stack([np.asarray(m).astype(bool).reshape(-1) for m in masks])
    if void is not None:
        stacked &= ~np.asarray(void).astype(bool).reshape(-1)
    # float64 keeps the integer pixel counts (and hence the IOU ratios) exact
    return stacked.astype(np.float64)


def iou_matrix(gt, est, void=None):
    """(len(gt.masks), len(est.masks)) array of pairwise IOU values."""
    g = _mask_matrix(gt.masks, void)
    e = _mask_matrix(est.masks, void)
    inter = g @ e.T
    sizes_g = g.sum(axis=1)
    sizes_e = e.sum(axis=1)
    union = sizes_g[:, None] + sizes_e[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def miou(gt, est, void=None):
    """Mean over GT segments of the best IOU any estimated segment achieves."""
    if not gt.masks:
        raise ValueError("ground truth has no segments")
    if not est.masks:
        return 0.0
    return float(iou_matrix(gt, est, void).max(axis=1).mean())


def match_segments(gt, est, void=None):
    """One MatchRecord per estimated segment: its best IOU over GT segments."""
    if not gt.masks:
        raise ValueError("ground truth has no segments")
    if not est.masks:
        return []
    mat = iou_matrix(gt, est, void)
    best_gt = mat.argmax(axis=0)
    return [
        MatchRecord(j, int(best_gt[j]), float(mat[best_gt[j], j]))
        for j in range(mat.shape[1])
    ]


def select_gt(bundle, mode):
    """Pick ground-truth variants: all of them, the finest (most segments),
    or the coarsest (fewest). Ties resolve to the first in file order."""
    if not bundle.variants:
        raise ValueError("empty ground-truth bundle")
    if mode == "all":
        return list(bundle.variants)
    counts = [len(v.masks) for v in bundle.variants]
    if mode == "fine":
        return [bundle.variants[counts.index(max(counts))]]
    if mode == "coarse":
        return [bundle.variants[counts.index(min(counts))]]
    raise ValueError(f"unknown ground-truth mode: {mode!r}")


def pr_ap(matches, iou_threshold, total_gt):
    """Precision-recall sweep over matches sorted by best IOU descending.

    A match with best_iou strictly above the threshold counts as a true
    positive; recall is measured against total_gt ground-truth segments.
    The average precision is the area under the precision-recall polyline
    after replacing each precision with the maximum precision at any equal
    or higher recall.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie strictly between 0 and 1")
    if not matches:
        return PrCurve([], 0.0, 0, empty=True)
    if total_gt < 1:
        raise ValueError("total_gt must be >= 1")
    ordered = sorted(matches, key=lambda m: -m.best_iou)
    tp = 0
    fp = 0
    points = []
    for m in ordered:
        if m.best_iou > iou_threshold:
            tp += 1
        else:
            fp += 1
        points.append((tp / total_gt, tp / (tp + fp)))
    precisions = [p for _, p in points]
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for (recall, _), prec in zip(points, precisions):
        ap += (recall - prev_recall) * prec
        prev_recall = recall
    return PrCurve(points, float(ap), tp)


def segments_from_labels(labels, void_value=None):
    """One segment per distinct label value of a ground-truth raster (such
    segments may be spatially disconnected), skipping the void sentinel."""
    labels = np.asarray(labels)
    masks = []
    source = []
    for v in np.unique(labels):
        if void_value is not None and v == void_value:
            continue
        masks.append(labels == v)
        source.append(int(v))
    return SegmentSet(masks, source)
