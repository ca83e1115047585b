"""Loss terms driving the joint feature/cluster optimization.

All three terms are functions of the normalized (q, H, W) response map and
return both their scalar value and their exact gradient with respect to it.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Scribbles:
    """User-annotated pixels: mask is nonzero where a pixel is scribbled and
    labels holds the desired cluster index there (ignored elsewhere)."""

    mask: np.ndarray  # (H, W)
    labels: np.ndarray  # (H, W) integers

    def __post_init__(self):
        if self.mask.shape != self.labels.shape:
            raise ValueError("scribble mask and labels must share a shape")


@dataclass
class LossBreakdown:
    sim: float
    con: float
    scr: float
    total: float
    grad_response: np.ndarray


def _values(response):
    return getattr(response, "values", response)


def _log_softmax(v2):
    # v2: (q, N); stable via max-shifted log-sum-exp
    shifted = v2 - v2.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def sim_loss(response, labels):
    """Feature-similarity term: mean softmax cross entropy against the
    argmax-derived pseudo-targets (treated as constants)."""
    values = _values(response)
    q, h, w = values.shape
    n = h * w
    v2 = values.reshape(q, n)
    lab = np.asarray(labels).reshape(n)
    logp = _log_softmax(v2)
    idx = np.arange(n)
    value = -logp[lab, idx].sum() / n
    grad = np.exp(logp)
    grad[lab, idx] -= 1.0
    grad /= n
    return float(value), grad.reshape(q, h, w)


def con_loss(response, bounds="full"):
    """Spatial-continuity term: anisotropic L1 total variation of the
    response map, averaged over all scalar difference terms.

    bounds="full" covers every horizontally and vertically adjacent pair;
    bounds="paper" truncates both sums jointly at the next-to-last row and
    column (dropping last-row horizontal and last-column vertical pairs).
    """
    values = _values(response)
    dh = values[:, :, 1:] - values[:, :, :-1]
    dv = values[:, 1:, :] - values[:, :-1, :]
    if bounds == "paper":
        dh = dh[:, :-1, :]
        dv = dv[:, :, :-1]
    elif bounds != "full":
        raise ValueError("bounds must be 'full' or 'paper'")
    n_terms = dh.size + dv.size
    if n_terms == 0:
        return 0.0, np.zeros_like(values)
    value = (np.abs(dh).sum() + np.abs(dv).sum()) / n_terms
    grad = np.zeros_like(values)
    sh = np.sign(dh) / n_terms  # sign(0) = 0: deterministic L1 subgradient
    sv = np.sign(dv) / n_terms
    if bounds == "paper":
        grad[:, :-1, 1:] += sh
        grad[:, :-1, :-1] -= sh
        grad[:, 1:, :-1] += sv
        grad[:, :-1, :-1] -= sv
    else:
        grad[:, :, 1:] += sh
        grad[:, :, :-1] -= sh
        grad[:, 1:, :] += sv
        grad[:, :-1, :] -= sv
    return float(value), grad


def scr_loss(response, scribbles):
    """Scribble term: partial cross entropy over the scribbled pixels only.

    Averages over the scribbled-pixel count; with no scribbled pixel the
    value and gradient are both zero.
    """
    values = _values(response)
    q, h, w = values.shape
    if scribbles.mask.shape != (h, w):
        raise ValueError("scribble shape does not match the response map")
    mask = scribbles.mask.astype(bool).reshape(-1)
    count = int(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(values)
    lab = np.asarray(scribbles.labels).reshape(-1)[mask]
    if lab.min() < 0 or lab.max() >= q:
        bad = np.argwhere(
            scribbles.mask.astype(bool)
            & ((scribbles.labels < 0) | (scribbles.labels >= q))
        )
        raise ValueError(
            f"scribble labels must lie in [0, {q}); offending pixels (y, x): "
            f"{bad[:10].tolist()}"
        )
    v2 = values.reshape(q, h * w)[:, mask]
    logp = _log_softmax(v2)
    idx = np.arange(count)
    value = -logp[lab, idx].sum() / count
    g = np.exp(logp)
    g[lab, idx] -= 1.0
    g /= count
    grad = np.zeros((q, h * w), dtype=values.dtype)
    grad[:, mask] = g
    return float(value), grad.reshape(q, h, w)


def total_loss(response, labels, scribbles=None, mu=5.0, nu=0.5, tv_bounds="full"):
    """Weighted combination sim + mu*con (+ nu*scr when scribbles are given)."""
    values = _values(response)
    sim, gsim = sim_loss(values, labels)
    con, gcon = con_loss(values, tv_bounds)
    grad = gsim + mu * gcon
    if scribbles is not None:
        scr, gscr = scr_loss(values, scribbles)
        grad += nu * gscr
        total = sim + mu * con + nu * scr
    else:
        scr = 0.0
        total = sim + mu * con
    return LossBreakdown(sim, con, scr, total, grad)
