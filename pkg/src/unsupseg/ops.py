"""Differentiable array primitives with hand-derived gradients.

All image-like arrays are channel-first ``(C, H, W)``. Training code runs these
ops in float32; gradient checking runs the identical code in float64.
"""

from typing import NamedTuple

import numpy as np

# (dy, dx) window offsets of a 3x3 kernel, row-major
_OFFSETS = [(dy, dx) for dy in range(3) for dx in range(3)]


def _pad1(x, padding):
    if padding == "zero":
        c, h, w = x.shape
        xp = np.zeros((c, h + 2, w + 2), dtype=x.dtype)
        xp[:, 1 : h + 1, 1 : w + 1] = x
        return xp
    if padding == "replicate":
        return np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    raise ValueError(f"unknown padding mode {padding!r}")


def im2col3x3(x, padding="zero"):
    """Unfold a (C, H, W) array into (C*9, H*W) patch columns, padded by 1.

    Column layout: row c*9 + j holds window element j = dy*3 + dx of channel c,
    i.e. cols[c*9 + j, y*W + x] = x_padded[c, y + dy, x + dx].
    """
    c, h, w = x.shape
    xp = _pad1(x, padding)
    cols = np.empty((c, 9, h * w), dtype=x.dtype)
    for j, (dy, dx) in enumerate(_OFFSETS):
        cols[:, j, :] = xp[:, dy : dy + h, dx : dx + w].reshape(c, -1)
    return cols.reshape(c * 9, h * w)


def conv2d(x, kernels, bias, cols=None, padding="zero"):
    """3x3 convolution with stride 1 and padding 1 (spatial size preserved).

    out[o, y, x] = bias[o] + sum_{c,dy,dx} kernels[o, c, dy, dx] * x_pad[c, y+dy, x+dx]

    The border is zero-padded by default; padding="replicate" repeats the
    edge pixels instead, which keeps the output of a spatially constant
    input spatially constant. ``cols`` may carry a precomputed
    im2col3x3(x, padding) so a caller that also needs the backward pass
    unfolds the input only once.
    """
    c, h, w = x.shape
    o, kc = kernels.shape[:2]
    if kc != c:
        raise ValueError(f"kernels expect {kc} input channels, got {c}")
    if cols is None:
        cols = im2col3x3(x, padding)
    out = kernels.reshape(o, c * 9) @ cols
    out += bias[:, None]
    return out.reshape(o, h, w)


def conv2d_vjp(x, kernels, upstream, cols=None, padding="zero"):
    """Exact cotangents of conv2d: (grad_x, grad_kernels, grad_bias)."""
    c, h, w = x.shape
    o = kernels.shape[0]
    if cols is None:
        cols = im2col3x3(x, padding)
    up2 = upstream.reshape(o, h * w)
    grad_k = (up2 @ cols.T).reshape(kernels.shape)
    grad_b = up2.sum(axis=1)
    gcols = (kernels.reshape(o, c * 9).T @ up2).reshape(c, 9, h, w)
    gxp = np.zeros((c, h + 2, w + 2), dtype=upstream.dtype)
    for j, (dy, dx) in enumerate(_OFFSETS):
        gxp[:, dy : dy + h, dx : dx + w] += gcols[:, j]
    grad_x = gxp[:, 1 : h + 1, 1 : w + 1]
    if padding == "replicate":
        # fold the cotangents of the replicated border cells back into the
        # edge pixels they were copied from
        grad_x = grad_x.copy()
        grad_x[:, 0, :] += gxp[:, 0, 1 : w + 1]
        grad_x[:, -1, :] += gxp[:, h + 1, 1 : w + 1]
        grad_x[:, :, 0] += gxp[:, 1 : h + 1, 0]
        grad_x[:, :, -1] += gxp[:, 1 : h + 1, w + 1]
        grad_x[:, 0, 0] += gxp[:, 0, 0]
        grad_x[:, 0, -1] += gxp[:, 0, w + 1]
        grad_x[:, -1, 0] += gxp[:, h + 1, 0]
        grad_x[:, -1, -1] += gxp[:, h + 1, w + 1]
    elif padding != "zero":
        raise ValueError(f"unknown padding mode {padding!r}")
    return grad_x, grad_k, grad_b


def relu(x):
    return np.maximum(x, 0)


def relu_vjp(x, upstream):
    """Pass upstream where x > 0; the subgradient at exactly 0 is taken as 0."""
    return upstream * (x > 0)


class BnStats(NamedTuple):
    """Per-channel statistics saved by the batch-norm forward pass."""

    mean: np.ndarray
    inv_std: np.ndarray  # 1 / sqrt(var + eps)
    xhat: np.ndarray  # normalized input, same shape as the input


def batch_norm_channels(x, gamma, beta, eps=1e-5):
    """Normalize each channel over the H*W pixels of one image.

    The batch is the pixel set of a single image; the variance is biased
    (divisor H*W). Returns (out, stats) where stats feeds the vjp.
    """
    mean = x.mean(axis=(1, 2))
    var = x.var(axis=(1, 2))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
    out = gamma[:, None, None] * xhat + beta[:, None, None]
    return out, BnStats(mean, inv_std, xhat)


def batch_norm_channels_vjp(upstream, gamma, stats):
    """Exact cotangents of batch_norm_channels: (grad_x, grad_gamma, grad_beta).

    grad_x folds the dependence of the channel mean and variance on every
    pixel: (gamma * inv_std / N) * (N*u - sum(u) - xhat * sum(u * xhat)).
    """
    n = upstream.shape[1] * upstream.shape[2]
    grad_beta = upstream.sum(axis=(1, 2))
    grad_gamma = (upstream * stats.xhat).sum(axis=(1, 2))
    scale = (gamma * stats.inv_std / n)[:, None, None]
    grad_x = scale * (
        n * upstream - grad_beta[:, None, None] - stats.xhat * grad_gamma[:, None, None]
    )
    return grad_x, grad_gamma, grad_beta


def gradient_check(f, point, step=1e-3, rng=None):
    """Compare the analytic vjp of ``f`` against central finite differences.

    ``f`` maps a list of arrays to ``(output, vjp)`` where ``vjp(upstream)``
    returns one cotangent per input array. A fixed random unit cotangent u
    turns f into the scalar g(point) = <u, f(point)>; the analytic gradient
    vjp(u) is compared coordinate-wise against (g(x + h*e_i) - g(x - h*e_i)) / 2h.

    The input arrays are perturbed in place during probing and restored
    afterwards. Returns the maximum relative error over all coordinates,
    falling back to absolute error where both magnitudes are below 1e-8.

    Raises FloatingPointError when any probed evaluation produces a
    non-finite output, naming the offending coordinate.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    out, vjp = f(point)
    out = np.asarray(out)
    if not np.all(np.isfinite(out)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(out))[0])
        raise FloatingPointError(f"non-finite forward output at coordinate {bad}")
    u = rng.standard_normal(out.shape).astype(out.dtype)
    norm = np.linalg.norm(u.ravel())
    if norm > 0:
        u /= norm
    analytic = vjp(u)

    worst = 0.0
    for arr_index, arr in enumerate(point):
        flat = arr.reshape(-1)
        ana_flat = np.asarray(analytic[arr_index]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus = float(np.vdot(u, f(point)[0]))
            flat[j] = orig - step
            minus = float(np.vdot(u, f(point)[0]))
            flat[j] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise FloatingPointError(
                    f"non-finite output while probing input {arr_index} coordinate {j}"
                )
            numeric = (plus - minus) / (2.0 * step)
            ana = float(ana_flat[j])
            scale = max(abs(numeric), abs(ana))
            err = abs(numeric - ana) if scale < 1e-8 else abs(numeric - ana) / scale
            worst = max(worst, err)
    return worst
