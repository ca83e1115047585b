"""Binary persistence of trained network weights.

Layout: magic ``SGCW``, then u32 version (currently 1), u32 layer count M,
u32 feature dim p, u32 cluster dim q, followed by little-endian float32
buffers in the fixed order conv kernels/biases layer by layer, batch-norm
gamma/beta instances in forward order, classifier. Buffer shapes are implied
by the header, so a round trip is bit-exact.
"""

import struct
from pathlib import Path

import numpy as np

from .network import NetworkParams

MAGIC = b"SGCW"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class ModelFormatError(OSError):
    """Raised for bad magic/version, size mismatches, or truncation."""


def _buffer_shapes(layers, feat_dim, max_labels):
    shapes = []
    in_ch = 3
    for m in range(layers):
        shapes.append((f"conv_kernels[{m}]", (feat_dim, in_ch, 3, 3)))
        shapes.append((f"conv_biases[{m}]", (feat_dim,)))
        in_ch = feat_dim
    for i in range(layers):
        shapes.append((f"bn_gamma[{i}]", (feat_dim,)))
        shapes.append((f"bn_beta[{i}]", (feat_dim,)))
    shapes.append((f"bn_gamma[{layers}]", (max_labels,)))
    shapes.append((f"bn_beta[{layers}]", (max_labels,)))
    shapes.append(("classifier", (max_labels, feat_dim)))
    return shapes


def save_model(path, params):
    """Write network weights; momentum state is not persisted."""
    header = _HEADER.pack(
        MAGIC, VERSION, params.layers, params.feat_dim, params.max_labels
    )
    chunks = [header]
    # order matches _buffer_shapes: kernels/biases, then all gammas, betas
    # interleaved per instance, then classifier
    arrays = dict(params.trainable_arrays())
    for name, shape in _buffer_shapes(params.layers, params.feat_dim, params.max_labels):
        arr = arrays[name]
        if arr.shape != shape:
            raise ModelFormatError(f"{name} has shape {arr.shape}, expected {shape}")
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path):
    """Read a model file back into NetworkParams (momentum state zeroed)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, layers, feat_dim, max_labels = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    if layers < 1 or feat_dim < 1 or max_labels < 1:
        raise ModelFormatError(f"{path}: invalid header dims {(layers, feat_dim, max_labels)}")
    offset = _HEADER.size
    buffers = {}
    for name, shape in _buffer_shapes(layers, feat_dim, max_labels):
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(data):
            raise ModelFormatError(f"{path}: truncated while reading {name}")
        buffers[name] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float32)
        )
        offset = end
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes")
    params = NetworkParams(
        conv_kernels=[buffers[f"conv_kernels[{m}]"] for m in range(layers)],
        conv_biases=[buffers[f"conv_biases[{m}]"] for m in range(layers)],
        bn_gamma=[buffers[f"bn_gamma[{i}]"] for i in range(layers + 1)],
        bn_beta=[buffers[f"bn_beta[{i}]"] for i in range(layers + 1)],
        classifier=buffers["classifier"],
    )
    params.momentum_state = [np.zeros_like(a) for _, a in params.trainable_arrays()]
    return params
