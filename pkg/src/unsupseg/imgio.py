"""Raster I/O: input images, scribble maps, label maps, and the label
color palette.

Supported formats: PNG via Pillow (8-bit gray/RGB, 16-bit gray) and binary
PPM/PGM via a built-in codec (8- and 16-bit, big-endian samples per the
Netpbm convention). Label maps persist as 16-bit single-channel rasters.
"""

from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .losses import Scribbles

_PNM_SUFFIXES = {".ppm", ".pgm", ".pnm"}


# ---------------------------------------------------------------------------
# PPM / PGM codec


def _read_pnm(data, path):
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in b"56":
        raise OSError(f"{path}: not a binary PGM/PPM file")
    channels = 3 if data[1:2] == b"6" else 1
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise OSError(f"{path}: truncated PNM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if not 0 < maxval < 65536:
        raise OSError(f"{path}: bad PNM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raw.size < count:
        raise OSError(f"{path}: truncated PNM pixel data")
    if channels == 1:
        arr = raw.reshape(height, width)
    else:
        arr = raw.reshape(height, width, 3)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def _write_pnm(path, arr, maxval):
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    magic = b"P5" if channels == 1 else b"P6"
    height, width = arr.shape[:2]
    header = magic + b"\n%d %d\n%d\n" % (width, height, maxval)
    data = arr.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(header + data)


# ---------------------------------------------------------------------------
# Images


def load_image(path):
    """Load an RGB image as a (3, H, W) float32 array scaled to [0, 1].

    Grayscale inputs are replicated to 3 channels; values are divided by the
    bit-depth maximum (255 or 65535).
    """
    path = Path(path)
    try:
        if path.suffix.lower() in _PNM_SUFFIXES:
            arr, maxval = _read_pnm(path.read_bytes(), path)
        else:
            with PilImage.open(path) as im:
                if im.mode in ("I", "I;16"):
                    arr = np.asarray(im.convert("I"), dtype=np.uint16)
                    maxval = 65535
                elif im.mode == "L":
                    arr = np.asarray(im, dtype=np.uint8)
                    maxval = 255
                else:
                    arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
                    maxval = 255
    except FileNotFoundError:
        raise OSError(f"cannot read image: {path}") from None
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from None
    arr = arr.astype(np.float32) / maxval
    if arr.ndim == 2:
        arr = np.repeat(arr[None, :, :], 3, axis=0)
    else:
        arr = arr.transpose(2, 0, 1)
    return np.ascontiguousarray(arr)


def save_image(path, image):
    """Write a (3, H, W) float array in [0, 1] as an 8-bit raster."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    path = Path(path)
    if path.suffix.lower() in _PNM_SUFFIXES:
        _write_pnm(path, data, 255)
    else:
        PilImage.fromarray(data).save(path)


# ---------------------------------------------------------------------------
# Scribbles


def load_scribbles(path, max_labels):
    """Load a scribble map from a single-channel raster.

    Value 255 marks an unscribbled pixel; values 0..max_labels-1 are scribble
    labels. Anything else is rejected with the offending pixel positions.
    """
    path = Path(path)
    if path.suffix.lower() in _PNM_SUFFIXES:
        arr, _ = _read_pnm(path.read_bytes(), path)
    else:
        with PilImage.open(path) as im:
            if im.mode not in ("L", "I", "I;16", "P"):
                raise ValueError(f"{path}: scribble raster must be single-channel")
            arr = np.asarray(im.convert("I"))
    if arr.ndim != 2:
        raise ValueError(f"{path}: scribble raster must be single-channel")
    arr = arr.astype(np.int32)
    mask = (arr != 255).astype(np.uint8)
    bad = (mask == 1) & ((arr < 0) | (arr >= max_labels))
    if bad.any():
        positions = np.argwhere(bad)[:10].tolist()
        raise ValueError(
            f"{path}: scribble values must be 255 or < {max_labels}; "
            f"offending pixels (y, x): {positions}"
        )
    labels = np.where(mask == 1, arr, 0).astype(np.int32)
    return Scribbles(mask=mask, labels=labels)


# ---------------------------------------------------------------------------
# Label maps and palette


def label_color(label):
    """Deterministic RGB for a label id via an integer hash.

    h = (label * 2654435761 + 0x9E3779B9) mod 2^32, then h ^= h >> 13,
    h = h * 0x85EBCA6B mod 2^32, h ^= h >> 16; the low 24 bits are (R, G, B).
    """
    h = (int(label) * 2654435761 + 0x9E3779B9) & 0xFFFFFFFF
    h ^= h >> 13
    h = (h * 0x85EBCA6B) & 0xFFFFFFFF
    h ^= h >> 16
    return ((h >> 16) & 0xFF, (h >> 8) & 0xFF, h & 0xFF)


def colorize_labels(labels):
    """Map a label grid to an (H, W, 3) uint8 image with the fixed palette."""
    labels = np.asarray(labels, dtype=np.uint64)
    h = (labels * np.uint64(2654435761) + np.uint64(0x9E3779B9)) & np.uint64(0xFFFFFFFF)
    h ^= h >> np.uint64(13)
    h = (h * np.uint64(0x85EBCA6B)) & np.uint64(0xFFFFFFFF)
    h ^= h >> np.uint64(16)
    rgb = np.empty(labels.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = (h >> np.uint64(16)) & np.uint64(0xFF)
    rgb[..., 1] = (h >> np.uint64(8)) & np.uint64(0xFF)
    rgb[..., 2] = h & np.uint64(0xFF)
    return rgb


def save_labelmap(labels, raw_path, viz_path=None):
    """Persist a label map: a lossless 16-bit single-channel raster at
    raw_path and, optionally, a palette-colored 8-bit RGB image at viz_path."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= 65536:
        raise ValueError("label values must fit in 16 bits")
    raw = labels.astype(np.uint16)
    raw_path = Path(raw_path)
    if raw_path.suffix.lower() in _PNM_SUFFIXES:
        _write_pnm(raw_path, raw, 65535)
    else:
        PilImage.fromarray(raw).save(raw_path)
    if viz_path is not None:
        viz = colorize_labels(labels)
        viz_path = Path(viz_path)
        if viz_path.suffix.lower() in _PNM_SUFFIXES:
            _write_pnm(viz_path, viz, 255)
        else:
            PilImage.fromarray(viz).save(viz_path)


def load_labelmap(path):
    """Read a label map written by save_labelmap back as an (H, W) int32 grid."""
    path = Path(path)
    if path.suffix.lower() in _PNM_SUFFIXES:
        arr, _ = _read_pnm(path.read_bytes(), path)
    else:
        with PilImage.open(path) as im:
            arr = np.asarray(im.convert("I"))
    if arr.ndim != 2:
        raise OSError(f"{path}: label map must be single-channel")
    return arr.astype(np.int32)
