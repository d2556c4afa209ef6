"""Binary I/O for hyperspectral cubes, abundance maps, and pixel masks.

All three formats share the same little-endian layout: a 4-byte magic,
three uint32 dimensions, then a packed payload.

=========  ========  =======================================================
magic      payload   contents
=========  ========  =======================================================
``HSCN``   float32   reflectance cube, pixel-major ``(height, width, bands)``
``HABN``   float32   abundance map, ``(height, width, 3)`` class channels
``HMSK``   uint8     pixel mask, ``(height, width)``; 0 = masked out
=========  ========  =======================================================
"""

from __future__ import annotations

import struct
from contextlib import nullcontext

import numpy as np

from .data import CLASS_NAMES, DataFormatError

__all__ = [
    "MAGIC_CUBE",
    "MAGIC_ABUNDANCE",
    "MAGIC_MASK",
    "open_binary",
    "save_cube",
    "load_cube",
    "save_abundance_map",
    "load_abundance_map",
    "save_mask",
    "load_mask",
    "flatten_cube",
]

MAGIC_CUBE = b"HSCN"
MAGIC_ABUNDANCE = b"HABN"
MAGIC_MASK = b"HMSK"

_HEADER = struct.Struct("<4sIII")


def open_binary(path_or_file, mode: str):
    """Open a path, or wrap an already-open binary file object.

    Lets the serializers below (and those in sibling modules) write
    either to a standalone file or into a section of a container.
    """
    if hasattr(path_or_file, "read" if "r" in mode else "write"):
        return nullcontext(path_or_file)
    return open(path_or_file, mode)


def _write(path, magic: bytes, dims: tuple[int, int, int], payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, *dims))
        fh.write(payload)


def _read(path, magic: bytes) -> tuple[tuple[int, int, int], bytes]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    found, *dims = _HEADER.unpack_from(raw)
    if found != magic:
        raise DataFormatError(
            f"{path}: bad magic {found!r}, expected {magic!r}"
        )
    if any(d < 1 for d in dims):
        raise DataFormatError(f"{path}: non-positive dimension in header {dims}")
    return tuple(dims), raw[_HEADER.size:]


def _check_payload(path, payload: bytes, expected: int) -> None:
    if len(payload) < expected:
        raise DataFormatError(
            f"{path}: truncated payload ({len(payload)} of {expected} bytes)"
        )
    if len(payload) > expected:
        raise DataFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after payload"
        )


def save_cube(path, cube: np.ndarray) -> None:
    """Write a ``(height, width, bands)`` reflectance cube as float32."""
    arr = np.asarray(cube, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"cube must be (height, width, bands), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cube contains non-finite values")
    h, w, b = arr.shape
    _write(path, MAGIC_CUBE, (h, w, b), arr.astype("<f4").tobytes())


def load_cube(path) -> np.ndarray:
    """Read an ``HSCN`` cube; returns float64 ``(height, width, bands)``."""
    (h, w, b), payload = _read(path, MAGIC_CUBE)
    _check_payload(path, payload, h * w * b * 4)
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: payload contains non-finite values")
    return arr.reshape(h, w, b)


def save_abundance_map(path, amap: np.ndarray) -> None:
    """Write a ``(height, width, 3)`` abundance map as float32."""
    arr = np.asarray(amap, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != len(CLASS_NAMES) or min(arr.shape[:2]) < 1:
        raise ValueError(f"abundance map must be (height, width, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("abundance map contains non-finite values")
    h, w, _ = arr.shape
    _write(path, MAGIC_ABUNDANCE, (h, w, 3), arr.astype("<f4").tobytes())


def load_abundance_map(path) -> np.ndarray:
    """Read an ``HABN`` map; returns float64 ``(height, width, 3)``."""
    (h, w, c), payload = _read(path, MAGIC_ABUNDANCE)
    if c != len(CLASS_NAMES):
        raise DataFormatError(f"{path}: expected 3 channels, header says {c}")
    _check_payload(path, payload, h * w * c * 4)
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: payload contains non-finite values")
    return arr.reshape(h, w, c)


def save_mask(path, mask: np.ndarray) -> None:
    """Write a boolean ``(height, width)`` mask; True marks active pixels."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise ValueError(f"mask must be (height, width), got {arr.shape}")
    h, w = arr.shape
    payload = (arr != 0).astype(np.uint8).tobytes()
    _write(path, MAGIC_MASK, (h, w, 1), payload)


def load_mask(path) -> np.ndarray:
    """Read an ``HMSK`` mask; returns a boolean array, True = active pixel."""
    (h, w, c), payload = _read(path, MAGIC_MASK)
    if c != 1:
        raise DataFormatError(f"{path}: mask header must declare 1 channel, got {c}")
    _check_payload(path, payload, h * w)
    arr = np.frombuffer(payload, dtype=np.uint8)
    if arr.max(initial=0) > 1:
        raise DataFormatError(f"{path}: mask bytes must be 0 or 1")
    return arr.reshape(h, w).astype(bool)


def flatten_cube(cube: np.ndarray) -> np.ndarray:
    """Reshape a ``(h, w, b)`` cube to ``(h * w, b)`` spectra, row-major."""
    arr = np.asarray(cube, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"cube must be 3-D, got shape {arr.shape}")
    return arr.reshape(-1, arr.shape[2])
