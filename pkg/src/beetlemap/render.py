"""Render abundance maps to portable pixmap (P6) images.

Channel coloring: healthy -> green, affected -> red, dead -> blue.
Intensities are min/max normalized; several maps can share one scale so
side-by-side renders are comparable.
"""

from __future__ import annotations

import numpy as np

from .data import DataFormatError

__all__ = [
    "abundance_to_rgb",
    "joint_range",
    "write_ppm",
    "read_ppm",
]


def joint_range(maps: list[np.ndarray]) -> tuple[float, float]:
    """Global (min, max) over every value of every map."""
    if not maps:
        raise ValueError("need at least one map")
    lo = min(float(np.min(m)) for m in maps)
    hi = max(float(np.max(m)) for m in maps)
    return lo, hi


def abundance_to_rgb(
    amap: np.ndarray, value_range: tuple[float, float] | None = None
) -> np.ndarray:
    """Map an ``(h, w, 3)`` abundance array to an ``(h, w, 3)`` uint8 image.

    ``value_range`` overrides the map's own min/max (for joint scaling).
    A degenerate range renders as black.
    """
    arr = np.asarray(amap, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) abundance map, got {arr.shape}")
    lo, hi = value_range if value_range is not None else joint_range([arr])
    span = hi - lo
    if span < 1e-12:
        return np.zeros(arr.shape, dtype=np.uint8)
    scaled = np.clip(np.rint(255.0 * (arr - lo) / span), 0.0, 255.0).astype(np.uint8)
    rgb = np.empty_like(scaled)
    rgb[..., 0] = scaled[..., 1]  # affected -> red
    rgb[..., 1] = scaled[..., 0]  # healthy -> green
    rgb[..., 2] = scaled[..., 2]  # dead -> blue
    return rgb


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an ``(h, w, 3)`` uint8 image as a binary P6 pixmap."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 image, got {arr.shape} {arr.dtype}")
    h, w, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 pixmap written by :func:`write_ppm`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise DataFormatError(f"{path}: not a maxval-255 P6 pixmap")
    try:
        w, h = (int(v) for v in parts[1].split())
    except ValueError:
        raise DataFormatError(f"{path}: malformed P6 dimensions") from None
    payload = parts[3]
    if w < 1 or h < 1 or len(payload) != h * w * 3:
        raise DataFormatError(f"{path}: P6 payload does not match header")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()
