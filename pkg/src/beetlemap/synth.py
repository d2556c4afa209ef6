"""Synthetic linear-mixture scenes with known abundance ground truth.

Each pixel spectrum is a convex combination of three endmember spectra
(healthy, affected, dead) plus white noise:

    x = a_h * e_h + a_a * e_a + a_d * e_d + n,   n ~ N(0, noise_std^2)

The endmembers are shaped so that class identity is carried at two
scales: a broad red-edge-like step whose height differs per class, and a
narrow high-resolution window in which a configurable share of the
class contrast is concentrated.  The narrow window is placed so that it
straddles a boundary of the default band aggregation and is phased to
average to zero within each aggregation window it touches — coarse band
averaging therefore erases exactly that part of the signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AbundanceVector, LabeledSample, validate_spectrum
from .rng import substream

__all__ = [
    "Endmember",
    "SceneConfig",
    "Scene",
    "BandAggregation",
    "default_aggregation",
    "make_endmembers",
    "generate_scene",
    "aggregate_spectrum",
    "aggregate_matrix",
    "sample_labeled",
    "DEFAULT_AGG_WINDOWS",
]

#: Number of coarse windows used by the default band aggregation.
DEFAULT_AGG_WINDOWS = 13

#: Width of the narrow discriminative window as a fraction of the band count.
_NARROW_WIDTH_FRACTION = 0.05

#: Relative band position of the red-edge-like step.
_STEP_CENTER = 0.5


@dataclass(frozen=True)
class Endmember:
    """A named pure-class spectrum."""

    name: str
    spectrum: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "spectrum", validate_spectrum(self.spectrum))


@dataclass(frozen=True)
class SceneConfig:
    """Geometry and sampling parameters for one synthetic scene."""

    height: int = 64
    width: int = 64
    bands: int = 234
    noise_std: float = 0.01
    abundance_prior: tuple[float, float, float] = (1.0, 1.0, 1.0)
    pure_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dimensions must be positive")
        if self.bands < 8:
            raise ValueError("need at least 8 bands")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if len(self.abundance_prior) != 3 or any(
            c <= 0 for c in self.abundance_prior
        ):
            raise ValueError("abundance_prior needs 3 positive concentrations")
        if not 0.0 <= self.pure_fraction <= 1.0:
            raise ValueError("pure_fraction must lie in [0, 1]")

    @property
    def pixel_count(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class Scene:
    """A reflectance cube and its per-pixel abundance ground truth."""

    cube: np.ndarray  # (height, width, bands)
    truth: np.ndarray  # (height, width, 3)
    endmembers: tuple[Endmember, Endmember, Endmember]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cube", np.asarray(self.cube, dtype=np.float64))
        object.__setattr__(self, "truth", np.asarray(self.truth, dtype=np.float64))
        if self.cube.ndim != 3 or self.truth.ndim != 3 or self.truth.shape[2] != 3:
            raise ValueError("cube must be (h, w, b) and truth (h, w, 3)")
        if self.cube.shape[:2] != self.truth.shape[:2]:
            raise ValueError(
                f"cube {self.cube.shape} and truth {self.truth.shape} disagree"
            )
        sums = self.truth.sum(axis=2)
        if np.any(self.truth < -1e-9) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("truth fractions must be non-negative and sum to 1")


@dataclass(frozen=True)
class BandAggregation:
    """Disjoint contiguous band windows averaged into coarse channels."""

    windows: tuple[tuple[int, int], ...]  # half-open (start, end) pairs

    def __post_init__(self) -> None:
        if not self.windows:
            raise ValueError("aggregation needs at least one window")
        prev_end = 0
        for start, end in self.windows:
            if start != prev_end or end <= start:
                raise ValueError(f"windows must tile the band axis, got {self.windows}")
            prev_end = end

    @property
    def band_count(self) -> int:
        return self.windows[-1][1]

    @property
    def channel_count(self) -> int:
        return len(self.windows)


def default_aggregation(bands: int, channels: int = DEFAULT_AGG_WINDOWS) -> BandAggregation:
    """Split ``bands`` into ``channels`` near-equal contiguous windows."""
    if channels < 1 or channels > bands:
        raise ValueError(f"cannot split {bands} bands into {channels} windows")
    edges = np.linspace(0, bands, channels + 1).round().astype(int)
    return BandAggregation(tuple(zip(edges[:-1], edges[1:])))


def aggregate_spectrum(spectrum: np.ndarray, agg: BandAggregation) -> np.ndarray:
    """Average a spectrum within each aggregation window."""
    arr = validate_spectrum(spectrum, agg.band_count)
    return np.array([arr[s:e].mean() for s, e in agg.windows])


def aggregate_matrix(spectra: np.ndarray, agg: BandAggregation) -> np.ndarray:
    """Average each row of ``(n, bands)`` within each aggregation window."""
    arr = np.asarray(spectra, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != agg.band_count:
        raise ValueError(f"expected (n, {agg.band_count}) spectra, got {arr.shape}")
    return np.stack([arr[:, s:e].mean(axis=1) for s, e in agg.windows], axis=1)


def _logistic_step(t: np.ndarray, center: float, width: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-(t - center) / width))


def _gauss_bump(t: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def _zero_mean_pattern(length: int) -> np.ndarray:
    """A +1/-1 pattern of the given length whose mean is exactly zero."""
    pattern = np.zeros(length)
    half = length // 2
    pattern[:half] = 1.0
    pattern[length - half:] = -1.0
    return pattern


def _narrow_window(bands: int) -> tuple[int, int, int]:
    """Locate the narrow window ``[start, end)`` and the boundary it straddles."""
    width = max(2, int(np.floor(_NARROW_WIDTH_FRACTION * bands)))
    if bands >= 2 * DEFAULT_AGG_WINDOWS:
        agg = default_aggregation(bands)
        interior = np.array([s for s, _ in agg.windows[1:]])
    else:
        interior = np.array([bands // 2])
    target = 0.53 * bands
    boundary = int(interior[np.argmin(np.abs(interior - target))])
    left = min(width // 2, boundary)
    right = min(width - left, bands - boundary)
    return boundary - left, boundary + right, boundary


def make_endmembers(
    bands: int, seed: int, narrow_fraction: float = 1.0
) -> tuple[Endmember, Endmember, Endmember]:
    """Draw one healthy / affected / dead endmember triple.

    The healthy spectrum carries a strong reflectance step (a red-edge
    analogue); the dead spectrum is flat-to-rising with no step.  The
    affected spectrum is built as a point between them — which attenuates
    the step by 30-50 % and elevates the values just below it — plus an
    identity component of fixed energy that makes it a genuine third
    endmember.  ``narrow_fraction`` of that identity energy sits in a
    narrow window (at most 5 % of the bands) straddling a default
    aggregation boundary, phased to average to zero within each touched
    aggregation window; the rest is a broad shoulder bump.

    Consequence: under the default band aggregation the affected
    endmember collapses onto the healthy-dead segment up to the residual
    broad share, so with ``narrow_fraction`` near 1 coarse band averaging
    provably cannot separate an affected pixel from the matching
    healthy/dead mixture — while the full-resolution spectra stay
    linearly independent.

    Returns spectra bounded in [0, 1] with pairwise L2 distance > 0.5 for
    realistic band counts.
    """
    if bands < 8:
        raise ValueError("need at least 8 bands")
    if not 0.0 <= narrow_fraction <= 1.0:
        raise ValueError("narrow_fraction must lie in [0, 1]")
    rng = substream(seed, "endmembers")
    t = np.linspace(0.0, 1.0, bands)
    step = _logistic_step(t, _STEP_CENTER, 0.02)

    def wiggle() -> np.ndarray:
        amp = rng.uniform(0.005, 0.015)
        freq = rng.uniform(2.0, 5.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return amp * np.sin(2.0 * np.pi * freq * t + phase)

    step_height = rng.uniform(0.36, 0.42)
    mix_weight = rng.uniform(0.5, 0.7)  # step attenuation = 1 - mix_weight
    identity_scale = rng.uniform(0.16, 0.20)
    healthy = 0.10 + 0.04 * t + step_height * step + wiggle()
    dead = 0.14 + 0.30 * t + wiggle()

    start, end, boundary = _narrow_window(bands)
    narrow = np.zeros(bands)
    narrow[start:boundary] = _zero_mean_pattern(boundary - start)
    narrow[boundary:end] = -_zero_mean_pattern(end - boundary)
    narrow_norm = float(np.linalg.norm(narrow))
    bump = _gauss_bump(t, _STEP_CENTER - 0.10, 0.05)
    bump_norm = float(np.linalg.norm(bump))

    affected = mix_weight * healthy + (1.0 - mix_weight) * dead
    affected = affected + (
        identity_scale * np.sqrt(1.0 - narrow_fraction) / bump_norm
    ) * bump
    if narrow_norm > 0.0:
        affected = affected + (
            identity_scale * np.sqrt(narrow_fraction) / narrow_norm
        ) * narrow

    spectra = np.clip(np.stack([healthy, affected, dead]), 0.0, 1.0)
    names = ("healthy", "affected", "dead")
    return tuple(Endmember(n, s) for n, s in zip(names, spectra))


def generate_scene(
    config: SceneConfig,
    endmembers: tuple[Endmember, Endmember, Endmember] | None = None,
    narrow_fraction: float = 1.0,
) -> Scene:
    """Render a scene: draw abundances, mix endmembers, add noise.

    Abundances follow a Dirichlet prior; ``pure_fraction`` of the pixels
    are overwritten with one-hot abundances, split evenly across the
    three classes.  The cube is clamped to [0, 1.2] after noise.
    """
    if endmembers is None:
        endmembers = make_endmembers(config.bands, config.seed, narrow_fraction)
    basis = np.stack([e.spectrum for e in endmembers])
    if basis.shape != (3, config.bands):
        raise ValueError(
            f"endmembers must be 3 spectra of {config.bands} bands, got {basis.shape}"
        )
    rng = substream(config.seed, "scene")
    n = config.pixel_count
    abundances = rng.dirichlet(config.abundance_prior, size=n)
    pure_count = int(round(config.pure_fraction * n))
    if pure_count > 0:
        pure_idx = rng.choice(n, size=pure_count, replace=False)
        for rank, idx in enumerate(pure_idx):
            abundances[idx] = 0.0
            abundances[idx, rank % 3] = 1.0
    cube = abundances @ basis
    if config.noise_std > 0:
        cube = cube + rng.normal(0.0, config.noise_std, size=cube.shape)
    cube = np.clip(cube, 0.0, 1.2)
    return Scene(
        cube=cube.reshape(config.height, config.width, config.bands),
        truth=abundances.reshape(config.height, config.width, 3),
        endmembers=tuple(endmembers),
    )


def sample_labeled(scene: Scene, count: int, seed: int) -> list[LabeledSample]:
    """Pick ``count`` distinct pixels and package them as labeled samples.

    Sample ids record the flat row-major pixel index.
    """
    h, w, _ = scene.cube.shape
    n = h * w
    if not 0 < count <= n:
        raise ValueError(f"cannot draw {count} labeled pixels from {n}")
    rng = substream(seed, "labels")
    flat_idx = rng.choice(n, size=count, replace=False)
    spectra = scene.cube.reshape(n, -1)
    truths = scene.truth.reshape(n, 3)
    return [
        LabeledSample(
            spectrum=spectra[i].copy(),
            label=AbundanceVector.from_raw(truths[i]),
            sample_id=str(int(i)),
        )
        for i in flat_idx
    ]
