"""Core data model: spectra, abundance labels, datasets, splits, and metrics.

A sample couples one pixel spectrum (reflectance per band) with a label
giving the sub-pixel fractions of the three surface classes.  Labels live
on the probability simplex: each fraction is in [0, 1] and the three sum
to one.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CLASS_NAMES",
    "LABEL_SUM_TOLERANCE",
    "DataFormatError",
    "AbundanceVector",
    "LabeledSample",
    "Dataset",
    "FoldPlan",
    "load_labeled_csv",
    "save_labeled_csv",
    "make_folds",
    "train_val_split",
    "rmse",
    "validate_spectrum",
]

CLASS_NAMES = ("healthy", "affected", "dead")

#: Maximum |sum - 1| accepted for raw label triples before renormalization.
LABEL_SUM_TOLERANCE = 1e-6

#: Invariant tolerance for stored abundance vectors.
_SIMPLEX_ATOL = 1e-9


class DataFormatError(ValueError):
    """An input file violates its declared on-disk format."""


def validate_spectrum(values: np.ndarray, band_count: int | None = None) -> np.ndarray:
    """Check that ``values`` is a finite 1-D spectrum; return it as float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"spectrum must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("spectrum must have at least one band")
    if not np.all(np.isfinite(arr)):
        raise ValueError("spectrum contains non-finite values")
    if band_count is not None and arr.size != band_count:
        raise ValueError(f"expected {band_count} bands, got {arr.size}")
    return arr


@dataclass(frozen=True)
class AbundanceVector:
    """Fractions of the three classes within one pixel; a point on the simplex."""

    healthy: float
    affected: float
    dead: float

    def __post_init__(self) -> None:
        vals = (self.healthy, self.affected, self.dead)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("abundance fractions must be finite")
        if any(v < -_SIMPLEX_ATOL or v > 1.0 + _SIMPLEX_ATOL for v in vals):
            raise ValueError(f"abundance fractions must lie in [0, 1], got {vals}")
        if abs(sum(vals) - 1.0) > _SIMPLEX_ATOL:
            raise ValueError(f"abundance fractions must sum to 1, got sum {sum(vals)!r}")

    @classmethod
    def from_raw(
        cls, values, tolerance: float = LABEL_SUM_TOLERANCE
    ) -> "AbundanceVector":
        """Validate a raw ``(healthy, affected, dead)`` triple and renormalize.

        Raw triples whose sum deviates from one by more than ``tolerance``
        are rejected; smaller deviations are silently renormalized so that
        stored labels always satisfy the simplex invariant.  Triples already
        within the invariant tolerance are kept bit-for-bit.
        """
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (3,):
            raise ValueError(f"expected 3 abundance fractions, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("abundance fractions must be finite")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError(f"abundance fractions must lie in [0, 1], got {arr.tolist()}")
        total = float(arr.sum())
        if abs(total - 1.0) > tolerance:
            raise ValueError(
                f"abundance fractions must sum to 1 within {tolerance:g}, got {total!r}"
            )
        if abs(total - 1.0) > _SIMPLEX_ATOL:
            arr = arr / total
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.healthy, self.affected, self.dead], dtype=np.float64)


@dataclass(frozen=True)
class LabeledSample:
    """One pixel spectrum with its abundance label.

    ``spectrum`` is treated as immutable after construction.
    """

    spectrum: np.ndarray
    label: AbundanceVector
    sample_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "spectrum", validate_spectrum(self.spectrum))


@dataclass
class Dataset:
    """Labeled samples plus an unlabeled spectrum pool on a shared band grid."""

    band_count: int
    labeled: list[LabeledSample] = field(default_factory=list)
    unlabeled: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self) -> None:
        if self.band_count < 1:
            raise ValueError("band_count must be positive")
        for sample in self.labeled:
            if sample.spectrum.size != self.band_count:
                raise ValueError(
                    f"sample {sample.sample_id!r} has {sample.spectrum.size} bands, "
                    f"expected {self.band_count}"
                )
        self.unlabeled = np.asarray(self.unlabeled, dtype=np.float64)
        if self.unlabeled.size == 0:
            self.unlabeled = np.zeros((0, self.band_count))
        if self.unlabeled.ndim != 2 or self.unlabeled.shape[1] != self.band_count:
            raise ValueError(
                f"unlabeled pool must be (n, {self.band_count}), "
                f"got {self.unlabeled.shape}"
            )
        if not np.all(np.isfinite(self.unlabeled)):
            raise ValueError("unlabeled pool contains non-finite values")

    @property
    def labeled_count(self) -> int:
        return len(self.labeled)

    def labeled_matrix(self) -> np.ndarray:
        """Stack labeled spectra into an ``(n, band_count)`` matrix."""
        if not self.labeled:
            return np.zeros((0, self.band_count))
        return np.stack([s.spectrum for s in self.labeled])

    def label_matrix(self) -> np.ndarray:
        """Stack labels into an ``(n, 3)`` matrix ordered like CLASS_NAMES."""
        if not self.labeled:
            return np.zeros((0, 3))
        return np.stack([s.label.as_array() for s in self.labeled])


def _expected_header(band_count: int, with_id: bool) -> list[str]:
    head = ["id"] if with_id else []
    return head + [f"band_{i}" for i in range(band_count)] + list(CLASS_NAMES)


def load_labeled_csv(path) -> Dataset:
    """Read a labeled-sample CSV into a Dataset (labeled part only).

    The header must be ``band_0,...,band_{B-1},healthy,affected,dead`` with
    an optional leading ``id`` column.  Band count is inferred from the
    header.  Sample ids default to the zero-based row order when the file
    has no id column.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        with_id = bool(header) and header[0] == "id"
        band_count = len(header) - len(CLASS_NAMES) - (1 if with_id else 0)
        if band_count < 1 or header != _expected_header(band_count, with_id):
            raise DataFormatError(
                f"{path}: malformed header; expected "
                "[id,]band_0,...,band_{B-1},healthy,affected,dead"
            )
        width = len(header)
        samples: list[LabeledSample] = []
        for row_num, row in enumerate(reader):
            if len(row) != width:
                raise DataFormatError(
                    f"{path}: row {row_num} has {len(row)} fields, expected {width}"
                )
            fields = row[1:] if with_id else row
            try:
                values = np.array([float(v) for v in fields], dtype=np.float64)
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {row_num}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise DataFormatError(f"{path}: row {row_num}: non-finite value")
            spectrum = values[:band_count]
            try:
                label = AbundanceVector.from_raw(values[band_count:])
            except ValueError as exc:
                raise DataFormatError(f"{path}: row {row_num}: {exc}") from None
            sample_id = row[0] if with_id else str(row_num)
            samples.append(LabeledSample(spectrum, label, sample_id))
    return Dataset(band_count=band_count, labeled=samples)


def save_labeled_csv(path, dataset: Dataset, write_ids: bool = False) -> None:
    """Write the labeled part of ``dataset`` as CSV (round-trips exactly).

    Values are written with ``repr`` so that load-after-save reproduces
    every float bit-for-bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(dataset.band_count, write_ids))
        for sample in dataset.labeled:
            row = [sample.sample_id] if write_ids else []
            row += [repr(float(v)) for v in sample.spectrum]
            row += [repr(float(v)) for v in sample.label.as_array()]
            writer.writerow(row)


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of ``n`` samples to ``k`` cross-validation folds."""

    k: int
    assignments: np.ndarray  # (n,) ints in [0, k)

    def __post_init__(self) -> None:
        arr = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", arr)
        if self.k < 2:
            raise ValueError("need at least 2 folds")
        if arr.ndim != 1 or arr.size < self.k:
            raise ValueError("every fold must receive at least one sample")
        if arr.min() < 0 or arr.max() >= self.k:
            raise ValueError("fold assignments out of range")

    @property
    def sample_count(self) -> int:
        return int(self.assignments.size)

    def val_indices(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check_fold(fold)
        return np.flatnonzero(self.assignments != fold)

    def _check_fold(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise ValueError(f"fold {fold} out of range [0, {self.k})")


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Shuffle ``n`` indices with ``seed`` and stripe them over ``k`` folds.

    Striping a shuffled permutation gives fold sizes that differ by at
    most one and leaves every fold non-empty whenever ``k <= n``.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"cannot split {n} samples into {k} non-empty folds")
    from .rng import substream

    order = substream(seed, "folds").permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[order] = np.arange(n) % k
    return FoldPlan(k=k, assignments=assignments)


def train_val_split(
    n: int, ratio: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle ``n`` indices and split them ``ratio`` / ``1 - ratio``.

    The training share is rounded half-up, so a 70/30 split of 10 samples
    yields exactly 7 training indices.  An empty validation side is legal
    but triggers a warning.
    """
    if n < 1:
        raise ValueError("need at least one sample to split")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"split ratio must be in (0, 1], got {ratio}")
    from .rng import substream

    order = substream(seed, "split").permutation(n)
    n_train = int(np.floor(n * ratio + 0.5))
    n_train = min(max(n_train, 1), n)
    train, val = order[:n_train], order[n_train:]
    if val.size == 0:
        warnings.warn("validation split is empty", stacklevel=2)
    return train, val


def rmse(predictions, truths) -> float:
    """Root-mean-square error between two equally long value sequences."""
    pred = np.asarray(predictions, dtype=np.float64).ravel()
    true = np.asarray(truths, dtype=np.float64).ravel()
    if pred.size != true.size:
        raise ValueError(f"length mismatch: {pred.size} vs {true.size}")
    if pred.size == 0:
        raise ValueError("rmse of empty sequences is undefined")
    return float(np.sqrt(np.mean((pred - true) ** 2)))
