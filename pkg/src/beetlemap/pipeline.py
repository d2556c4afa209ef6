"""End-to-end abundance estimation: encoder features -> SVR -> simplex.

Glues the trained encoder to three per-class support vector regressors
(features standardized in between), projects raw predictions back onto
the probability simplex, and provides the cross-validated comparison
against two baselines: SVR on raw full-resolution spectra and SVR on
coarsely band-aggregated spectra.  A fourth set of numbers — predicting
the training-fold mean label everywhere — is carried along as the floor
any learning method has to beat.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .contrastive import (
    AugmentationConfig,
    EpochRecord,
    FinetuneConfig,
    PretrainConfig,
    finetune,
    pretrain,
)
from .cubeio import open_binary
from .data import (
    CLASS_NAMES,
    AbundanceVector,
    DataFormatError,
    Dataset,
    LabeledSample,
    make_folds,
    rmse,
)
from .nn import EncoderModel, load_encoder, save_encoder
from .rng import derive_seed
from .svr import (
    DEFAULT_C_GRID,
    DEFAULT_SIGMA_GRID,
    GridCell,
    SvrConfig,
    SvrModel,
    grid_search,
    load_svr,
    save_svr,
    svr_fit,
    svr_predict_batch,
)
from .synth import BandAggregation, aggregate_matrix, default_aggregation

__all__ = [
    "METHOD_PROPOSED",
    "METHOD_RAW",
    "METHOD_AGGREGATED",
    "METHOD_FLOOR",
    "REPORT_METHODS",
    "Standardizer",
    "PipelineModel",
    "BaselineModel",
    "TrainedPipeline",
    "CrossValResult",
    "embed",
    "simplex_normalize",
    "predict_abundance",
    "predict_batch",
    "predict_map",
    "train_pipeline",
    "pretrain_encoder",
    "fit_heads",
    "select_svr_config",
    "train_baseline",
    "baseline_predict_batch",
    "run_cross_validation",
    "write_report_csv",
    "format_summary",
    "save_pipeline",
    "load_pipeline",
]

METHOD_PROPOSED = "model-features"
METHOD_RAW = "raw-hyperspectral"
METHOD_AGGREGATED = "raw-aggregated"
METHOD_FLOOR = "mean-predictor"

REPORT_METHODS = (METHOD_PROPOSED, METHOD_RAW, METHOD_AGGREGATED)

#: A clamped vector whose sum is this close to 1 is passed through unchanged.
_SIMPLEX_PASS_ATOL = 1e-9

_CONTAINER_MAGIC = b"ABPC"
_CONTAINER_VERSION = 1
_SECTION_ENCODER = b"ENCD"
_SECTION_STANDARDIZER = b"STDZ"
_SECTION_SVR = (b"SVRH", b"SVRA", b"SVRD")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map to zero mean and unit variance.

    Features with (near-)zero spread are passed through unscaled so the
    transform never divides by zero.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        arr = np.asarray(features, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"need a non-empty (n, dim) matrix, got {arr.shape}")
        std = arr.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=arr.mean(axis=0), std=std)

    def transform(self, features: np.ndarray) -> np.ndarray:
        arr = np.asarray(features, dtype=np.float64)
        return (arr - self.mean) / self.std


@dataclass
class PipelineModel:
    """Everything needed to map one spectrum to one abundance vector."""

    encoder: EncoderModel
    standardizer: Standardizer
    regressors: dict[str, SvrModel]

    def __post_init__(self) -> None:
        if tuple(self.regressors) != CLASS_NAMES:
            raise ValueError(
                f"regressors must be keyed {CLASS_NAMES}, got {tuple(self.regressors)}"
            )


@dataclass
class BaselineModel:
    """SVR on raw spectra (full resolution, or coarsely band-aggregated)."""

    mode: str
    standardizer: Standardizer
    regressors: dict[str, SvrModel]
    aggregation: BandAggregation | None = None
    svr_choice: SvrConfig = SvrConfig()

    def __post_init__(self) -> None:
        if self.mode not in (METHOD_RAW, METHOD_AGGREGATED):
            raise ValueError(f"unknown baseline mode {self.mode!r}")
        if self.mode == METHOD_AGGREGATED and self.aggregation is None:
            raise ValueError("aggregated baseline needs a band aggregation")
        if tuple(self.regressors) != CLASS_NAMES:
            raise ValueError(
                f"regressors must be keyed {CLASS_NAMES}, got {tuple(self.regressors)}"
            )


def embed(encoder: EncoderModel, spectra: np.ndarray) -> np.ndarray:
    """Eval-mode embeddings for ``(n, bands)`` spectra.

    Samples are pushed through one at a time, so the result for any batch
    is bit-identical to stacking single-sample calls.
    """
    arr = np.asarray(spectra, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected (n, bands) spectra, got {arr.shape}")
    if arr.shape[0] == 0:
        return np.zeros((0, 16))
    rows = [
        encoder.forward(arr[i][None, None, :], train=False).embedding[0]
        for i in range(arr.shape[0])
    ]
    return np.stack(rows)


def simplex_normalize(values: np.ndarray) -> np.ndarray:
    """Project raw per-class predictions onto the probability simplex.

    Negative components clamp to zero, then the vector is rescaled to sum
    to one.  An all-zero (or all-negative) input maps to the uniform
    vector.  A clamped vector already summing to one within 1e-9 passes
    through bit-for-bit rather than being divided by its near-unit sum,
    which makes the map exactly idempotent; rescaling the input by any
    positive power of two leaves the output bit-identical.
    """
    arr = np.asarray(values, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != len(CLASS_NAMES):
        raise ValueError(f"expected (..., 3) values, got {np.shape(values)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot normalize non-finite values")
    out = np.maximum(arr, 0.0)
    sums = out.sum(axis=1)
    zero = sums == 0.0
    renorm = ~zero & (np.abs(sums - 1.0) > _SIMPLEX_PASS_ATOL)
    out[zero] = 1.0 / arr.shape[1]
    out[renorm] = out[renorm] / sums[renorm, None]
    return out[0] if squeeze else out


def predict_batch(model: PipelineModel, spectra: np.ndarray) -> np.ndarray:
    """Abundance predictions for ``(n, bands)`` spectra; rows on the simplex."""
    features = model.standardizer.transform(embed(model.encoder, spectra))
    raw = np.stack(
        [svr_predict_batch(model.regressors[name], features) for name in CLASS_NAMES],
        axis=1,
    )
    return simplex_normalize(raw)


def predict_abundance(model: PipelineModel, spectrum: np.ndarray) -> AbundanceVector:
    """Abundance prediction for a single spectrum."""
    arr = np.asarray(spectrum, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D spectrum, got shape {arr.shape}")
    row = predict_batch(model, arr[None, :])[0]
    return AbundanceVector(float(row[0]), float(row[1]), float(row[2]))


def predict_map(
    model: PipelineModel, cube: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """Predict a full ``(h, w, 3)`` abundance map from a ``(h, w, bands)`` cube.

    Masked-out pixels (mask value False) are written as the all-zero
    sentinel, which is distinguishable from any valid simplex triple.
    """
    arr = np.asarray(cube, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (h, w, bands) cube, got {arr.shape}")
    h, w, bands = arr.shape
    flat = arr.reshape(h * w, bands)
    if mask is None:
        keep = np.ones(h * w, dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.shape != (h, w):
            raise ValueError(f"mask shape {mask.shape} does not match cube {arr.shape[:2]}")
        keep = mask.reshape(h * w).astype(bool)
    out = np.zeros((h * w, 3))
    if keep.any():
        out[keep] = predict_batch(model, flat[keep])
    return out.reshape(h, w, 3)


def select_svr_config(
    features: np.ndarray,
    labels: np.ndarray,
    base: SvrConfig,
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    k: int = 3,
    seed: int = 0,
) -> tuple[SvrConfig, list[GridCell]]:
    """Choose one ``(c, sigma)`` shared by all three class regressors.

    Each grid cell is scored per class by k-fold RMSE and the three
    scores are averaged; ties resolve to the smallest ``c``, then the
    smallest ``sigma`` (cells are visited in ascending order and compared
    strictly).
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[1] != len(CLASS_NAMES):
        raise ValueError(f"labels must be (n, 3), got {labels.shape}")
    tables = [
        grid_search(features, labels[:, col], base, c_grid, sigma_grid, k, seed)[1]
        for col in range(len(CLASS_NAMES))
    ]
    combined: list[GridCell] = []
    best: GridCell | None = None
    for cells in zip(*tables):
        c, sigma = cells[0].c, cells[0].sigma
        score = float(np.mean([cell.mean_rmse for cell in cells]))
        merged = GridCell(c, sigma, score)
        combined.append(merged)
        if best is None or merged.mean_rmse < best.mean_rmse:
            best = merged
    return replace(base, c=best.c, sigma=best.sigma), combined


def _fit_regressors(
    features: np.ndarray, labels: np.ndarray, cfg: SvrConfig
) -> dict[str, SvrModel]:
    return {
        name: svr_fit(features, labels[:, col], cfg)
        for col, name in enumerate(CLASS_NAMES)
    }


def pretrain_encoder(
    dataset: Dataset,
    pre_cfg: PretrainConfig,
    aug_cfg: AugmentationConfig,
    seed: int,
) -> tuple[EncoderModel, list[EpochRecord]]:
    """Initialize and self-supervise an encoder on the unlabeled pool.

    All stage randomness (weight init, shuffles, augmentations) derives
    from ``seed``; labels are never consulted.
    """
    model = EncoderModel.initialize(dataset.band_count, derive_seed(seed, "init"))
    aug = replace(aug_cfg, seed=derive_seed(seed, "pretrain"))
    history = pretrain(model, dataset.unlabeled, pre_cfg, aug)
    return model, history


def fit_heads(
    encoder: EncoderModel,
    samples: list[LabeledSample],
    ft_cfg: FinetuneConfig,
    svr_base: SvrConfig,
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    inner_folds: int = 3,
    seed: int = 0,
) -> tuple["PipelineModel", list[EpochRecord], SvrConfig]:
    """Fine-tune a copy of ``encoder`` and fit the regression stage.

    The encoder trunk is cloned and left frozen (only the projection head
    moves); embeddings of the training samples are standardized, a shared
    ``(c, sigma)`` is picked by inner cross-validation when the grid has
    more than one cell, and one SVR per class is fit.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 labeled samples")
    model = encoder.clone()
    spectra = np.stack([s.spectrum for s in samples])
    labels = np.stack([s.label.as_array() for s in samples])
    ft_history = finetune(model, spectra, labels, ft_cfg)
    features = embed(model, spectra)
    standardizer = Standardizer.fit(features)
    scaled = standardizer.transform(features)
    if len(c_grid) * len(sigma_grid) > 1 and len(samples) >= max(2, inner_folds):
        chosen, _ = select_svr_config(
            scaled, labels, svr_base, c_grid, sigma_grid, inner_folds, seed
        )
    else:
        chosen = svr_base
    regressors = _fit_regressors(scaled, labels, chosen)
    return PipelineModel(model, standardizer, regressors), ft_history, chosen


@dataclass
class TrainedPipeline:
    """Everything produced by one full training run."""

    model: PipelineModel
    pretrain_history: list[EpochRecord]
    finetune_history: list[EpochRecord]
    svr_choice: SvrConfig


def train_pipeline(
    dataset: Dataset,
    pre_cfg: PretrainConfig = PretrainConfig(),
    ft_cfg: FinetuneConfig = FinetuneConfig(),
    aug_cfg: AugmentationConfig = AugmentationConfig(),
    svr_base: SvrConfig = SvrConfig(),
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    inner_folds: int = 3,
    seed: int = 0,
) -> TrainedPipeline:
    """Run all training stages on one dataset; deterministic per seed."""
    encoder, pre_history = pretrain_encoder(dataset, pre_cfg, aug_cfg, seed)
    model, ft_history, chosen = fit_heads(
        encoder, dataset.labeled, ft_cfg, svr_base, c_grid, sigma_grid,
        inner_folds, derive_seed(seed, "grid"),
    )
    return TrainedPipeline(model, pre_history, ft_history, chosen)


def train_baseline(
    samples: list[LabeledSample],
    mode: str,
    svr_base: SvrConfig,
    aggregation: BandAggregation | None = None,
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    inner_folds: int = 3,
    seed: int = 0,
) -> BaselineModel:
    """Fit an SVR baseline on raw spectra features (full or aggregated)."""
    if len(samples) < 2:
        raise ValueError("need at least 2 labeled samples")
    spectra = np.stack([s.spectrum for s in samples])
    labels = np.stack([s.label.as_array() for s in samples])
    if mode == METHOD_AGGREGATED:
        if aggregation is None:
            aggregation = default_aggregation(spectra.shape[1])
        features = aggregate_matrix(spectra, aggregation)
    elif mode == METHOD_RAW:
        features = spectra
    else:
        raise ValueError(f"unknown baseline mode {mode!r}")
    standardizer = Standardizer.fit(features)
    scaled = standardizer.transform(features)
    if len(c_grid) * len(sigma_grid) > 1 and len(samples) >= max(2, inner_folds):
        chosen, _ = select_svr_config(
            scaled, labels, svr_base, c_grid, sigma_grid, inner_folds, seed
        )
    else:
        chosen = svr_base
    regressors = _fit_regressors(scaled, labels, chosen)
    return BaselineModel(
        mode=mode, standardizer=standardizer, regressors=regressors,
        aggregation=aggregation if mode == METHOD_AGGREGATED else None,
        svr_choice=chosen,
    )


def baseline_predict_batch(model: BaselineModel, spectra: np.ndarray) -> np.ndarray:
    """Baseline abundance predictions for ``(n, bands)`` spectra."""
    arr = np.asarray(spectra, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected (n, bands) spectra, got {arr.shape}")
    features = arr if model.mode == METHOD_RAW else aggregate_matrix(arr, model.aggregation)
    scaled = model.standardizer.transform(features)
    raw = np.stack(
        [svr_predict_batch(model.regressors[name], scaled) for name in CLASS_NAMES],
        axis=1,
    )
    return simplex_normalize(raw)


@dataclass
class CrossValResult:
    """Per-fold, per-class RMSE for every method, plus training artifacts."""

    k: int
    fold_rmse: dict[str, np.ndarray]  # method -> (k, 3), columns = CLASS_NAMES
    encoder: EncoderModel
    pretrain_history: list[EpochRecord]
    finetune_histories: list[list[EpochRecord]] = field(default_factory=list)
    svr_choices: dict[str, list[SvrConfig]] = field(default_factory=dict)

    def class_means(self, method: str) -> np.ndarray:
        return self.fold_rmse[method].mean(axis=0)

    def grand_mean(self, method: str) -> float:
        return float(self.fold_rmse[method].mean())


def run_cross_validation(
    dataset: Dataset,
    pre_cfg: PretrainConfig = PretrainConfig(),
    ft_cfg: FinetuneConfig = FinetuneConfig(),
    aug_cfg: AugmentationConfig = AugmentationConfig(),
    svr_base: SvrConfig = SvrConfig(),
    c_grid: tuple[float, ...] = DEFAULT_C_GRID,
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID,
    k: int = 5,
    inner_folds: int = 3,
    aggregation: BandAggregation | None = None,
    seed: int = 0,
) -> CrossValResult:
    """k-fold comparison of the proposed pipeline against the baselines.

    The self-supervised stage runs once on the unlabeled pool (it never
    sees labels, so it is shared across folds); fine-tuning, grid search,
    and regression are redone inside every fold on training data only.
    Hyperparameter grids are scored by inner cross-validation within the
    training fold.  Deterministic for a fixed (dataset, config, seed).
    """
    n = dataset.labeled_count
    folds = make_folds(n, k, seed)
    if aggregation is None:
        aggregation = default_aggregation(dataset.band_count)
    encoder, pre_history = pretrain_encoder(dataset, pre_cfg, aug_cfg, seed)
    spectra = dataset.labeled_matrix()
    labels = dataset.label_matrix()
    fold_rmse = {
        method: np.zeros((k, 3))
        for method in (*REPORT_METHODS, METHOD_FLOOR)
    }
    finetune_histories: list[list[EpochRecord]] = []
    svr_choices: dict[str, list[SvrConfig]] = {m: [] for m in REPORT_METHODS}
    for fold in range(k):
        train_idx = folds.train_indices(fold)
        val_idx = folds.val_indices(fold)
        train_samples = [dataset.labeled[i] for i in train_idx]
        val_x, val_y = spectra[val_idx], labels[val_idx]

        model, ft_history, chosen = fit_heads(
            encoder, train_samples, ft_cfg, svr_base, c_grid, sigma_grid,
            inner_folds, derive_seed(seed, "grid", fold),
        )
        finetune_histories.append(ft_history)
        svr_choices[METHOD_PROPOSED].append(chosen)
        preds = predict_batch(model, val_x)
        fold_rmse[METHOD_PROPOSED][fold] = [
            rmse(preds[:, col], val_y[:, col]) for col in range(3)
        ]

        for method in (METHOD_RAW, METHOD_AGGREGATED):
            baseline = train_baseline(
                train_samples, method, svr_base, aggregation, c_grid,
                sigma_grid, inner_folds, derive_seed(seed, "grid", fold, method),
            )
            svr_choices[method].append(baseline.svr_choice)
            base_preds = baseline_predict_batch(baseline, val_x)
            fold_rmse[method][fold] = [
                rmse(base_preds[:, col], val_y[:, col]) for col in range(3)
            ]

        floor = labels[train_idx].mean(axis=0)
        fold_rmse[METHOD_FLOOR][fold] = [
            rmse(np.full(val_idx.size, floor[col]), val_y[:, col])
            for col in range(3)
        ]
    return CrossValResult(
        k=k,
        fold_rmse=fold_rmse,
        encoder=encoder,
        pretrain_history=pre_history,
        finetune_histories=finetune_histories,
        svr_choices=svr_choices,
    )


def write_report_csv(path, result: CrossValResult) -> None:
    """Write the cross-validation report.

    Leading comment lines record the mean-label floor; then one
    ``method,fold,class,rmse`` row per method/fold/class, followed by
    ``method,mean,...`` summary rows (per class plus overall).
    """
    lines = []
    floor_means = result.class_means(METHOD_FLOOR)
    for col, name in enumerate(CLASS_NAMES):
        lines.append(f"# {METHOD_FLOOR},{name},{floor_means[col]:.10f}")
    lines.append(f"# {METHOD_FLOOR},all,{result.grand_mean(METHOD_FLOOR):.10f}")
    lines.append("method,fold,class,rmse")
    for method in REPORT_METHODS:
        for fold in range(result.k):
            for col, name in enumerate(CLASS_NAMES):
                lines.append(
                    f"{method},{fold},{name},{result.fold_rmse[method][fold, col]:.10f}"
                )
    for method in REPORT_METHODS:
        means = result.class_means(method)
        for col, name in enumerate(CLASS_NAMES):
            lines.append(f"{method},mean,{name},{means[col]:.10f}")
        lines.append(f"{method},mean,all,{result.grand_mean(method):.10f}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def format_summary(result: CrossValResult) -> str:
    """Fixed-width table: one row per method, per-class columns plus mean."""
    width = max(len(m) for m in REPORT_METHODS)
    header = "method".ljust(width) + "".join(
        f"{name:>10}" for name in (*CLASS_NAMES, "mean")
    )
    rows = [header]
    for method in REPORT_METHODS:
        means = result.class_means(method)
        cells = "".join(f"{v:>10.4f}" for v in (*means, result.grand_mean(method)))
        rows.append(method.ljust(width) + cells)
    floor = result.class_means(METHOD_FLOOR)
    rows.append(
        f"({METHOD_FLOOR} floor: "
        + " ".join(f"{n}={v:.4f}" for n, v in zip(CLASS_NAMES, floor))
        + f" mean={result.grand_mean(METHOD_FLOOR):.4f})"
    )
    return "\n".join(rows)


def save_pipeline(path, model: PipelineModel) -> None:
    """Write a pipeline checkpoint: a small container with a table of contents.

    Sections: the encoder checkpoint, the standardizer, and the three
    per-class regressors, each stored with its own byte range.
    """
    sections: list[tuple[bytes, bytes]] = []
    buf = io.BytesIO()
    save_encoder(buf, model.encoder)
    sections.append((_SECTION_ENCODER, buf.getvalue()))
    mean = np.ascontiguousarray(model.standardizer.mean, dtype="<f8")
    std = np.ascontiguousarray(model.standardizer.std, dtype="<f8")
    sections.append((
        _SECTION_STANDARDIZER,
        struct.pack("<I", mean.size) + mean.tobytes() + std.tobytes(),
    ))
    for tag, name in zip(_SECTION_SVR, CLASS_NAMES):
        buf = io.BytesIO()
        save_svr(buf, model.regressors[name])
        sections.append((tag, buf.getvalue()))
    header_size = 4 + 4 + 4 + len(sections) * (4 + 8 + 8)
    with open(path, "wb") as fh:
        fh.write(_CONTAINER_MAGIC)
        fh.write(struct.pack("<II", _CONTAINER_VERSION, len(sections)))
        offset = header_size
        for tag, blob in sections:
            fh.write(tag + struct.pack("<QQ", offset, len(blob)))
            offset += len(blob)
        for _, blob in sections:
            fh.write(blob)


def load_pipeline(path) -> PipelineModel:
    """Read a checkpoint written by :func:`save_pipeline`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _CONTAINER_MAGIC:
        raise DataFormatError(f"{path}: not a pipeline checkpoint")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _CONTAINER_VERSION:
        raise DataFormatError(f"{path}: unsupported container version {version}")
    toc: dict[bytes, bytes] = {}
    pos = 12
    end = 12 + count * 20
    if len(raw) < end:
        raise DataFormatError(f"{path}: truncated table of contents")
    for _ in range(count):
        tag = raw[pos:pos + 4]
        offset, length = struct.unpack_from("<QQ", raw, pos + 4)
        if offset + length > len(raw):
            raise DataFormatError(f"{path}: section {tag!r} overruns the file")
        toc[tag] = raw[offset:offset + length]
        pos += 20
    needed = (_SECTION_ENCODER, _SECTION_STANDARDIZER, *_SECTION_SVR)
    missing = [t for t in needed if t not in toc]
    if missing:
        raise DataFormatError(f"{path}: missing sections {missing}")
    encoder = load_encoder(io.BytesIO(toc[_SECTION_ENCODER]))
    blob = toc[_SECTION_STANDARDIZER]
    (dim,) = struct.unpack_from("<I", blob, 0)
    if len(blob) != 4 + dim * 16:
        raise DataFormatError(f"{path}: malformed standardizer section")
    mean = np.frombuffer(blob, dtype="<f8", count=dim, offset=4).copy()
    std = np.frombuffer(blob, dtype="<f8", count=dim, offset=4 + dim * 8).copy()
    regressors = {
        name: load_svr(io.BytesIO(toc[tag]))
        for tag, name in zip(_SECTION_SVR, CLASS_NAMES)
    }
    return PipelineModel(
        encoder=encoder,
        standardizer=Standardizer(mean=mean, std=std),
        regressors=regressors,
    )
