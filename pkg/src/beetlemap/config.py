"""Flat ``key = value`` run configuration shared by all CLI commands.

Files hold one assignment per line; blank lines and lines starting with
``#`` are ignored.  Every key has a default, unknown keys are rejected,
and values are parsed to their declared types before any command does
work.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .contrastive import AugmentationConfig, FinetuneConfig, PretrainConfig
from .svr import SvrConfig
from .synth import SceneConfig

__all__ = ["RunConfig", "parse_flat_config", "load_run_config"]


def _parse_bool_free_int(text: str) -> int:
    return int(text, 10)


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


@dataclass
class RunConfig:
    """Every knob of the generate/train/evaluate workflow, with defaults.

    Defaults target the desk-scale synthetic benchmark: the pretraining
    pool is capped and the self-supervised schedule shortened so a full
    evaluation fits a small single-core budget.  Set ``pretrain_limit = 0``
    and raise ``epochs_self`` for full-length runs.
    """

    seed: int = 0
    # scene geometry and sampling
    height: int = 64
    width: int = 64
    bands: int = 234
    noise_std: float = 0.01
    prior: tuple[float, ...] = (1.0, 1.0, 1.0)
    pure_fraction: float = 0.2
    narrow_fraction: float = 1.0
    n_labeled: int = 40
    # self-supervised stage
    tau: float = 0.0866
    batch_size: int = 64
    epochs_self: int = 8
    lr_self: float = 0.0094
    wd_self: float = 0.0343
    pretrain_limit: int = 1024  # 0 disables the cap
    # augmentation
    alpha_min: float = 0.9
    alpha_max: float = 1.1
    sigma1: float = 0.01
    sigma2: float = 0.1
    num_knots: int = 8
    # label-guided head tuning
    label_threshold: float = 0.6  # config key: lambda
    epochs_ft: int = 100
    lr_ft: float = 0.0051
    wd_ft: float = 0.0066
    # evaluation protocol
    k: int = 5
    split: float = 0.7
    inner_folds: int = 3
    agg_windows: int = 13
    # regression stage
    svr_epsilon: float = 0.05
    svr_tol: float = 1e-3
    svr_max_passes: int = 10000
    c_grid: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    sigma_grid: tuple[float, ...] = (0.1, 0.3, 1.0, 3.0, 10.0)

    def scene_config(self) -> SceneConfig:
        return SceneConfig(
            height=self.height,
            width=self.width,
            bands=self.bands,
            noise_std=self.noise_std,
            abundance_prior=tuple(self.prior),
            pure_fraction=self.pure_fraction,
            seed=self.seed,
        )

    def aug_config(self) -> AugmentationConfig:
        return AugmentationConfig(
            alpha_range=(self.alpha_min, self.alpha_max),
            sigma1=self.sigma1,
            sigma2=self.sigma2,
            num_knots=self.num_knots,
            seed=self.seed,
        )

    def pretrain_config(self) -> PretrainConfig:
        return PretrainConfig(
            tau=self.tau,
            batch_size=self.batch_size,
            epochs=self.epochs_self,
            lr=self.lr_self,
            weight_decay=self.wd_self,
            max_samples=self.pretrain_limit if self.pretrain_limit > 0 else None,
        )

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(
            tau=self.tau,
            label_threshold=self.label_threshold,
            epochs=self.epochs_ft,
            lr=self.lr_ft,
            weight_decay=self.wd_ft,
        )

    def svr_config(self) -> SvrConfig:
        return SvrConfig(
            epsilon=self.svr_epsilon,
            tol=self.svr_tol,
            max_passes=self.svr_max_passes,
        )


#: config-file key -> (attribute, parser); keys default to the attribute name.
_KEY_ALIASES = {"lambda": "label_threshold"}

_TUPLE_FIELDS = {"prior", "c_grid", "sigma_grid"}


def _field_parsers() -> dict[str, tuple[str, object]]:
    parsers: dict[str, tuple[str, object]] = {}
    for f in fields(RunConfig):
        if f.name in _TUPLE_FIELDS:
            parsers[f.name] = (f.name, _parse_float_tuple)
        elif f.type in ("int",):
            parsers[f.name] = (f.name, _parse_bool_free_int)
        else:
            parsers[f.name] = (f.name, float)
    for key, attr in _KEY_ALIASES.items():
        parsers[key] = parsers.pop(attr)
    return parsers


_PARSERS = _field_parsers()


def parse_flat_config(text: str) -> dict[str, str]:
    """Split config text into a key -> raw-value dict.

    Raises on lines that are neither blank, a ``#`` comment, nor a single
    ``key = value`` assignment, and on duplicate keys.
    """
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ValueError(f"line {lineno}: empty key or value in {line!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_run_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus override assignments.

    Unknown keys and unparsable values are rejected with the offending
    key named.  ``overrides`` win over file values.
    """
    raw: dict[str, str] = {}
    if path is not None:
        with open(path, "r") as fh:
            raw = parse_flat_config(fh.read())
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    cfg = RunConfig()
    for key, value in raw.items():
        if key not in _PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        attr, parser = _PARSERS[key]
        try:
            setattr(cfg, attr, parser(value))
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from None
    return cfg
