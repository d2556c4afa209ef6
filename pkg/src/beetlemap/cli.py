"""Command-line interface: generate, train, evaluate, predict-map, render-map.

Every command validates its configuration and inputs before touching the
filesystem, writes its declared outputs, and exits non-zero (with a
message on stderr) if anything fails.
"""

from __future__ import annotations

import csv
from pathlib import Path

import click
import numpy as np

from . import figures
from .config import RunConfig, load_run_config
from .contrastive import write_history_csv
from .cubeio import flatten_cube, load_cube, load_mask, save_abundance_map, save_cube
from .data import (
    CLASS_NAMES,
    Dataset,
    load_labeled_csv,
    rmse,
    save_labeled_csv,
    train_val_split,
)
from .pipeline import (
    fit_heads,
    format_summary,
    load_pipeline,
    predict_batch,
    predict_map,
    pretrain_encoder,
    run_cross_validation,
    save_pipeline,
    write_report_csv,
)
from .render import abundance_to_rgb, joint_range, write_ppm
from .rng import derive_seed
from .synth import default_aggregation, generate_scene, make_endmembers, sample_labeled

__all__ = ["main"]


def _load_config(config_path, seed) -> RunConfig:
    overrides = {} if seed is None else {"seed": str(seed)}
    try:
        return load_run_config(config_path, overrides)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc


def _fail(exc: Exception) -> "click.ClickException":
    return click.ClickException(str(exc))


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="Flat key = value config file.",
)
seed_option = click.option(
    "--seed", type=int, default=None, help="Override the config seed.",
)


@click.group()
def main() -> None:
    """Sub-pixel abundance mapping of healthy / affected / dead trees."""


@main.command("generate")
@config_option
@seed_option
@click.option("--out-dir", type=click.Path(file_okay=False), default=".",
              help="Directory for scene.hscn, truth.habn, labeled.csv, endmembers.csv.")
def cmd_generate(config_path, seed, out_dir) -> None:
    """Synthesize a scene cube, its ground truth, and a labeled subset."""
    cfg = _load_config(config_path, seed)
    try:
        scene_cfg = cfg.scene_config()
        endmembers = make_endmembers(cfg.bands, cfg.seed, cfg.narrow_fraction)
        scene = generate_scene(scene_cfg, endmembers)
        labeled = sample_labeled(scene, cfg.n_labeled, cfg.seed)
    except ValueError as exc:
        raise _fail(exc) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        save_cube(out / "scene.hscn", scene.cube)
        save_abundance_map(out / "truth.habn", scene.truth)
        save_labeled_csv(out / "labeled.csv",
                         Dataset(cfg.bands, labeled), write_ids=True)
        with open(out / "endmembers.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name"] + [f"band_{i}" for i in range(cfg.bands)])
            for em in scene.endmembers:
                writer.writerow([em.name] + [repr(float(v)) for v in em.spectrum])
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    for name in ("scene.hscn", "truth.habn", "labeled.csv", "endmembers.csv"):
        click.echo(f"wrote {out / name}")


def _load_dataset(cube_path, labeled_path) -> Dataset:
    labeled_ds = load_labeled_csv(labeled_path)
    cube = load_cube(cube_path)
    if cube.shape[2] != labeled_ds.band_count:
        raise ValueError(
            f"cube has {cube.shape[2]} bands but labeled samples have "
            f"{labeled_ds.band_count}"
        )
    return Dataset(
        band_count=labeled_ds.band_count,
        labeled=labeled_ds.labeled,
        unlabeled=flatten_cube(cube),
    )


@main.command("train")
@config_option
@seed_option
@click.option("--cube", "cube_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Scene cube (HSCN) used as the unlabeled pool.")
@click.option("--labeled", "labeled_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Labeled-sample CSV.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default="pipeline.abpc", help="Checkpoint output path.")
def cmd_train(config_path, seed, cube_path, labeled_path, out_path) -> None:
    """Train the full pipeline; write a checkpoint, histories, and curves."""
    cfg = _load_config(config_path, seed)
    try:
        pre_cfg, ft_cfg, aug_cfg = (
            cfg.pretrain_config(), cfg.finetune_config(), cfg.aug_config(),
        )
        svr_base = cfg.svr_config()
        dataset = _load_dataset(cube_path, labeled_path)
        train_idx, val_idx = train_val_split(
            dataset.labeled_count, cfg.split, cfg.seed
        )
        train_samples = [dataset.labeled[i] for i in train_idx]
        encoder, pre_history = pretrain_encoder(dataset, pre_cfg, aug_cfg, cfg.seed)
        model, ft_history, chosen = fit_heads(
            encoder, train_samples, ft_cfg, svr_base, cfg.c_grid,
            cfg.sigma_grid, cfg.inner_folds, derive_seed(cfg.seed, "grid"),
        )
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        save_pipeline(out, model)
        write_history_csv(out.parent / "pretrain_history.csv", pre_history)
        write_history_csv(out.parent / "finetune_history.csv", ft_history)
        figures.save_loss_curves(
            {"self-supervised": pre_history, "head-tuning": ft_history},
            out.parent / "loss_curves.png",
        )
        load_pipeline(out)  # read-back validation
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(f"wrote {out}")
    click.echo(f"wrote {out.parent / 'pretrain_history.csv'}")
    click.echo(f"wrote {out.parent / 'finetune_history.csv'}")
    click.echo(f"wrote {out.parent / 'loss_curves.png'}")
    click.echo(f"svr config: c={chosen.c:g} sigma={chosen.sigma:g}")
    if val_idx.size:
        val_x = np.stack([dataset.labeled[i].spectrum for i in val_idx])
        val_y = np.stack([dataset.labeled[i].label.as_array() for i in val_idx])
        preds = predict_batch(model, val_x)
        scores = " ".join(
            f"{name}={rmse(preds[:, col], val_y[:, col]):.4f}"
            for col, name in enumerate(CLASS_NAMES)
        )
        click.echo(f"validation rmse: {scores}")


@main.command("evaluate")
@config_option
@seed_option
@click.option("--cube", "cube_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Scene cube (HSCN) used as the unlabeled pool.")
@click.option("--labeled", "labeled_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Labeled-sample CSV.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default="report.csv", help="Report CSV output path.")
def cmd_evaluate(config_path, seed, cube_path, labeled_path, out_path) -> None:
    """Cross-validate the pipeline against both baselines; write the report."""
    cfg = _load_config(config_path, seed)
    try:
        dataset = _load_dataset(cube_path, labeled_path)
        result = run_cross_validation(
            dataset,
            pre_cfg=cfg.pretrain_config(),
            ft_cfg=cfg.finetune_config(),
            aug_cfg=cfg.aug_config(),
            svr_base=cfg.svr_config(),
            c_grid=cfg.c_grid,
            sigma_grid=cfg.sigma_grid,
            k=cfg.k,
            inner_folds=cfg.inner_folds,
            aggregation=default_aggregation(dataset.band_count, cfg.agg_windows),
            seed=cfg.seed,
        )
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    figure_path = out.with_name(out.stem + "_summary.png")
    try:
        write_report_csv(out, result)
        figures.save_rmse_summary(result, figure_path)
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(f"wrote {out}")
    click.echo(f"wrote {figure_path}")
    click.echo(format_summary(result))


@main.command("predict-map")
@click.option("--checkpoint", "checkpoint_path",
              type=click.Path(exists=True, dir_okay=False), required=True,
              help="Pipeline checkpoint written by 'train'.")
@click.option("--cube", "cube_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Scene cube (HSCN) to map.")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Optional pixel mask (HMSK); 0 skips a pixel.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default="map.habn", help="Abundance map output path.")
def cmd_predict_map(checkpoint_path, cube_path, mask_path, out_path) -> None:
    """Predict a full abundance map; masked pixels become the zero sentinel."""
    try:
        model = load_pipeline(checkpoint_path)
        cube = load_cube(cube_path)
        mask = load_mask(mask_path) if mask_path else None
        amap = predict_map(model, cube, mask)
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        save_abundance_map(out, amap)
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(f"wrote {out}")


@main.command("render-map")
@click.option("--map", "map_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Abundance map (HABN) to render.")
@click.option("--joint-with", "joint_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Other maps included in the normalization range.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              default="map.ppm", help="P6 pixmap output path.")
def cmd_render_map(map_path, joint_paths, out_path) -> None:
    """Render an abundance map to a color image (P6 portable pixmap)."""
    from .cubeio import load_abundance_map

    try:
        amap = load_abundance_map(map_path)
        others = [load_abundance_map(p) for p in joint_paths]
        rgb = abundance_to_rgb(amap, joint_range([amap, *others]))
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    try:
        write_ppm(out, rgb)
    except (ValueError, OSError) as exc:
        raise _fail(exc) from exc
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
