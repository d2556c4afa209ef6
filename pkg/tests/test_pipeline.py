"""End-to-end pipeline: simplex projection, feature standardization, model
assembly, cross-validation bookkeeping (including a fold-leakage audit),
report formatting, and the pipeline container format."""

from dataclasses import replace

import numpy as np
import pytest

from beetlemap.contrastive import AugmentationConfig, FinetuneConfig, PretrainConfig
from beetlemap.data import (
    CLASS_NAMES,
    AbundanceVector,
    DataFormatError,
    Dataset,
    make_folds,
    rmse,
)
from beetlemap.nn import EncoderModel
from beetlemap.pipeline import (
    METHOD_AGGREGATED,
    METHOD_FLOOR,
    METHOD_PROPOSED,
    METHOD_RAW,
    REPORT_METHODS,
    BaselineModel,
    PipelineModel,
    Standardizer,
    baseline_predict_batch,
    embed,
    fit_heads,
    format_summary,
    load_pipeline,
    predict_abundance,
    predict_batch,
    predict_map,
    run_cross_validation,
    save_pipeline,
    select_svr_config,
    simplex_normalize,
    train_baseline,
    train_pipeline,
    write_report_csv,
)
from beetlemap.rng import derive_seed
from beetlemap.svr import SvrConfig, grid_search
from beetlemap.synth import sample_labeled

QUICK_FT = FinetuneConfig(epochs=3)
QUICK_PRE = PretrainConfig(batch_size=16, epochs=1, max_samples=32)
QUICK_AUG = AugmentationConfig(seed=11)
QUICK_SVR = SvrConfig(c=10.0, sigma=1.0)
ONE_CELL = {"c_grid": (10.0,), "sigma_grid": (1.0,)}


@pytest.fixture(scope="module")
def quick_model(tiny_dataset):
    encoder = EncoderModel.initialize(24, seed=3)
    model, _, _ = fit_heads(encoder, tiny_dataset.labeled, QUICK_FT, QUICK_SVR,
                            **ONE_CELL)
    return model


class TestStandardizer:
    def test_zero_mean_unit_variance(self, rng):
        x = rng.normal(3.0, 2.0, size=(50, 4))
        scaler = Standardizer.fit(x)
        z = scaler.transform(x)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)

    def test_constant_feature_passes_unscaled(self):
        x = np.array([[1.0, 2.0], [1.0, 6.0]])
        scaler = Standardizer.fit(x)
        z = scaler.transform(x)
        np.testing.assert_array_equal(z[:, 0], [0.0, 0.0])
        assert scaler.std[0] == 1.0

    def test_rejects_empty_or_wrong_rank(self):
        with pytest.raises(ValueError):
            Standardizer.fit(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            Standardizer.fit(np.zeros(5))


class TestSimplexNormalize:
    def test_worked_examples(self):
        np.testing.assert_array_equal(
            simplex_normalize(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5]
        )
        np.testing.assert_allclose(
            simplex_normalize(np.array([-1.0, 1.0, 1.0])), [0.0, 0.5, 0.5],
            atol=1e-15,
        )
        np.testing.assert_array_equal(
            simplex_normalize(np.array([0.0, 0.0, 0.0])), [1 / 3, 1 / 3, 1 / 3]
        )
        np.testing.assert_array_equal(
            simplex_normalize(np.array([-2.0, -0.5, -1.0])), [1 / 3, 1 / 3, 1 / 3]
        )

    def test_output_on_simplex(self, rng):
        raw = rng.normal(0.3, 1.0, size=(500, 3))
        out = simplex_normalize(raw)
        assert out.min() >= 0.0
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)

    def test_bitwise_idempotent(self, rng):
        raw = rng.normal(0.3, 1.0, size=(1000, 3))
        once = simplex_normalize(raw)
        np.testing.assert_array_equal(simplex_normalize(once), once)

    def test_power_of_two_scale_invariant(self, rng):
        raw = rng.normal(0.3, 1.0, size=(200, 3))
        base = simplex_normalize(raw)
        for scale in (0.25, 0.5, 2.0, 8.0, 2.0**-9, 2.0**11):
            np.testing.assert_array_equal(simplex_normalize(scale * raw), base)

    def test_input_not_mutated(self):
        raw = np.array([-1.0, 2.0, 3.0])
        keep = raw.copy()
        simplex_normalize(raw)
        np.testing.assert_array_equal(raw, keep)

    def test_batch_matches_per_row(self, rng):
        raw = rng.normal(size=(20, 3))
        batch = simplex_normalize(raw)
        rows = np.stack([simplex_normalize(r) for r in raw])
        np.testing.assert_array_equal(batch, rows)

    def test_validation(self):
        with pytest.raises(ValueError):
            simplex_normalize(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            simplex_normalize(np.array([np.nan, 1.0, 1.0]))


class TestEmbed:
    def test_shape_and_batch_equivalence(self, tiny_encoder, rng):
        spectra = rng.uniform(0.1, 0.9, size=(7, 24))
        batch = embed(tiny_encoder, spectra)
        assert batch.shape == (7, 16)
        singles = np.vstack([embed(tiny_encoder, spectra[i:i + 1]) for i in range(7)])
        np.testing.assert_array_equal(batch, singles)

    def test_empty_input(self, tiny_encoder):
        assert embed(tiny_encoder, np.zeros((0, 24))).shape == (0, 16)

    def test_rank_checked(self, tiny_encoder):
        with pytest.raises(ValueError):
            embed(tiny_encoder, np.zeros(24))


class TestPrediction:
    def test_rows_land_on_the_simplex(self, quick_model, tiny_dataset):
        preds = predict_batch(quick_model, tiny_dataset.labeled_matrix())
        assert preds.shape == (tiny_dataset.labeled_count, 3)
        assert preds.min() >= 0.0
        np.testing.assert_allclose(preds.sum(axis=1), 1.0, atol=1e-9)

    def test_batch_size_does_not_change_results(self, quick_model, tiny_dataset):
        spectra = tiny_dataset.labeled_matrix()[:6]
        batch = predict_batch(quick_model, spectra)
        singles = np.vstack(
            [predict_batch(quick_model, spectra[i:i + 1]) for i in range(6)]
        )
        np.testing.assert_array_equal(batch, singles)

    def test_single_spectrum_matches_batch(self, quick_model, tiny_dataset):
        spectrum = tiny_dataset.labeled_matrix()[0]
        vec = predict_abundance(quick_model, spectrum)
        assert isinstance(vec, AbundanceVector)
        row = predict_batch(quick_model, spectrum[None, :])[0]
        np.testing.assert_array_equal(vec.as_array(), row)
        with pytest.raises(ValueError):
            predict_abundance(quick_model, spectrum[None, :])

    def test_map_matches_flat_predictions(self, quick_model, tiny_scene):
        cube = tiny_scene.cube[:4, :5]
        amap = predict_map(quick_model, cube)
        assert amap.shape == (4, 5, 3)
        flat = predict_batch(quick_model, cube.reshape(-1, 24))
        np.testing.assert_array_equal(amap.reshape(-1, 3), flat)

    def test_masked_pixels_become_zero_sentinel(self, quick_model, tiny_scene):
        cube = tiny_scene.cube[:3, :3]
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False
        mask[2, 0] = False
        amap = predict_map(quick_model, cube, mask)
        np.testing.assert_array_equal(amap[1, 1], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(amap[2, 0], [0.0, 0.0, 0.0])
        assert amap[0, 0].sum() == pytest.approx(1.0, abs=1e-9)

    def test_mask_shape_checked(self, quick_model, tiny_scene):
        with pytest.raises(ValueError):
            predict_map(quick_model, tiny_scene.cube[:3, :3], np.ones((2, 3), bool))

    def test_regressor_keys_enforced(self, quick_model):
        wrong = dict(zip(("a", "b", "c"), quick_model.regressors.values()))
        with pytest.raises(ValueError):
            PipelineModel(quick_model.encoder, quick_model.standardizer, wrong)


class TestSelectSvrConfig:
    def test_averages_per_class_tables(self, rng):
        features = rng.normal(size=(12, 4))
        labels = rng.dirichlet((2.0, 2.0, 2.0), size=12)
        base = SvrConfig(epsilon=0.05)
        chosen, combined = select_svr_config(
            features, labels, base, c_grid=(0.1, 10.0), sigma_grid=(1.0,),
            k=3, seed=5,
        )
        tables = [
            grid_search(features, labels[:, col], base, (0.1, 10.0), (1.0,),
                        3, 5)[1]
            for col in range(3)
        ]
        for i, cell in enumerate(combined):
            expected = np.mean([t[i].mean_rmse for t in tables])
            assert cell.mean_rmse == pytest.approx(expected, rel=1e-12)
        best = min(combined, key=lambda cell: cell.mean_rmse)
        assert (chosen.c, chosen.sigma) == (best.c, best.sigma)

    def test_label_shape_checked(self, rng):
        with pytest.raises(ValueError):
            select_svr_config(rng.normal(size=(8, 2)),
                              rng.normal(size=(8, 2)), SvrConfig())


class TestFitHeads:
    def test_trunk_frozen_and_source_untouched(self, tiny_dataset):
        encoder = EncoderModel.initialize(24, seed=3)
        before = {k: v.copy() for k, v in encoder.state_arrays().items()}
        model, history, chosen = fit_heads(
            encoder, tiny_dataset.labeled, QUICK_FT, QUICK_SVR, **ONE_CELL
        )
        for key, arr in encoder.state_arrays().items():
            np.testing.assert_array_equal(arr, before[key], err_msg=key)
        fitted = model.encoder.state_arrays()
        for key in before:
            if key.startswith("head."):
                assert not np.array_equal(fitted[key], before[key])
            else:
                np.testing.assert_array_equal(fitted[key], before[key], err_msg=key)
        assert len(history) == QUICK_FT.epochs
        assert chosen == QUICK_SVR  # single-cell grid passes the base through

    def test_deterministic(self, tiny_dataset):
        encoder = EncoderModel.initialize(24, seed=3)
        a, _, _ = fit_heads(encoder, tiny_dataset.labeled, QUICK_FT, QUICK_SVR,
                            **ONE_CELL)
        b, _, _ = fit_heads(encoder, tiny_dataset.labeled, QUICK_FT, QUICK_SVR,
                            **ONE_CELL)
        np.testing.assert_array_equal(a.encoder.head.weight, b.encoder.head.weight)
        for name in CLASS_NAMES:
            np.testing.assert_array_equal(a.regressors[name].dual_coefs,
                                          b.regressors[name].dual_coefs)

    def test_grid_choice_comes_from_grid(self, tiny_dataset):
        encoder = EncoderModel.initialize(24, seed=3)
        _, _, chosen = fit_heads(
            encoder, tiny_dataset.labeled, QUICK_FT, QUICK_SVR,
            c_grid=(0.1, 10.0), sigma_grid=(0.3, 3.0),
        )
        assert chosen.c in (0.1, 10.0)
        assert chosen.sigma in (0.3, 3.0)

    def test_needs_two_samples(self, tiny_dataset, tiny_encoder):
        with pytest.raises(ValueError):
            fit_heads(tiny_encoder, tiny_dataset.labeled[:1], QUICK_FT, QUICK_SVR)


class TestBaselines:
    def test_raw_and_aggregated_modes(self, tiny_dataset):
        raw = train_baseline(tiny_dataset.labeled, METHOD_RAW, QUICK_SVR, **ONE_CELL)
        assert raw.mode == METHOD_RAW
        assert raw.aggregation is None
        agg = train_baseline(tiny_dataset.labeled, METHOD_AGGREGATED, QUICK_SVR,
                             **ONE_CELL)
        assert agg.aggregation is not None
        assert agg.aggregation.band_count == 24

        spectra = tiny_dataset.labeled_matrix()[:5]
        for model in (raw, agg):
            preds = baseline_predict_batch(model, spectra)
            assert preds.shape == (5, 3)
            assert preds.min() >= 0.0
            np.testing.assert_allclose(preds.sum(axis=1), 1.0, atol=1e-9)

    def test_unknown_mode_rejected(self, tiny_dataset):
        with pytest.raises(ValueError):
            train_baseline(tiny_dataset.labeled, "nearest", QUICK_SVR)
        with pytest.raises(ValueError):
            BaselineModel(mode=METHOD_AGGREGATED, standardizer=None,
                          regressors=dict.fromkeys(CLASS_NAMES), aggregation=None)

    def test_deterministic(self, tiny_dataset):
        a = train_baseline(tiny_dataset.labeled, METHOD_RAW, QUICK_SVR, **ONE_CELL)
        b = train_baseline(tiny_dataset.labeled, METHOD_RAW, QUICK_SVR, **ONE_CELL)
        for name in CLASS_NAMES:
            np.testing.assert_array_equal(a.regressors[name].dual_coefs,
                                          b.regressors[name].dual_coefs)


class TestTrainPipeline:
    def test_bundle_contents(self, tiny_dataset):
        trained = train_pipeline(tiny_dataset, QUICK_PRE, QUICK_FT, QUICK_AUG,
                                 QUICK_SVR, **ONE_CELL, seed=4)
        assert isinstance(trained.model, PipelineModel)
        assert len(trained.pretrain_history) == QUICK_PRE.epochs
        assert len(trained.finetune_history) == QUICK_FT.epochs
        assert trained.svr_choice == QUICK_SVR


@pytest.fixture(scope="module")
def cv_setup(tiny_scene):
    samples = sample_labeled(tiny_scene, 12, seed=21)
    dataset = Dataset(band_count=24, labeled=samples,
                      unlabeled=tiny_scene.cube.reshape(-1, 24))
    result = run_cross_validation(
        dataset, QUICK_PRE, QUICK_FT, QUICK_AUG, QUICK_SVR, **ONE_CELL,
        k=3, seed=0,
    )
    return dataset, result


class TestCrossValidation:
    def test_shapes_and_artifacts(self, cv_setup):
        _, result = cv_setup
        assert result.k == 3
        assert set(result.fold_rmse) == {*REPORT_METHODS, METHOD_FLOOR}
        for method, table in result.fold_rmse.items():
            assert table.shape == (3, 3)
            assert np.all(np.isfinite(table))
        assert len(result.finetune_histories) == 3
        for method in REPORT_METHODS:
            assert len(result.svr_choices[method]) == 3
        assert result.grand_mean(METHOD_PROPOSED) == pytest.approx(
            result.fold_rmse[METHOD_PROPOSED].mean()
        )

    def test_floor_is_the_train_mean_predictor(self, cv_setup):
        dataset, result = cv_setup
        folds = make_folds(12, 3, seed=0)
        labels = dataset.label_matrix()
        fold = 0
        train_mean = labels[folds.train_indices(fold)].mean(axis=0)
        val = labels[folds.val_indices(fold)]
        expected = [
            rmse(np.full(len(val), train_mean[col]), val[:, col])
            for col in range(3)
        ]
        np.testing.assert_array_equal(result.fold_rmse[METHOD_FLOOR][fold],
                                      expected)

    def test_fold_models_reproducible_from_train_data_only(self, cv_setup):
        """Recorded fold scores must equal those of a model rebuilt from the
        shared encoder and that fold's training samples alone."""
        dataset, result = cv_setup
        folds = make_folds(12, 3, seed=0)
        fold = 1
        train_samples = [dataset.labeled[i] for i in folds.train_indices(fold)]
        model, _, _ = fit_heads(
            result.encoder, train_samples, QUICK_FT, QUICK_SVR, **ONE_CELL,
            inner_folds=3, seed=derive_seed(0, "grid", fold),
        )
        val_idx = folds.val_indices(fold)
        preds = predict_batch(model, dataset.labeled_matrix()[val_idx])
        labels = dataset.label_matrix()[val_idx]
        expected = [rmse(preds[:, col], labels[:, col]) for col in range(3)]
        np.testing.assert_array_equal(result.fold_rmse[METHOD_PROPOSED][fold],
                                      expected)

    def test_validation_labels_cannot_leak_into_training(self, cv_setup, tiny_scene):
        """Changing one validation-fold label must leave that fold's trained
        model (hence its predictions) bitwise unchanged, and must not touch
        the shared encoder."""
        dataset, result = cv_setup
        folds = make_folds(12, 3, seed=0)
        fold = 1
        val_idx = folds.val_indices(fold)
        target = int(val_idx[0])

        original = dataset.labeled[target]
        flipped = (AbundanceVector(0.0, 0.0, 1.0)
                   if original.label.healthy > 0.5 else
                   AbundanceVector(1.0, 0.0, 0.0))
        mutated = list(dataset.labeled)
        mutated[target] = replace(original, label=flipped)
        dataset_b = Dataset(band_count=24, labeled=mutated,
                            unlabeled=tiny_scene.cube.reshape(-1, 24))
        result_b = run_cross_validation(
            dataset_b, QUICK_PRE, QUICK_FT, QUICK_AUG, QUICK_SVR, **ONE_CELL,
            k=3, seed=0,
        )

        for key, arr in result.encoder.state_arrays().items():
            np.testing.assert_array_equal(
                arr, result_b.encoder.state_arrays()[key], err_msg=key
            )

        # Rebuild the fold model from (identical) training data and score it
        # against the mutated labels: that must be exactly what the second
        # run recorded, i.e. its fold model did not see the new label.
        train_samples = [dataset.labeled[i] for i in folds.train_indices(fold)]
        model, _, _ = fit_heads(
            result.encoder, train_samples, QUICK_FT, QUICK_SVR, **ONE_CELL,
            inner_folds=3, seed=derive_seed(0, "grid", fold),
        )
        preds = predict_batch(model, dataset.labeled_matrix()[val_idx])
        labels_b = dataset_b.label_matrix()[val_idx]
        expected = [rmse(preds[:, col], labels_b[:, col]) for col in range(3)]
        np.testing.assert_array_equal(
            result_b.fold_rmse[METHOD_PROPOSED][fold], expected
        )


class TestReporting:
    def test_report_csv_structure(self, cv_result_for_report, tmp_path):
        result = cv_result_for_report
        path = tmp_path / "report.csv"
        write_report_csv(path, result)
        lines = path.read_text().strip().split("\n")
        comments = [l for l in lines if l.startswith("#")]
        assert len(comments) == 4
        assert all(l.startswith(f"# {METHOD_FLOOR},") for l in comments)
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "method,fold,class,rmse"
        fold_rows = [l for l in body[1:] if l.split(",")[1] != "mean"]
        mean_rows = [l for l in body[1:] if l.split(",")[1] == "mean"]
        assert len(fold_rows) == 3 * result.k * 3
        assert len(mean_rows) == 3 * 4
        first = fold_rows[0].split(",")
        assert first[0] == METHOD_PROPOSED
        assert first[2] == CLASS_NAMES[0]
        recorded = float(first[3])
        assert recorded == pytest.approx(
            result.fold_rmse[METHOD_PROPOSED][0, 0], abs=1e-10
        )
        overall = [l for l in mean_rows
                   if l.startswith(f"{METHOD_PROPOSED},mean,all")]
        assert float(overall[0].split(",")[3]) == pytest.approx(
            result.grand_mean(METHOD_PROPOSED), abs=1e-10
        )

    def test_summary_table_mentions_every_method(self, cv_result_for_report):
        text = format_summary(cv_result_for_report)
        for method in REPORT_METHODS:
            assert method in text
        assert METHOD_FLOOR in text
        assert "mean" in text.splitlines()[0]


@pytest.fixture(scope="module")
def cv_result_for_report(tiny_scene):
    samples = sample_labeled(tiny_scene, 12, seed=33)
    dataset = Dataset(band_count=24, labeled=samples,
                      unlabeled=tiny_scene.cube.reshape(-1, 24))
    return run_cross_validation(
        dataset, QUICK_PRE, QUICK_FT, QUICK_AUG, QUICK_SVR, **ONE_CELL,
        k=2, seed=1,
    )


class TestPipelineContainer:
    def test_round_trip_bit_exact(self, quick_model, tmp_path):
        path = tmp_path / "pipeline.abpc"
        save_pipeline(path, quick_model)
        loaded = load_pipeline(path)
        for key, arr in quick_model.encoder.state_arrays().items():
            np.testing.assert_array_equal(arr, loaded.encoder.state_arrays()[key],
                                          err_msg=key)
        np.testing.assert_array_equal(loaded.standardizer.mean,
                                      quick_model.standardizer.mean)
        np.testing.assert_array_equal(loaded.standardizer.std,
                                      quick_model.standardizer.std)
        for name in CLASS_NAMES:
            got, want = loaded.regressors[name], quick_model.regressors[name]
            np.testing.assert_array_equal(got.support_vectors, want.support_vectors)
            np.testing.assert_array_equal(got.dual_coefs, want.dual_coefs)
            assert got.bias == want.bias
            assert got.sigma == want.sigma

    def test_round_trip_preserves_predictions(self, quick_model, tiny_dataset,
                                              tmp_path):
        path = tmp_path / "pipeline.abpc"
        save_pipeline(path, quick_model)
        loaded = load_pipeline(path)
        spectra = tiny_dataset.labeled_matrix()[:4]
        np.testing.assert_array_equal(predict_batch(loaded, spectra),
                                      predict_batch(quick_model, spectra))

    def test_corrupt_containers_rejected(self, quick_model, tmp_path):
        path = tmp_path / "pipeline.abpc"
        save_pipeline(path, quick_model)
        raw = path.read_bytes()

        (tmp_path / "magic.abpc").write_bytes(b"ZZZZ" + raw[4:])
        with pytest.raises(DataFormatError, match="not a pipeline"):
            load_pipeline(tmp_path / "magic.abpc")

        import struct as _struct
        bad_version = raw[:4] + _struct.pack("<II", 99, 5) + raw[12:]
        (tmp_path / "version.abpc").write_bytes(bad_version)
        with pytest.raises(DataFormatError, match="version"):
            load_pipeline(tmp_path / "version.abpc")

        (tmp_path / "toc.abpc").write_bytes(raw[:20])
        with pytest.raises(DataFormatError, match="table of contents"):
            load_pipeline(tmp_path / "toc.abpc")

        overrun = bytearray(raw)
        overrun[24:32] = _struct.pack("<Q", 1 << 40)  # first section length
        (tmp_path / "overrun.abpc").write_bytes(bytes(overrun))
        with pytest.raises(DataFormatError, match="overruns"):
            load_pipeline(tmp_path / "overrun.abpc")

        empty = raw[:4] + _struct.pack("<II", 1, 0)
        (tmp_path / "empty.abpc").write_bytes(empty)
        with pytest.raises(DataFormatError, match="missing sections"):
            load_pipeline(tmp_path / "empty.abpc")
