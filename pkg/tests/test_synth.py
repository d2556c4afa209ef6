"""Synthetic scenes: endmember geometry, mixing exactness, band aggregation."""

import numpy as np
import pytest

from beetlemap.synth import (
    BandAggregation,
    SceneConfig,
    aggregate_matrix,
    aggregate_spectrum,
    default_aggregation,
    generate_scene,
    make_endmembers,
    sample_labeled,
)


class TestBandAggregation:
    def test_windows_must_tile_the_axis(self):
        BandAggregation(((0, 3), (3, 5)))  # fine
        with pytest.raises(ValueError, match="tile"):
            BandAggregation(((0, 3), (4, 5)))
        with pytest.raises(ValueError, match="tile"):
            BandAggregation(((1, 3),))
        with pytest.raises(ValueError, match="tile"):
            BandAggregation(((0, 3), (3, 3)))
        with pytest.raises(ValueError, match="at least one"):
            BandAggregation(())

    def test_default_aggregation_shape(self):
        agg = default_aggregation(234)
        assert agg.channel_count == 13
        assert agg.band_count == 234
        widths = [e - s for s, e in agg.windows]
        assert sum(widths) == 234
        assert max(widths) - min(widths) <= 1

    def test_default_aggregation_small_band_counts(self):
        agg = default_aggregation(13, 13)
        assert agg.windows == tuple((i, i + 1) for i in range(13))
        with pytest.raises(ValueError):
            default_aggregation(5, 13)
        with pytest.raises(ValueError):
            default_aggregation(5, 0)

    def test_aggregate_spectrum_window_means(self):
        agg = BandAggregation(((0, 2), (2, 4)))
        out = aggregate_spectrum(np.array([0.0, 1.0, 2.0, 3.0]), agg)
        np.testing.assert_array_equal(out, [0.5, 2.5])

    def test_aggregate_matrix_matches_per_row(self, rng):
        agg = default_aggregation(24, 5)
        spectra = rng.uniform(size=(7, 24))
        rows = np.stack([aggregate_spectrum(s, agg) for s in spectra])
        np.testing.assert_array_equal(aggregate_matrix(spectra, agg), rows)

    def test_aggregation_commutes_with_convex_mixing(self, rng):
        agg = default_aggregation(30, 6)
        basis = rng.uniform(size=(3, 30))
        weights = rng.dirichlet((1, 1, 1), size=20)
        mixed_then_agg = aggregate_matrix(weights @ basis, agg)
        agg_then_mixed = weights @ aggregate_matrix(basis, agg)
        np.testing.assert_allclose(mixed_then_agg, agg_then_mixed, atol=1e-12)

    def test_band_count_mismatch_rejected(self):
        agg = default_aggregation(24, 4)
        with pytest.raises(ValueError):
            aggregate_spectrum(np.zeros(23), agg)
        with pytest.raises(ValueError):
            aggregate_matrix(np.zeros((2, 23)), agg)


class TestSceneConfig:
    def test_rejects_bad_geometry(self):
        with pytest.raises(ValueError):
            SceneConfig(height=0)
        with pytest.raises(ValueError):
            SceneConfig(bands=7)
        with pytest.raises(ValueError):
            SceneConfig(noise_std=-0.1)
        with pytest.raises(ValueError):
            SceneConfig(abundance_prior=(1.0, 0.0, 1.0))
        with pytest.raises(ValueError):
            SceneConfig(pure_fraction=1.5)

    def test_pixel_count(self):
        assert SceneConfig(height=4, width=6).pixel_count == 24


class TestEndmembers:
    def test_pairwise_distances_exceed_half(self):
        for seed in range(4):
            ems = make_endmembers(234, seed)
            spectra = [e.spectrum for e in ems]
            for i in range(3):
                for j in range(i + 1, 3):
                    dist = np.linalg.norm(spectra[i] - spectra[j])
                    assert dist > 0.5, f"seed {seed}: pair ({i},{j}) at {dist:.3f}"

    def test_values_stay_in_unit_interval(self):
        for bands in (8, 32, 234):
            for em in make_endmembers(bands, 1):
                assert em.spectrum.min() >= 0.0
                assert em.spectrum.max() <= 1.0
                assert em.spectrum.shape == (bands,)

    def test_same_seed_identical(self):
        a = make_endmembers(100, 5)
        b = make_endmembers(100, 5)
        for x, y in zip(a, b):
            assert x.name == y.name
            np.testing.assert_array_equal(x.spectrum, y.spectrum)

    def test_names_and_order(self):
        names = [e.name for e in make_endmembers(64, 0)]
        assert names == ["healthy", "affected", "dead"]

    def test_affected_step_attenuated_and_shoulder_elevated(self):
        for seed in range(4):
            healthy, affected, dead = (e.spectrum for e in make_endmembers(234, seed))
            mid = 117
            above = slice(mid + 15, mid + 30)
            below = slice(mid - 30, mid - 15)
            step_h = healthy[above].mean() - healthy[below].mean()
            step_a = affected[above].mean() - affected[below].mean()
            attenuation = 1.0 - step_a / step_h
            assert 0.25 < attenuation < 0.55, f"seed {seed}: {attenuation:.3f}"
            assert affected[below].mean() > healthy[below].mean()
            step_d = dead[above].mean() - dead[below].mean()
            assert step_d < 0.5 * step_h  # no comparable step on dead

    def test_band_aggregation_erases_the_affected_signature(self):
        """With the full contrast in the narrow window, the coarse features of
        the affected endmember collapse onto the healthy-dead segment."""
        agg = default_aggregation(234)
        h, a, d = (aggregate_spectrum(e.spectrum, agg)
                   for e in make_endmembers(234, 0, narrow_fraction=1.0))
        direction = h - d
        mu = np.dot(a - d, direction) / np.dot(direction, direction)
        residual = np.linalg.norm(a - (mu * h + (1 - mu) * d))
        assert residual < 1e-12
        assert 0.0 < mu < 1.0

        # ... while the full-resolution spectra keep a genuine third direction
        hf, af, df = (e.spectrum for e in make_endmembers(234, 0, narrow_fraction=1.0))
        full_residual = np.linalg.norm(af - (mu * hf + (1 - mu) * df))
        assert full_residual > 0.05

    def test_narrow_fraction_validated(self):
        with pytest.raises(ValueError, match="narrow_fraction"):
            make_endmembers(64, 0, narrow_fraction=1.5)
        with pytest.raises(ValueError, match="8 bands"):
            make_endmembers(7, 0)


class TestGenerateScene:
    def test_zero_noise_is_the_exact_mixture(self):
        cfg = SceneConfig(height=6, width=5, bands=40, noise_std=0.0, seed=2)
        scene = generate_scene(cfg)
        basis = np.stack([e.spectrum for e in scene.endmembers])
        expected = scene.truth.reshape(-1, 3) @ basis
        np.testing.assert_array_equal(scene.cube.reshape(-1, 40), expected)

    def test_zero_noise_least_squares_recovers_truth(self):
        cfg = SceneConfig(height=8, width=8, bands=234, noise_std=0.0, seed=3)
        scene = generate_scene(cfg)
        basis = np.stack([e.spectrum for e in scene.endmembers])
        flat = scene.cube.reshape(-1, 234)
        recovered, *_ = np.linalg.lstsq(basis.T, flat.T, rcond=None)
        err = np.abs(recovered.T - scene.truth.reshape(-1, 3)).max()
        assert err < 1e-9

    def test_noise_level_matches_request(self):
        cfg = SceneConfig(height=48, width=48, bands=64, noise_std=0.01, seed=4)
        scene = generate_scene(cfg)
        basis = np.stack([e.spectrum for e in scene.endmembers])
        residual = scene.cube.reshape(-1, 64) - scene.truth.reshape(-1, 3) @ basis
        per_band_std = residual.std(axis=0)
        assert np.all(np.abs(per_band_std - 0.01) < 0.001)

    def test_truth_rows_on_simplex(self, tiny_scene):
        truth = tiny_scene.truth.reshape(-1, 3)
        assert truth.min() >= 0.0
        np.testing.assert_allclose(truth.sum(axis=1), 1.0, atol=1e-9)

    def test_pure_fraction_forces_one_hot_pixels(self):
        cfg = SceneConfig(height=10, width=10, bands=32, noise_std=0.0,
                          pure_fraction=0.2, seed=5)
        truth = generate_scene(cfg).truth.reshape(-1, 3)
        one_hot = np.sum(np.all(np.isin(truth, (0.0, 1.0)), axis=1))
        assert one_hot == 20
        per_class = [np.sum(truth[:, c] == 1.0) for c in range(3)]
        assert max(per_class) - min(per_class) <= 1

    def test_deterministic_per_seed(self):
        cfg = SceneConfig(height=5, width=5, bands=32, seed=8)
        a = generate_scene(cfg)
        b = generate_scene(cfg)
        np.testing.assert_array_equal(a.cube, b.cube)
        np.testing.assert_array_equal(a.truth, b.truth)

    def test_rejects_mismatched_endmembers(self):
        cfg = SceneConfig(height=2, width=2, bands=32)
        wrong = make_endmembers(16, 0)
        with pytest.raises(ValueError, match="32 bands"):
            generate_scene(cfg, wrong)

    def test_cube_values_bounded(self, tiny_scene):
        assert tiny_scene.cube.min() >= 0.0
        assert tiny_scene.cube.max() <= 1.2


class TestSampleLabeled:
    def test_samples_point_back_into_the_scene(self, tiny_scene):
        samples = sample_labeled(tiny_scene, 12, seed=9)
        flat_cube = tiny_scene.cube.reshape(-1, tiny_scene.cube.shape[2])
        flat_truth = tiny_scene.truth.reshape(-1, 3)
        assert len(samples) == 12
        ids = [int(s.sample_id) for s in samples]
        assert len(set(ids)) == 12
        for s, i in zip(samples, ids):
            np.testing.assert_array_equal(s.spectrum, flat_cube[i])
            np.testing.assert_allclose(s.label.as_array(), flat_truth[i], atol=1e-9)

    def test_deterministic(self, tiny_scene):
        a = sample_labeled(tiny_scene, 8, seed=1)
        b = sample_labeled(tiny_scene, 8, seed=1)
        assert [s.sample_id for s in a] == [s.sample_id for s in b]

    def test_rejects_overdraw(self, tiny_scene):
        with pytest.raises(ValueError):
            sample_labeled(tiny_scene, 101, seed=0)
        with pytest.raises(ValueError):
            sample_labeled(tiny_scene, 0, seed=0)
