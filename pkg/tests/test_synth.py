from __future__ import annotations

import numpy as np
import pytest

from mechinfo.errors import ConfigError
from mechinfo.io import read_csv
from mechinfo.synth import LocalizedNoise, NoiseSpec, apply_resolution_floor, corrupt, synthesize, write_synthetic_csv


def _coords(n):
    return np.column_stack([np.arange(n, dtype=float), np.zeros(n)])


class TestResolutionFloor:
    def test_small_components_vanish(self):
        out = apply_resolution_floor(np.array([4e-4, 6e-4, -4.9e-4]))
        assert out.tolist() == [0.0, 6e-4, 0.0]

    def test_floor_is_strict(self):
        e = np.full((3, 3), 5e-4)
        assert np.array_equal(apply_resolution_floor(e), e)

    def test_input_is_not_modified(self):
        e = np.array([1e-4, 1e-2])
        apply_resolution_floor(e)
        assert e[0] == 1e-4


class TestCorrupt:
    def test_zero_noise_is_identity(self):
        e = np.random.default_rng(0).normal(size=(4, 10, 3))
        noisy, valid, variance = corrupt(e, _coords(10), NoiseSpec())
        assert np.array_equal(noisy, e)
        assert valid.all()
        assert np.all(variance == 0.0)

    def test_noise_statistics(self):
        """1e5 draws at sigma = 1e-3: std within 2 %, mean within 3 sigma / sqrt(N)."""
        n = 100_000
        noisy, _, _ = corrupt(np.zeros((n, 1)), _coords(n), NoiseSpec(1e-3, seed=4))
        assert 0.98e-3 <= noisy.std() <= 1.02e-3
        assert abs(noisy.mean()) <= 3.0 * 1e-3 / np.sqrt(n)

    def test_missing_fraction(self):
        _, valid, _ = corrupt(np.zeros((3000, 3)), _coords(3000), NoiseSpec(0.0, seed=9, missing_fraction=1.0 / 3.0))
        assert 933 <= np.count_nonzero(~valid) <= 1067

    def test_same_seed_same_output(self):
        e = np.zeros((2, 50, 3))
        spec = NoiseSpec(1e-3, seed=12, missing_fraction=0.2)
        a = corrupt(e, _coords(50), spec)
        b = corrupt(e, _coords(50), spec)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_mask_does_not_depend_on_noise(self):
        e = np.zeros((50, 3))
        _, quiet, _ = corrupt(e, _coords(50), NoiseSpec(0.0, seed=3, missing_fraction=0.3))
        _, loud, _ = corrupt(e, _coords(50), NoiseSpec(0.5, seed=3, missing_fraction=0.3))
        assert np.array_equal(quiet, loud)

    def test_localized_region_overrides_sigma(self):
        patch = LocalizedNoise(((-0.5, -1.0), (4.5, -1.0), (4.5, 1.0), (-0.5, 1.0)), 0.5)
        noisy, _, variance = corrupt(np.zeros((10, 3)), _coords(10), NoiseSpec(0.0, seed=1, localized=patch))
        assert np.all(variance[:5] == 0.25)
        assert np.all(variance[5:] == 0.0)
        assert np.all(noisy[5:] == 0.0)
        assert np.any(noisy[:5] != 0.0)

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            NoiseSpec(-1.0)
        with pytest.raises(ConfigError):
            NoiseSpec(0.0, missing_fraction=1.5)
        with pytest.raises(ConfigError):
            LocalizedNoise(((0.0, 0.0), (1.0, 0.0)), 0.1)


class TestSynthesize:
    def test_pipeline_keeps_stress_and_clean_copy(self, elastic_history):
        data = synthesize(elastic_history, NoiseSpec(1e-3, seed=2))
        assert data.clean is elastic_history
        assert np.array_equal(data.history.stress, elastic_history.stress)
        assert not np.array_equal(data.strain, elastic_history.strain)
        assert data.n_valid == elastic_history.n_points

    def test_floor_applies_before_noise(self, elastic_history):
        """Axial strains of 1e-3 survive the floor, lateral strains of about 3.3e-4 do not."""
        data = synthesize(elastic_history, NoiseSpec(), floor=5e-4)
        assert np.all(data.strain[:, :, 1] == 0.0)
        assert np.all(data.strain[-1, :, 0] > 0.0)

    def test_floor_can_be_disabled(self, elastic_history):
        data = synthesize(elastic_history, NoiseSpec(), floor=None)
        assert np.array_equal(data.strain, elastic_history.strain)

    def test_from_document(self):
        spec = NoiseSpec.from_dict({"sigma": 1e-3, "missing_fraction": 0.1, "localized": {"polygon": [[0, 0], [1, 0], [1, 1]], "sigma": 0.5}}, seed=7)
        assert spec.seed == 7
        assert spec.localized is not None and spec.localized.sigma == 0.5

    def test_csv_carries_validity(self, elastic_history, tmp_path):
        data = synthesize(elastic_history, NoiseSpec(1e-3, seed=2, missing_fraction=0.5))
        rows = read_csv(write_synthetic_csv(tmp_path / "synthetic.csv", data))
        assert len(rows) == elastic_history.n_steps * elastic_history.n_points
        assert "valid" in rows[0]
