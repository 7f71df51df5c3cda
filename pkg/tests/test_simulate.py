"""
Tests for grids, the exact samplers, chi-square assembly and path dumps.
"""

import math

import numpy as np
import pytest

from errors import ConfigurationError, DomainError, InputError, NumericalError
from model import (FTransform, bridge_component, bridge_correlation, custom_component, parse_model_id,
                   parse_trend_id)
from simulate import (PathBatch, TimeGrid, chi_square_path, dump_paths, fbm_covariance, load_paths,
                      sample_bm, sample_bm_normalized, sample_bridge, sample_bridge_time_change,
                      sample_component, sample_fbm, sample_model, sample_ou, sample_stationary, stream_rng,
                      sup_trend)
from simulate import _fbm_factor


def empirical_cov(values: np.ndarray) -> np.ndarray:
    return values.T @ values / values.shape[0]


class TestStreams:
    def test_same_key_same_draws(self):
        a = stream_rng(7, 1, 3).standard_normal(5)
        b = stream_rng(7, 1, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_blocks_and_streams_differ(self):
        base = stream_rng(7, 0, 0).standard_normal(5)
        assert not np.array_equal(base, stream_rng(7, 0, 1).standard_normal(5))
        assert not np.array_equal(base, stream_rng(7, 1, 0).standard_normal(5))


class TestTimeGrid:
    def test_validation(self):
        with pytest.raises(InputError):
            TimeGrid(np.array([]))
        with pytest.raises(InputError):
            TimeGrid(np.array([0.2, 0.2, 0.5]))
        with pytest.raises(DomainError):
            TimeGrid(np.array([0.5, 1.2]))

    def test_log_end(self):
        grid = TimeGrid.log_end(1e-6, 0.5, 7, 0)
        ratios = grid.points[1:] / grid.points[:-1]
        np.testing.assert_allclose(ratios, ratios[0])
        right = TimeGrid.log_end(0.5, 1 - 1e-6, 7, 1)
        assert right.points[-1] == pytest.approx(1 - 1e-6)
        with pytest.raises(DomainError):
            TimeGrid.log_end(0.0, 0.5, 7, 0)
        with pytest.raises(DomainError):
            TimeGrid.log_end(0.5, 1.0, 7, 1)

    def test_f_uniform_spacing(self):
        transform = FTransform(bridge_component().variance, 1.0)
        grid = TimeGrid.f_uniform(transform, 0.01, 0.99, 0.1)
        steps = np.diff(transform.on_points(grid.points))
        np.testing.assert_allclose(steps[:-1], 0.1, rtol=1e-6)
        assert grid.points[-1] == pytest.approx(0.99)
        with pytest.raises(DomainError):
            TimeGrid.f_uniform(transform, 0.01, 0.99, 0.0)

    def test_refined_grids_nest(self):
        for grid in (TimeGrid.uniform(0.1, 0.9, 9), TimeGrid.log_end(1e-4, 0.5, 5, 0)):
            fine, positions = grid.refined()
            assert fine.size == 2 * grid.size - 1
            np.testing.assert_array_equal(fine.points[positions], grid.points)
        fine, _ = TimeGrid.log_end(1e-4, 1e-2, 3, 0).refined()
        assert fine.points[1] == pytest.approx(math.sqrt(1e-7))

    def test_uniform_step(self):
        assert TimeGrid(np.arange(1, 9) / 8).uniform_step() == pytest.approx(0.125)
        assert TimeGrid.uniform(0.0, 1.0, 5).uniform_step() == pytest.approx(0.25)
        assert TimeGrid.log_end(1e-3, 0.5, 5, 0).uniform_step() is None


class TestSamplers:
    def test_bridge_covariance(self):
        grid = TimeGrid(np.array([0.2, 0.5, 0.8]))
        batch = sample_bridge(grid, 20_000, seed=1)
        t = grid.points
        expected = bridge_correlation(t[:, None], t[None, :])
        np.testing.assert_allclose(empirical_cov(batch.values), expected, atol=0.03)

    def test_bridge_time_change_has_same_law(self):
        grid = TimeGrid(np.array([0.1, 0.6, 0.9]))
        batch = sample_bridge_time_change(grid, 20_000, seed=2)
        t = grid.points
        np.testing.assert_allclose(empirical_cov(batch.values), bridge_correlation(t[:, None], t[None, :]),
                                   atol=0.03)

    def test_bridge_grid_must_be_open(self):
        with pytest.raises(DomainError):
            sample_bridge(TimeGrid.uniform(0.0, 0.5, 3), 10, seed=1)

    def test_normalized_bm(self):
        grid = TimeGrid(np.array([0.25, 1.0]))
        values = sample_bm_normalized(grid, 20_000, seed=3).values
        np.testing.assert_allclose(empirical_cov(values), [[1.0, 0.5], [0.5, 1.0]], atol=0.03)
        with pytest.raises(DomainError):
            sample_bm_normalized(TimeGrid.uniform(0.0, 1.0, 3), 10, seed=3)
        raw = sample_bm(TimeGrid.uniform(0.0, 1.0, 3), 4, seed=3)
        np.testing.assert_array_equal(raw.values[:, 0], 0.0)

    def test_fbm_dense_covariance(self):
        grid = TimeGrid(np.array([0.25, 0.5, 1.0]))
        batch = sample_fbm(grid, 0.3, 20_000, seed=4, method="dense")
        np.testing.assert_allclose(empirical_cov(batch.values), fbm_covariance(grid.points, 0.3), atol=0.03)

    def test_dense_factor_cache_is_bounded(self):
        grid = TimeGrid(np.array([0.2, 0.4, 0.6, 0.8]))
        first = sample_fbm(grid, 0.4, 50, seed=8, method="dense")
        hits = _fbm_factor.cache_info().hits
        second = sample_fbm(grid, 0.4, 50, seed=8, method="dense")
        np.testing.assert_array_equal(first.values, second.values)
        info = _fbm_factor.cache_info()
        assert info.hits == hits + 1
        assert info.maxsize == 16 and info.currsize <= 16

    def test_fbm_circulant_covariance(self):
        grid = TimeGrid(np.arange(1, 9) / 8)
        batch = sample_fbm(grid, 0.7, 20_000, seed=5, method="circulant")
        np.testing.assert_allclose(empirical_cov(batch.values), fbm_covariance(grid.points, 0.7), atol=0.04)
        with pytest.raises(ConfigurationError):
            sample_fbm(TimeGrid(np.array([0.1, 0.3, 0.4])), 0.7, 10, seed=5, method="circulant")

    def test_fbm_linear_case(self):
        grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
        values = sample_fbm(grid, 1.0, 5, seed=6).values
        np.testing.assert_array_equal(values[:, 0], 0.0)
        np.testing.assert_allclose(values[:, 1] * 2.0, values[:, 2])

    def test_fbm_normalized_has_unit_variance(self):
        grid = TimeGrid(np.array([0.1, 0.5]))
        values = sample_fbm(grid, 0.3, 20_000, seed=7, normalized=True).values
        np.testing.assert_allclose(values.var(axis=0), 1.0, atol=0.04)
        with pytest.raises(DomainError):
            sample_fbm(grid, 1.2, 10, seed=7)

    def test_ou_lag_correlation(self):
        grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
        values = sample_ou(grid, 1.0, 20_000, seed=8).values
        cov = empirical_cov(values)
        assert cov[0, 1] == pytest.approx(math.exp(-0.5), abs=0.03)
        assert cov[0, 2] == pytest.approx(math.exp(-1.0), abs=0.03)
        with pytest.raises(DomainError):
            sample_ou(grid, 0.0, 10, seed=8)

    def test_stationary_rank_one(self):
        """A constant correlation gives the same value at every grid point."""
        grid = TimeGrid.uniform(0.0, 1.0, 4)
        values = sample_stationary(lambda lag: np.ones_like(lag), grid, 50, seed=9).values
        np.testing.assert_allclose(values, values[:, :1].repeat(4, axis=1), atol=1e-10)

    def test_stationary_rejects_indefinite_correlation(self):
        grid = TimeGrid.uniform(0.0, 1.0, 3)
        with pytest.raises(NumericalError):
            sample_stationary(lambda lag: np.where(lag == 0.0, 1.0, -0.9), grid, 10, seed=9)

    def test_component_without_sampler(self):
        with pytest.raises(ConfigurationError):
            sample_component(custom_component("1", 1.0), TimeGrid.uniform(0.1, 0.9, 3), 10, seed=1)


class TestChiSquarePath:
    def setup_method(self):
        self.grid = TimeGrid(np.array([0.2, 0.5, 0.8]))
        self.model = parse_model_id("bridge", b=[1.0, 0.5])

    def test_weighted_sum_of_squares(self):
        first = sample_bridge(self.grid, 6, seed=1, stream=0)
        second = sample_bridge(self.grid, 6, seed=1, stream=1)
        chi = chi_square_path(self.model, [first, second])
        np.testing.assert_allclose(chi.values, first.values ** 2 + 0.25 * second.values ** 2)

    def test_sample_model_uses_one_stream_per_component(self):
        chi = sample_model(self.model, self.grid, 6, seed=1)
        first = sample_bridge(self.grid, 6, seed=1, stream=0)
        second = sample_bridge(self.grid, 6, seed=1, stream=1)
        np.testing.assert_allclose(chi.values, first.values ** 2 + 0.25 * second.values ** 2)

    def test_mismatches_raise(self):
        first = sample_bridge(self.grid, 6, seed=1, stream=0)
        with pytest.raises(InputError):
            chi_square_path(self.model, [first])
        with pytest.raises(InputError):
            chi_square_path(self.model, [first, sample_bridge(self.grid, 6, seed=1, stream=0)])
        with pytest.raises(InputError):
            chi_square_path(self.model, [first, sample_bridge(self.grid, 5, seed=1, stream=1)])
        other = TimeGrid(np.array([0.2, 0.5, 0.9]))
        with pytest.raises(InputError):
            chi_square_path(self.model, [first, sample_bridge(other, 6, seed=1, stream=1)])

    def test_batch_shape_is_checked(self):
        with pytest.raises(InputError):
            PathBatch(self.grid, np.zeros((2, 4)), "test")


class TestSupTrend:
    def setup_method(self):
        grid = TimeGrid(np.array([0.2, 0.5, 0.8]))
        self.batch = PathBatch(grid, np.array([[1.0, 3.0, 2.0], [0.0, 0.0, 5.0]]), "test")

    def test_sup_and_argmax(self):
        result = sup_trend(self.batch, parse_trend_id("const:1"))
        np.testing.assert_allclose(result.values, [2.0, 4.0])
        np.testing.assert_array_equal(result.argmax, [1, 2])
        np.testing.assert_allclose(result.locations(), [0.5, 0.8])

    def test_subgrid_columns(self):
        result = sup_trend(self.batch, parse_trend_id("const:1"), columns=np.array([0, 2]))
        np.testing.assert_allclose(result.values, [1.0, 4.0])
        np.testing.assert_allclose(result.locations(), [0.8, 0.8])

    def test_shifting_trend_shifts_sup(self):
        g = parse_trend_id("const:1")
        base = sup_trend(self.batch, g)
        shifted = sup_trend(self.batch, g.shifted(2.5))
        np.testing.assert_allclose(shifted.values, base.values - 2.5, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(shifted.argmax, base.argmax)

    def test_argmax_histogram(self):
        grid = TimeGrid.uniform(0.02, 0.98, 49)
        bridge = sample_bridge(grid, 2000, seed=5)
        batch = PathBatch(grid, bridge.values ** 2, "bridge-squared")
        result = sup_trend(batch, parse_trend_id("expr:400*(t-0.5)^2"))
        counts, edges = result.histogram(bins=12)
        assert counts.sum() == 2000
        assert edges[0] == pytest.approx(0.02)
        assert edges[-1] == pytest.approx(0.98)
        locations = result.locations()
        assert np.mean((locations > 0.25) & (locations < 0.75)) > 0.9

    def test_trend_must_be_finite_on_grid(self):
        batch = PathBatch(TimeGrid(np.array([0.0, 0.5])), np.zeros((1, 2)), "test")
        with pytest.raises(DomainError):
            sup_trend(batch, parse_trend_id("bessel"))


class TestPathDump:
    def setup_method(self):
        self.batch = sample_bridge(TimeGrid(np.array([0.25, 0.5, 0.75])), 4, seed=11)

    @pytest.mark.parametrize("name", ["paths.bin", "paths.csv"])
    def test_dump_and_load(self, tmp_path, name):
        out = dump_paths(self.batch, str(tmp_path / name))
        grid, values = load_paths(str(out))
        np.testing.assert_array_equal(grid, self.batch.grid.points)
        np.testing.assert_array_equal(values, self.batch.values)

    def test_foreign_file_is_rejected(self, tmp_path):
        junk = tmp_path / "junk.bin"
        junk.write_bytes(b"not a dump at all, just bytes")
        with pytest.raises(InputError):
            load_paths(str(junk))
        with pytest.raises(InputError):
            dump_paths(self.batch, str(tmp_path / "x.out"), fmt="parquet")
