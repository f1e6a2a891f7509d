"""Tests for the per-channel factorized density model and its CDF tables.

Covers the probabilistic invariants (monotone CDF, unit mass, stable tails),
finite-difference checks of the rate loss gradients, and the integer table
builder the range coder consumes.
"""

import numpy as np
import pytest

from fedntc.entropy import CdfTable, FactorizedEntropyModel, softplus
from fedntc.errors import ShapeError, TableError


def make_model(seed=0, channels=3, init_scale=1.0, filters=(3, 3, 3)):
    return FactorizedEntropyModel(
        channels, filters, init_scale, np.random.default_rng(seed)
    )


class TestDensityShape:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_cdf_monotone_and_bounded(self, seed):
        model = make_model(seed=seed)
        xs = np.linspace(-30.0, 30.0, 401)
        for c in range(model.channels):
            cdf = model.cumulative(xs, channel=c)
            assert np.all(cdf >= 0.0) and np.all(cdf <= 1.0)
            assert np.all(np.diff(cdf) >= -1e-15)

    def test_cdf_covers_the_line(self):
        model = make_model(seed=4)
        lo = model.cumulative(np.full((1, 3), -200.0))
        hi = model.cumulative(np.full((1, 3), 200.0))
        assert np.all(lo < 1e-6)
        assert np.all(hi > 1.0 - 1e-6)

    def test_likelihood_is_cdf_difference(self):
        model = make_model(seed=5)
        v = np.array([[-3.0, 0.0, 2.0], [1.0, -1.0, 4.0]])
        p = model.likelihood(v)
        for c in range(3):
            upper = model.cumulative(v[:, c] + 0.5, channel=c)
            lower = model.cumulative(v[:, c] - 0.5, channel=c)
            np.testing.assert_allclose(p[:, c], upper - lower, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("seed", [6, 7])
    def test_integer_mass_sums_to_one(self, seed):
        model = make_model(seed=seed)
        grid = np.arange(-60, 61, dtype=np.float64)
        p = model.likelihood(np.tile(grid[:, None], (1, model.channels)))
        np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-6)

    def test_tails_are_positive_without_cancellation(self):
        """Far-tail bin probabilities must stay positive, not cancel to zero."""
        model = make_model(seed=8)
        far = model.likelihood(np.full((1, 3), 30.0))
        near = model.likelihood(np.full((1, 3), 5.0))
        assert np.all(far > 0.0)
        assert np.all(np.isfinite(far))
        assert np.all(far < near)
        assert np.all(model.likelihood(np.full((1, 3), -30.0)) > 0.0)

    def test_init_scale_widens_the_density(self):
        narrow = make_model(seed=9, init_scale=1.0)
        wide = make_model(seed=9, init_scale=8.0)
        p_narrow = narrow.likelihood(np.full((1, 3), 12.0))
        p_wide = wide.likelihood(np.full((1, 3), 12.0))
        assert np.all(p_wide > p_narrow)

    def test_softplus_stable_at_extremes(self):
        assert softplus(np.array([800.0]))[0] == 800.0
        assert softplus(np.array([-800.0]))[0] == 0.0
        np.testing.assert_allclose(softplus(np.array([0.0]))[0], np.log(2.0))


class TestRateLoss:
    def test_matches_manual_log_sum(self):
        model = make_model(seed=10)
        rng = np.random.default_rng(11)
        v = rng.integers(-5, 6, size=(7, 3)).astype(np.float64)
        p = np.maximum(model.likelihood(v), 1e-9)
        manual = float(np.mean(np.sum(-np.log2(p), axis=1)))
        np.testing.assert_allclose(model.rate_loss(v), manual, rtol=1e-12)

    def test_floor_keeps_loss_finite_and_grads_zero(self):
        model = make_model(seed=12)
        v = np.full((2, 3), 1e6)
        loss, grads, d_in = model.rate_loss_with_grads(v)
        assert np.isfinite(loss)
        np.testing.assert_allclose(loss, 3 * -np.log2(1e-9), rtol=1e-6)
        assert np.all(d_in == 0.0)
        for g in grads.values():
            assert np.all(g == 0.0)

    def test_param_grads_match_finite_differences(self):
        model = make_model(seed=13, channels=2)
        rng = np.random.default_rng(14)
        v = rng.standard_normal((16, 2)) * 2.0

        from fedntc.nn import grad_check

        def fn(point):
            model.load_parameters(point)
            loss, grads, _ = model.rate_loss_with_grads(v)
            return loss, grads

        report = grad_check(fn, model.parameters(), step=1e-4)
        assert report.passed, f"worst {report.worst_name}: {report.max_rel_err}"

    def test_input_grads_match_finite_differences(self):
        model = make_model(seed=15, channels=2)
        rng = np.random.default_rng(16)
        v0 = rng.standard_normal((4, 2)) * 2.0

        from fedntc.nn import grad_check

        def fn(point):
            loss, _, d_in = model.rate_loss_with_grads(point["v"])
            return loss, {"v": d_in}

        report = grad_check(fn, {"v": v0}, step=1e-4)
        assert report.passed, f"input grad rel err {report.max_rel_err}"

    def test_rejects_wrong_channel_count(self):
        model = make_model(seed=17)
        with pytest.raises(ShapeError):
            model.rate_loss(np.zeros((2, 4)))


class TestParameters:
    def test_parameter_shapes(self):
        model = make_model(seed=18, channels=4, filters=(3, 3, 3))
        p = model.parameters()
        assert p["matrix0"].shape == (4, 3, 1)
        assert p["matrix1"].shape == (4, 3, 3)
        assert p["matrix3"].shape == (4, 1, 3)
        assert p["bias3"].shape == (4, 1)
        assert p["factor2"].shape == (4, 3)
        assert "factor3" not in p

    def test_init_deterministic_and_gates_zero(self):
        a = make_model(seed=19)
        b = make_model(seed=19)
        for k, v in a.parameters().items():
            np.testing.assert_array_equal(v, b.parameters()[k])
        assert np.all(a.parameters()["factor0"] == 0.0)

    def test_copy_is_deep(self):
        model = make_model(seed=20)
        dup = model.copy()
        dup.parameters()["bias0"][0, 0] += 1.0
        assert model.parameters()["bias0"][0, 0] != dup.parameters()["bias0"][0, 0]

    def test_load_parameters_rejects_bad_shape(self):
        model = make_model(seed=21)
        params = model.parameters()
        params["matrix1"] = np.zeros((1, 2, 2))
        with pytest.raises(ShapeError):
            model.load_parameters(params)


class TestCdfTables:
    @pytest.mark.parametrize("seed", [30, 31, 32])
    def test_table_invariants(self, seed):
        model = make_model(seed=seed, init_scale=4.0)
        table = model.build_cdf_table(precision=16)
        assert isinstance(table, CdfTable)
        assert table.precision == 16
        for ch in table.channels:
            assert ch.y_min <= 0 <= ch.y_max
            assert np.all(ch.counts >= 1)
            assert int(ch.counts.sum()) == 1 << 16
            assert ch.cum[0] == 0 and int(ch.cum[-1]) == 1 << 16
            assert np.all(np.diff(ch.cum) == ch.counts)
            assert ch.escape_index == len(ch.counts) - 1

    def test_off_support_mass_below_tail(self):
        model = make_model(seed=33, init_scale=4.0)
        tail = 2.0**-8
        table = model.build_cdf_table(precision=16, tail_mass=tail)
        for c, ch in enumerate(table.channels):
            below = model.cumulative(np.array([ch.y_min - 0.5]), channel=c)[0]
            above = 1.0 - model.cumulative(np.array([ch.y_max + 0.5]), channel=c)[0]
            assert below + above < tail

    def test_counts_track_model_probabilities(self):
        model = make_model(seed=34, init_scale=2.0)
        table = model.build_cdf_table(precision=16)
        for c, ch in enumerate(table.channels):
            values = np.arange(ch.y_min, ch.y_max + 1, dtype=np.float64)
            p = model.cumulative(values + 0.5, channel=c) - model.cumulative(
                values - 0.5, channel=c
            )
            got = ch.counts[:-1] / ch.counts.sum()
            np.testing.assert_allclose(got, p, atol=1e-4)

    def test_symbol_value_round_trip(self):
        model = make_model(seed=35)
        table = model.build_cdf_table()
        ch = table.channels[0]
        for v in range(ch.y_min, ch.y_max + 1):
            assert ch.value_for_symbol(ch.symbol_for_value(v)) == v
        assert ch.symbol_for_value(ch.y_max + 7) == ch.escape_index
        assert ch.symbol_for_value(ch.y_min - 7) == ch.escape_index

    def test_near_deterministic_density_pigeonholes(self):
        """A one-spike density must give the spike all spare probability mass."""
        model = make_model(seed=36, init_scale=0.01)
        table = model.build_cdf_table(precision=12)
        for ch in table.channels:
            n = len(ch.counts)
            assert ch.counts.max() == (1 << 12) - (n - 1)

    @pytest.mark.parametrize("precision", [7, 25, 0])
    def test_precision_range_enforced(self, precision):
        model = make_model(seed=37)
        with pytest.raises(TableError):
            model.build_cdf_table(precision=precision)

    @pytest.mark.parametrize("precision", [8, 16, 24])
    def test_all_legal_precisions_build(self, precision):
        model = make_model(seed=38)
        table = model.build_cdf_table(precision=precision)
        for ch in table.channels:
            assert int(ch.counts.sum()) == 1 << precision
