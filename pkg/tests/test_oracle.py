"""Tests for the analytic rate-distortion references.

The water-filling routines are checked against brute-force grid
minimizations written independently here, against closed-form values, and
against their KKT conditions (one shared water level across all active
dimensions). The empirical entropy estimator is checked on distributions
whose entropy is known exactly.
"""

import numpy as np
import pytest

from fedntc.errors import DomainError, ShapeError
from fedntc.oracle import (
    BISECT_TOL,
    curve_to_csv,
    empirical_discrete_entropy,
    fed_rd,
    gaussian_rd,
    latent_distortion,
    reverse_waterfill,
    sample_rd_curve,
)


def brute_force_two_dim(v0, v1, target, step=1e-4):
    """Grid-minimize (R(v0,d0) + R(v1,d1)) / 2 subject to (d0 + d1)/2 = target."""
    best = np.inf
    d0 = step
    while d0 < 2.0 * target:
        d1 = 2.0 * target - d0
        if d1 > 0:
            rate = 0.5 * (gaussian_rd(v0, d0) + gaussian_rd(v1, d1))
            best = min(best, rate)
        d0 += step
    return best


class TestGaussianRd:
    def test_quarter_distortion_is_one_bit(self):
        assert gaussian_rd(1.0, 0.25) == pytest.approx(1.0, abs=1e-12)

    def test_distortion_at_variance_is_zero(self):
        assert gaussian_rd(1.0, 1.0) == 0.0

    def test_distortion_above_variance_clamps_to_zero(self):
        assert gaussian_rd(1.0, 5.0) == 0.0

    def test_closed_form_value(self):
        # R = 0.5 log2(var / D)
        assert gaussian_rd(4.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert gaussian_rd(9.0, 1.0) == pytest.approx(0.5 * np.log2(9.0), abs=1e-12)

    def test_zero_variance_is_free(self):
        assert gaussian_rd(0.0, 0.5) == 0.0

    def test_negative_variance_rejected(self):
        with pytest.raises(DomainError):
            gaussian_rd(-1.0, 0.5)

    def test_nonpositive_distortion_rejected(self):
        with pytest.raises(DomainError):
            gaussian_rd(1.0, 0.0)
        with pytest.raises(DomainError):
            gaussian_rd(1.0, -0.25)


class TestReverseWaterfill:
    def test_equal_variances_split_evenly(self):
        res = reverse_waterfill(np.full(4, 2.0), 0.5)
        assert np.allclose(res.distortions, 0.5, atol=1e-9)
        assert res.rate == pytest.approx(gaussian_rd(2.0, 0.5), abs=1e-9)

    def test_free_distortion_gives_zero_rate(self):
        v = np.array([1.0, 4.0])
        res = reverse_waterfill(v, 4.0)
        assert res.rate == 0.0
        assert np.array_equal(res.distortions, v)

    def test_matches_brute_force_grid(self):
        target = 0.5
        res = reverse_waterfill(np.array([1.0, 4.0]), target)
        best = brute_force_two_dim(1.0, 4.0, target)
        assert abs(res.rate - best) <= 1e-3

    def test_brute_force_on_skewed_pair(self):
        target = 0.3
        res = reverse_waterfill(np.array([0.5, 8.0]), target)
        best = brute_force_two_dim(0.5, 8.0, target)
        assert abs(res.rate - best) <= 1e-3

    def test_mean_distortion_hits_target(self):
        rng = np.random.default_rng(3)
        v = rng.uniform(0.2, 5.0, size=12)
        target = 0.4
        res = reverse_waterfill(v, target)
        assert abs(float(res.distortions.mean()) - target) <= 1e-9

    def test_kkt_active_dims_share_water_level(self):
        rng = np.random.default_rng(4)
        v = rng.uniform(0.05, 6.0, size=16)
        res = reverse_waterfill(v, 0.5)
        active = res.distortions < v
        assert active.any()
        levels = res.distortions[active]
        assert float(levels.max() - levels.min()) <= BISECT_TOL
        # Inactive dimensions sit at their own variance.
        assert np.allclose(res.distortions[~active], v[~active])

    def test_small_distortion_activates_all_dims(self):
        v = np.array([1.0, 2.0, 3.0])
        res = reverse_waterfill(v, 0.05)
        assert (res.distortions < v).all()
        assert np.allclose(res.distortions, 0.05, atol=1e-8)

    def test_rejects_nonpositive_target(self):
        with pytest.raises(DomainError):
            reverse_waterfill(np.array([1.0, 2.0]), 0.0)

    def test_rejects_bad_variances(self):
        with pytest.raises(DomainError):
            reverse_waterfill(np.array([]), 0.5)
        with pytest.raises(DomainError):
            reverse_waterfill(np.array([[1.0, 2.0]]), 0.5)
        with pytest.raises(DomainError):
            reverse_waterfill(np.array([1.0, -2.0]), 0.5)
        with pytest.raises(DomainError):
            reverse_waterfill(np.array([1.0, np.inf]), 0.5)


class TestFedRd:
    def test_single_client_collapses_to_waterfill(self):
        rng = np.random.default_rng(5)
        v = rng.uniform(0.3, 4.0, size=8)
        for target in (0.2, 0.5, 1.0):
            joint = fed_rd([v], target)
            solo = reverse_waterfill(v, target)
            assert abs(joint.rate - solo.rate) <= 1e-9

    def test_identical_clients_collapse_to_single_curve(self):
        rng = np.random.default_rng(6)
        v = rng.uniform(0.3, 4.0, size=8)
        for target in (0.2, 0.5, 1.0):
            joint = fed_rd([v, v.copy(), v.copy()], target)
            solo = reverse_waterfill(v, target)
            assert abs(joint.rate - solo.rate) <= 1e-9

    def test_matches_nested_brute_force(self):
        # Two one-dimensional clients: the joint optimum over the client
        # distortion split (d0 + d1)/2 = target, each client water-filling
        # its single dimension, is exactly the two-dim grid minimization.
        target = 0.5
        joint = fed_rd([np.array([1.0]), np.array([4.0])], target)
        best = brute_force_two_dim(1.0, 4.0, target)
        assert abs(joint.rate - best) <= 1e-3

    def test_nested_brute_force_multidim_clients(self):
        # Clients {1,1} and {4,4}: split the distortion budget between the
        # clients on a grid, water-fill each side analytically (equal
        # variances make the inner solution closed-form), take the best.
        target = 0.5
        joint = fed_rd([np.array([1.0, 1.0]), np.array([4.0, 4.0])], target)
        best = np.inf
        for d0 in np.arange(1e-4, 2.0 * target, 1e-4):
            d1 = 2.0 * target - d0
            if d1 <= 0:
                continue
            rate = 0.5 * (gaussian_rd(1.0, d0) + gaussian_rd(4.0, d1))
            best = min(best, rate)
        assert abs(joint.rate - best) <= 1e-3

    def test_unequal_client_dims_are_weighted_per_client(self):
        # One client holding {1, 1} and one holding {1}: every dimension is
        # identical, so the federation curve must match the scalar curve
        # even though the dimension counts differ.
        for target in (0.25, 0.6):
            joint = fed_rd([np.array([1.0, 1.0]), np.array([1.0])], target)
            assert abs(joint.rate - gaussian_rd(1.0, target)) <= 1e-9

    def test_client_averaged_distortion_hits_target(self):
        rng = np.random.default_rng(7)
        vs = [rng.uniform(0.2, 5.0, size=6), rng.uniform(0.2, 5.0, size=10)]
        target = 0.4
        res = fed_rd(vs, target)
        d0 = res.distortions[:6].mean()
        d1 = res.distortions[6:].mean()
        assert abs(0.5 * (d0 + d1) - target) <= 1e-9

    def test_free_distortion(self):
        res = fed_rd([np.array([1.0, 2.0]), np.array([3.0])], 10.0)
        assert res.rate == 0.0

    def test_rejects_empty_client_list(self):
        with pytest.raises(DomainError):
            fed_rd([], 0.5)


class TestCurveShape:
    def test_rate_monotone_nonincreasing_and_convex(self):
        rng = np.random.default_rng(8)
        vs = [rng.uniform(0.3, 4.0, size=8), rng.uniform(0.3, 4.0, size=8)]
        grid = np.linspace(0.05, 2.0, 40)
        curve = sample_rd_curve(vs, grid)
        r = curve.rates
        assert (np.diff(r) <= 1e-12).all()
        assert (r >= 0).all()
        # Convexity on consecutive triples of the evenly spaced grid.
        second_diff = r[2:] - 2.0 * r[1:-1] + r[:-2]
        assert (second_diff >= -1e-6).all()

    def test_curve_csv_format(self):
        curve = sample_rd_curve([np.array([1.0])], np.array([0.25, 1.0]))
        text = curve_to_csv(curve)
        lines = text.splitlines()
        assert lines[0] == "distortion,rate_bits_per_dim"
        assert len(lines) == 3
        d, r = lines[1].split(",")
        assert float(d) == 0.25
        assert float(r) == pytest.approx(1.0, abs=1e-9)
        assert text.endswith("\n")


class TestLatentDistortion:
    def test_orthogonal_map_is_isometry(self):
        rng = np.random.default_rng(9)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        z = rng.standard_normal((32, 6))
        z_hat = z + 0.1 * rng.standard_normal((32, 6))
        d_ambient = latent_distortion(q, z, z_hat)
        d_latent = float(np.mean((z - z_hat) ** 2))
        assert d_ambient == pytest.approx(d_latent, rel=1e-12)

    def test_identical_points_are_free(self):
        rng = np.random.default_rng(10)
        m = rng.standard_normal((5, 3))
        z = rng.standard_normal((4, 3))
        assert latent_distortion(m, z, z.copy()) == 0.0

    def test_generic_linear_map_is_definitional(self):
        rng = np.random.default_rng(11)
        m = rng.standard_normal((7, 4))
        z = rng.standard_normal((16, 4))
        z_hat = rng.standard_normal((16, 4))
        expected = float(np.mean((z @ m.T - z_hat @ m.T) ** 2))
        assert latent_distortion(m, z, z_hat) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        m = np.eye(3)
        with pytest.raises(ShapeError):
            latent_distortion(m, np.zeros((2, 3)), np.zeros((3, 3)))
        with pytest.raises(ShapeError):
            latent_distortion(m, np.zeros((2, 4)), np.zeros((2, 4)))


class TestEmpiricalEntropy:
    def test_constant_samples_have_zero_entropy(self):
        assert empirical_discrete_entropy(np.full((2000, 3), 7)) == 0.0

    def test_fair_coin_is_one_bit(self):
        rng = np.random.default_rng(12)
        s = rng.choice([-1, 1], size=(100_000, 2))
        assert empirical_discrete_entropy(s) == pytest.approx(1.0, abs=0.01)

    def test_uniform_256_is_eight_bits(self):
        s = np.tile(np.arange(256), 400).reshape(-1, 1)
        assert empirical_discrete_entropy(s) == pytest.approx(8.0, abs=1e-12)

    def test_rounded_standard_normal(self):
        rng = np.random.default_rng(13)
        s = np.round(rng.standard_normal((100_000, 2))).astype(np.int64)
        assert empirical_discrete_entropy(s) == pytest.approx(2.10, abs=0.05)

    def test_per_dimension_average(self):
        # One constant column and one fair-coin column average to 0.5 bits.
        rng = np.random.default_rng(14)
        col0 = np.zeros(50_000, dtype=np.int64)
        col1 = rng.choice([0, 1], size=50_000)
        s = np.stack([col0, col1], axis=1)
        assert empirical_discrete_entropy(s) == pytest.approx(0.5, abs=0.01)

    def test_rejects_bad_shapes(self):
        with pytest.raises(DomainError):
            empirical_discrete_entropy(np.zeros(100, dtype=np.int64))
        with pytest.raises(DomainError):
            empirical_discrete_entropy(np.zeros((0, 3), dtype=np.int64))
