import math

import pytest

from neyman.bounds import (
    BoundReport,
    ThreePointDist,
    expectation_ratio_bound,
    kl_three_point,
    limit_ratio_bound,
    lower_bound_instance,
    multi_stage_ratio_bound,
    three_point_moments,
    two_stage_ratio_bound,
)
from neyman.errors import InfiniteKL, OutOfRange, TooSmallT, ZeroVariance


class TestTwoStageBound:
    def test_large_horizon_is_vacuous(self):
        report = two_stage_ratio_bound(10**6, 0.1, 3.0, 3.0)
        assert report.ratio_bound == pytest.approx(1 + 10**-2.4)
        assert report.probability_floor == 0.0
        assert report.vacuous

    def test_smallest_horizon_near_eps_zero(self):
        report = two_stage_ratio_bound(16, 1e-9, 2.0, 2.0)
        assert report.ratio_bound == pytest.approx(1.25, rel=1e-6)

    def test_floor_symmetric_in_kurtoses(self):
        a = two_stage_ratio_bound(10**8, 0.1, 2.0, 5.0)
        b = two_stage_ratio_bound(10**8, 0.1, 5.0, 2.0)
        assert a.probability_floor == b.probability_floor

    def test_hypothesis_gates(self):
        with pytest.raises(OutOfRange):
            two_stage_ratio_bound(15, 0.1, 3.0, 3.0)
        with pytest.raises(OutOfRange):
            two_stage_ratio_bound(100, 0.2, 3.0, 3.0)
        with pytest.raises(OutOfRange):
            two_stage_ratio_bound(100, 0.1, 0.5, 3.0)

    def test_floor_monotone_in_horizon(self):
        floors = [
            two_stage_ratio_bound(T, 0.12, 3.0, 3.0).probability_floor
            for T in (16, 100, 10**4, 10**8, 10**12)
        ]
        assert floors == sorted(floors)


class TestMultiStageBound:
    def test_closed_form(self):
        report = multi_stage_ratio_bound(3, 10**6, 0.01, 3.0, 3.0)
        expected = 1 + 4 * 15 ** (-1 / 3) * (10**6) ** (-2 / 3 + 0.01)
        assert report.ratio_bound == pytest.approx(expected, rel=1e-12)

    def test_admissible_at_smallest_horizon(self):
        report = multi_stage_ratio_bound(3, 16, 0.01, 2.0, 2.0)
        assert report.ratio_bound > 1.0

    def test_rate_approaches_inverse_horizon(self):
        # With many stages, the exponent moves from -(1/2) toward -1.
        slow = multi_stage_ratio_bound(3, 10**6, 1e-3, 2.0, 2.0).ratio_bound
        fast = multi_stage_ratio_bound(60, 10**6, 1e-3, 2.0, 2.0).ratio_bound
        assert fast < slow
        assert fast - 1 < 10 * (10**6) ** -0.9

    def test_ceiling_non_increasing_in_stage_count(self):
        eps = 1.0 / 128.0
        for T in (16, 100, 10**6):
            values = [
                multi_stage_ratio_bound(M, T, eps, 3.0, 3.0).ratio_bound
                for M in range(3, 80)
            ]
            assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))

    def test_all_reports_valid(self):
        for M in (3, 5, 10):
            for T in (16, 1000, 10**7):
                r = multi_stage_ratio_bound(M, T, 0.005, 1.5, 9.0)
                assert r.ratio_bound > 1.0
                assert 0.0 <= r.probability_floor <= 1.0
                assert r.vacuous == (r.probability_floor == 0.0)


class TestLimitBound:
    def test_values(self):
        assert limit_ratio_bound(480) == pytest.approx(1 + 1 / 230400)
        assert limit_ratio_bound(4) == pytest.approx(1 + 1 / 1920)

    def test_monotone_decreasing(self):
        values = [limit_ratio_bound(T) for T in (4, 16, 100, 10**4)]
        assert values == sorted(values, reverse=True)

    def test_gate(self):
        with pytest.raises(OutOfRange):
            limit_ratio_bound(3)


class TestExpectationBounds:
    def test_two_stage_value(self):
        T = 2 * 10**6
        report = expectation_ratio_bound("two_stage", T, 1.0)
        assert report.ratio_bound == pytest.approx(
            1 + 5 * math.sqrt(math.log(T) / T), rel=1e-12
        )
        assert report.probability_floor == 1.0

    def test_multi_stage_exponent_limit(self):
        T = 10**7
        wide = expectation_ratio_bound("multi_stage", T, 1.0, M=3).ratio_bound
        tight = expectation_ratio_bound("multi_stage", T, 1.0, M=500).ratio_bound
        # As stages grow the exponent approaches -1 with a single log factor.
        assert tight < wide
        assert tight - 1 == pytest.approx(
            97 * (1000 / 3) ** (-1 / 500) * (math.log(T) / T) ** (499 / 500), rel=1e-9
        )

    def test_threshold(self):
        with pytest.raises(TooSmallT):
            expectation_ratio_bound("two_stage", 100, 1.0)
        with pytest.raises(TooSmallT):
            expectation_ratio_bound("multi_stage", 1000, 1.0, M=3)


class TestLowerBoundInstance:
    def test_small_horizon_masses(self):
        nu, nu_prime, eps = lower_bound_instance(9)
        assert eps == pytest.approx(1 / 9)
        assert nu.probs == (pytest.approx(1 / 3),) * 3
        assert nu_prime.p_neg == pytest.approx(7 / 18)
        assert nu_prime.p_zero == pytest.approx(2 / 9)
        assert nu_prime.p_pos == pytest.approx(7 / 18)

    @pytest.mark.parametrize("T", [4, 9, 100, 10_000])
    def test_moments_and_divergences(self, T):
        nu, nu_prime, eps = lower_bound_instance(T)
        mean_nu, var_nu, _ = three_point_moments(nu)
        mean_np, var_np, _ = three_point_moments(nu_prime)
        assert mean_nu == pytest.approx(0.0, abs=1e-15)
        assert mean_np == pytest.approx(0.0, abs=1e-15)
        assert var_nu == pytest.approx(2 / 3, abs=1e-12)
        assert var_np == pytest.approx(2 / 3 + eps, abs=1e-12)
        ceiling = 1 / (2 * T) + 1e-12
        assert kl_three_point(nu, nu_prime) <= ceiling
        assert kl_three_point(nu_prime, nu) <= ceiling

    def test_gate(self):
        with pytest.raises(OutOfRange):
            lower_bound_instance(3)


class TestThreePointMoments:
    def test_uniform(self):
        mean, var, kurt = three_point_moments(ThreePointDist(1 / 3, 1 / 3, 1 / 3))
        assert mean == 0.0
        assert var == pytest.approx(2 / 3)
        assert kurt == pytest.approx(1.5)

    def test_symmetric_mass(self):
        for p in (0.1, 0.25, 0.5):
            _, var, _ = three_point_moments(ThreePointDist(p, 1 - 2 * p, p))
            assert var == pytest.approx(2 * p)

    def test_point_mass(self):
        with pytest.raises(ZeroVariance):
            three_point_moments(ThreePointDist(0.0, 1.0, 0.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            ThreePointDist(0.5, 0.5, 0.5)


class TestKl:
    def test_self_divergence_zero(self):
        d = ThreePointDist(0.2, 0.5, 0.3)
        assert kl_three_point(d, d) == 0.0

    def test_infinite_when_support_lost(self):
        a = ThreePointDist(0.2, 0.5, 0.3)
        b = ThreePointDist(0.0, 0.7, 0.3)
        with pytest.raises(InfiniteKL):
            kl_three_point(a, b)
        # The other direction is finite: zero mass contributes nothing.
        assert kl_three_point(b, a) < math.inf

    def test_nonnegative(self):
        a = ThreePointDist(0.3, 0.4, 0.3)
        b = ThreePointDist(0.25, 0.5, 0.25)
        assert kl_three_point(a, b) >= 0.0
        assert kl_three_point(b, a) >= 0.0


class TestBoundReport:
    def test_validation(self):
        with pytest.raises(ValueError):
            BoundReport(0.99, 0.5, False, "x")
        with pytest.raises(ValueError):
            BoundReport(1.5, 1.5, False, "x")

    def test_json(self):
        report = two_stage_ratio_bound(10**8, 0.05, 3.0, 3.0)
        obj = report.to_json_dict()
        assert set(obj) == {"ratio_bound", "probability_floor", "vacuous", "source"}
