import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capacity_rct.errors import DomainError
from capacity_rct.estimator import (
    control_moments,
    estimator_moments,
    queue_length_asy_variance,
    scale_up_bias,
    steady_state_effect,
    treatment_moments,
)
from capacity_rct.queueing import (
    ModelParams,
    SystemSize,
    critical_ratio,
    mean_queue_length,
    stationary_distribution,
)
from capacity_rct.sim import SimConfig, simulate_time_averages

from oracles import poisson_asy_variance

PARAM_GRID = [
    ModelParams(0.4, 0.35, 3.0, 0.1),
    ModelParams(0.185, 0.16, 7.0, 0.085),
    ModelParams(1.3, 0.05, 0.6, 0.9),
]


def asy_var(params, m, n):
    return queue_length_asy_variance(stationary_distribution(params, SystemSize(m, n)), params)


class TestAsymptoticVariance:
    @pytest.mark.parametrize("params", PARAM_GRID)
    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 12])
    def test_matches_poisson_equation(self, params, n):
        for m in range(n + 1):
            ref = poisson_asy_variance(params.lam, params.tau, params.mu, params.p, m, n)
            assert asy_var(params, m, n) == pytest.approx(ref, rel=1e-8, abs=1e-14)

    def test_frozen_value(self, pilot_params):
        # Poisson-equation oracle, frozen
        assert asy_var(pilot_params, 5, 20) == pytest.approx(0.03853414314543839 * 400, rel=1e-10)

    def test_single_user_is_two_state_formula(self, pilot_params):
        lam, tau = pilot_params.lam, pilot_params.tau
        assert asy_var(pilot_params, 0, 1) == pytest.approx(2 * lam * tau / (lam + tau) ** 3)

    def test_lambda_free_denominator_is_wrong(self, pilot_params):
        # The rate lambda belongs in the denominator; dropping it inflates by 1/lambda.
        ref = poisson_asy_variance(0.4, 0.35, 3.0, 0.1, 5, 20)
        assert abs(asy_var(pilot_params, 5, 20) / pilot_params.lam / ref - 1) > 1.0

    def test_agrees_with_long_run_simulation(self):
        params = ModelParams(0.4, 0.35, 3.0, 0.1)
        size = SystemSize(2, 6)
        cfg = SimConfig(seed=7, horizon=300.0, replications=400, stationary_start=True)
        avgs = simulate_time_averages(params, size, cfg, workers=1)[:, 0]
        scaled = 300.0 * avgs.var(ddof=1)
        sigma2 = asy_var(params, 2, 6)
        # chi-square spread at 400 reps is about 7%
        assert scaled == pytest.approx(sigma2, rel=0.2)
        assert abs(scaled / (sigma2 / params.lam) - 1) > 0.5

    @given(
        st.floats(0.05, 3), st.floats(0.0, 3), st.floats(0.1, 5), st.floats(0.0, 1),
        st.integers(1, 200), st.data(),
    )
    def test_nonnegative_and_finite(self, lam, tau, mu, p, n, data):
        m = data.draw(st.integers(0, n))
        v = asy_var(ModelParams(lam, tau, mu, p), m, n)
        assert math.isfinite(v) and v >= 0

    def test_stable_in_upper_tail(self, pilot_params):
        # congested, large chain: a plain cumulative sum collapses here
        ref = poisson_asy_variance(0.4, 0.35, 3.0, 0.1, 28, 140)
        assert asy_var(pilot_params, 28, 140) == pytest.approx(ref, rel=1e-6)

    def test_absorbing_chain_has_zero_variance(self):
        params = ModelParams(0.5, 0.0, 1.0, 0.0)
        assert asy_var(params, 2, 5) == 0.0


class TestGroupMoments:
    def test_control_example(self, pilot_params):
        g = control_moments(pilot_params, 1)
        assert g.mean == pytest.approx(0.35 / 0.75)
        assert g.asy_variance == pytest.approx(0.6637037037, rel=1e-9)

    def test_control_scales_with_group_size(self, pilot_params):
        assert control_moments(pilot_params, 10).asy_variance == pytest.approx(
            control_moments(pilot_params, 1).asy_variance / 10
        )

    def test_control_needs_users(self, pilot_params):
        with pytest.raises(DomainError):
            control_moments(pilot_params, 0)

    @pytest.mark.parametrize("n", [1, 4, 17])
    def test_unserved_treatment_equals_control(self, pilot_params, n):
        t, c = treatment_moments(pilot_params, 0, n), control_moments(pilot_params, n)
        assert t.mean == pytest.approx(c.mean, rel=1e-12)
        assert t.asy_variance == pytest.approx(c.asy_variance, rel=1e-9)

    def test_treatment_mean_uses_queue_length(self, pilot_params):
        g = treatment_moments(pilot_params, 5, 20)
        assert g.mean == pytest.approx(1 - 8.690398899400728 / 20, rel=1e-11)
        assert g.asy_variance == pytest.approx(0.03853414314543839, rel=1e-10)


class TestEffect:
    def test_pilot_effects(self, pilot_params):
        assert steady_state_effect(pilot_params, 5, 10) == pytest.approx(0.145994638, abs=1e-9)
        assert steady_state_effect(pilot_params, 5, 25) == pytest.approx(0.0798913787, abs=1e-9)

    def test_reported_pilot_effects_are_truncations(self, pilot_params):
        # the exact values truncate (not round) to the reported two decimals
        for m, n, reported in [(5, 10, 0.14), (5, 25, 0.07)]:
            assert math.floor(steady_state_effect(pilot_params, m, n) * 100) / 100 == reported

    def test_no_servers_no_effect(self, pilot_params):
        for n in (1, 5, 50):
            assert steady_state_effect(pilot_params, 0, n) == pytest.approx(0, abs=1e-12)

    def test_abundant_servers_hit_ceiling(self, pilot_params):
        r = critical_ratio(pilot_params)
        lam, tau = pilot_params.lam, pilot_params.tau
        ceiling = (1 - r) - tau / (lam + tau)
        for n in (1, 6, 30):
            assert steady_state_effect(pilot_params, n, n) == pytest.approx(ceiling)

    @pytest.mark.parametrize("n", [10, 40, 120])
    def test_non_decreasing_in_servers(self, pilot_params, n):
        eff = [steady_state_effect(pilot_params, m, n) for m in range(n + 1)]
        assert all(b >= a - 1e-12 for a, b in zip(eff, eff[1:]))

    @pytest.mark.parametrize("m", [1, 5, 20])
    def test_interference_dilutes_effect(self, pilot_params, m):
        # fixed servers shared by more treated users: per-user effect shrinks
        eff = [steady_state_effect(pilot_params, m, n) for n in range(m, 10 * m)]
        assert all(b <= a + 1e-12 for a, b in zip(eff, eff[1:]))

    def test_estimator_moments(self, pilot_params):
        em = estimator_moments(pilot_params, 5, 10, 10, 10.0)
        assert em.effect == pytest.approx(0.145994638, abs=1e-9)
        assert em.variance_at_T == pytest.approx(
            (em.treat_asy_variance + em.control_asy_variance) / 10.0
        )
        assert em.control_asy_variance == pytest.approx(0.06637037037)

    def test_estimator_needs_positive_horizon(self, pilot_params):
        with pytest.raises(DomainError):
            estimator_moments(pilot_params, 5, 10, 10, 0.0)


class TestScaleUpBias:
    def test_both_uncongested(self, pilot_params):
        r = critical_ratio(pilot_params)
        assert scale_up_bias(pilot_params, 1.5 * r, 2 * r) == pytest.approx(0, abs=1e-15)

    def test_congested_deployment_overstates(self, pilot_params):
        r = critical_ratio(pilot_params)
        assert scale_up_bias(pilot_params, 2 * r, 0.5 * r) > 0

    def test_linear_region(self, pilot_params):
        r = critical_ratio(pilot_params)
        served = pilot_params.mu * pilot_params.p
        base = pilot_params.lam + pilot_params.tau
        got = scale_up_bias(pilot_params, 0.8 * r, 0.3 * r)
        assert got == pytest.approx(0.5 * r * served / base)

    def test_same_ratio(self, pilot_params):
        assert scale_up_bias(pilot_params, 0.2, 0.2) == 0

    def test_negative_ratio_rejected(self, pilot_params):
        with pytest.raises(DomainError):
            scale_up_bias(pilot_params, -0.1, 0.2)

    def test_matches_finite_system_trend(self, pilot_params):
        # experiment at 5/10, deployment at 5/25 congests; the finite effect drops too
        finite = steady_state_effect(pilot_params, 5, 10) - steady_state_effect(pilot_params, 5, 25)
        assert finite > 0 and scale_up_bias(pilot_params, 0.5, 0.2) > 0
