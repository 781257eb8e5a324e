import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from capacity_rct.errors import DomainError, SearchExhausted
from capacity_rct.estimator import estimator_moments
from capacity_rct.power import (
    PilotStudy,
    Policy,
    TestConfig,
    naive_no_scaleup,
    naive_proportional,
    optimal_n_sweep,
    power_at_mde,
    power_at_true_effect,
    run_policies,
    sqrt_policy,
    sqrt_staffing,
)
from capacity_rct.queueing import ModelParams

CFG = TestConfig(alpha=0.05, beta=0.8, horizon=10.0)
pos = st.floats(1e-4, 10)


class TestPowerAtMde:
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1])
    @pytest.mark.parametrize("v", [(0.1, 0.2), (1e-6, 0.0), (3.0, 4.0)])
    def test_size(self, alpha, v):
        assert power_at_mde(*v, 0.0, alpha) == pytest.approx(alpha, abs=1e-9)

    def test_huge_effect(self):
        assert power_at_mde(0.01, 0.01, 100.0, 0.05) == pytest.approx(1.0)

    def test_half_at_critical_value(self):
        mde = norm.isf(0.05) * math.sqrt(0.3 + 0.2)
        assert power_at_mde(0.3, 0.2, mde, 0.05) == pytest.approx(0.5, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(DomainError):
            power_at_mde(0.0, 0.0, 0.1, 0.05)
        with pytest.raises(DomainError):
            power_at_mde(-0.1, 0.2, 0.1, 0.05)

    @given(pos, pos, st.floats(0, 5), st.floats(0.01, 5))
    def test_increasing_in_effect(self, vt, vc, mde, bump):
        lo = power_at_mde(vt, vc, mde, 0.05)
        hi = power_at_mde(vt, vc, mde + bump, 0.05)
        assert hi >= lo
        if lo < 0.999:
            assert hi > lo

    @given(pos, pos, st.floats(0.01, 2), st.floats(0.01, 5))
    def test_decreasing_in_variance(self, vt, vc, mde, bump):
        assert power_at_mde(vt + bump, vc, mde, 0.05) <= power_at_mde(vt, vc, mde, 0.05)


class TestTrueEffectPower:
    def test_no_servers_gives_alpha(self, pilot_params):
        assert power_at_true_effect(pilot_params, 0, 20, 20, CFG) == pytest.approx(0.05, abs=1e-9)

    def test_pilot_powers(self, pilot_params):
        assert power_at_true_effect(pilot_params, 5, 10, 10, CFG) == pytest.approx(0.38099, abs=5e-5)
        assert power_at_true_effect(pilot_params, 5, 25, 25, CFG) == pytest.approx(0.27729, abs=5e-5)

    def test_reported_sqrt_designs_are_powered(self, pilot_params):
        assert power_at_true_effect(pilot_params, 16, 34, 34, CFG) >= 0.8
        assert power_at_true_effect(pilot_params, 16, 33, 33, CFG) >= 0.8

    def test_config_validation(self):
        with pytest.raises(DomainError):
            TestConfig(alpha=0.8, beta=0.5)
        with pytest.raises(DomainError):
            TestConfig(horizon=0)


class TestSqrtStaffing:
    @pytest.mark.parametrize("n1", [34, 33])
    def test_reported_server_counts(self, pilot_params, n1):
        assert sqrt_staffing(n1, pilot_params, 0.5) == 16

    def test_integer_load_without_buffer(self):
        params = ModelParams(0.5, 0.5, 1.0, 0.5)  # r = 1/3
        assert sqrt_staffing(30, params, 0.0) == 10

    def test_bad_arguments(self, pilot_params):
        with pytest.raises(DomainError):
            sqrt_staffing(0, pilot_params)
        with pytest.raises(DomainError):
            sqrt_staffing(5, pilot_params, -1)


class TestPolicies:
    @pytest.mark.parametrize(
        "pilot, expected",
        [((5, 10, 10), [(5, 35), (18, 35)]), ((5, 25, 25), [(5, 140), (28, 140)])],
    )
    def test_naive_triples(self, pilot_params, pilot, expected):
        p = PilotStudy(pilot_params, *pilot)
        one, two = naive_no_scaleup(p, CFG), naive_proportional(p, CFG)
        assert [(one.m1, one.n1), (two.m1, two.n1)] == expected
        assert one.n0 == one.n1 and two.n0 == two.n1

    def test_naive_no_scaleup_is_underpowered(self, pilot_params):
        p = PilotStudy(pilot_params, 5, 10, 10)
        d = naive_no_scaleup(p, CFG)
        assert d.achieved_power < 0.8
        assert d.achieved_power < power_at_true_effect(pilot_params, 5, 10, 10, CFG)

    @pytest.mark.parametrize("pilot", [(5, 10, 10), (5, 25, 25)])
    def test_sqrt_policy_is_minimal(self, pilot_params, pilot):
        d = sqrt_policy(PilotStudy(pilot_params, *pilot), CFG)
        assert d.achieved_power >= 0.8 and d.n0 == d.n1
        assert d.m1 == sqrt_staffing(d.n1, pilot_params)
        for n in range(1, d.n1):
            assert power_at_true_effect(pilot_params, sqrt_staffing(n, pilot_params), n, n, CFG) < 0.8

    def test_sqrt_policy_ignores_pilot(self, pilot_params):
        a = sqrt_policy(PilotStudy(pilot_params, 5, 10, 10), CFG)
        b = sqrt_policy(PilotStudy(pilot_params, 5, 25, 25), CFG)
        assert (a.m1, a.n1) == (b.m1, b.n1) == (16, 32)

    def test_sqrt_dominates_proportional_in_scenario_two(self, pilot_params):
        designs = run_policies(PilotStudy(pilot_params, 5, 25, 25), CFG)
        prop, sqrt_ = designs[1], designs[2]
        assert sqrt_.m1 <= prop.m1 and sqrt_.n1 <= prop.n1
        assert [d.policy for d in designs] == list(Policy)

    def test_achieved_power_is_honest(self, pilot_params):
        for d in run_policies(PilotStudy(pilot_params, 5, 10, 10), CFG):
            assert d.achieved_power == power_at_true_effect(pilot_params, d.m1, d.n1, d.n0, CFG)

    def test_vanishing_power_bar(self, pilot_params):
        cfg = TestConfig(alpha=0.05, beta=0.05 + 1e-9)
        assert sqrt_policy(PilotStudy(pilot_params, 5, 10, 10), cfg).n1 == 1

    def test_pilot_floor(self, pilot_params):
        p = PilotStudy(pilot_params, 40, 100, 100)
        assert power_at_true_effect(pilot_params, 40, 100, 100, CFG) >= 0.8
        one, two = naive_no_scaleup(p, CFG), naive_proportional(p, CFG)
        assert one.n1 == two.n1 == 100
        assert two.m1 == 40

    def test_search_exhausted(self, pilot_params):
        p = PilotStudy(pilot_params, 5, 10, 10)
        with pytest.raises(SearchExhausted):
            naive_no_scaleup(p, CFG, n_cap=20)
        with pytest.raises(SearchExhausted):
            sqrt_policy(p, CFG, n_cap=10)

    def test_pilot_validation(self, pilot_params):
        with pytest.raises(DomainError):
            PilotStudy(pilot_params, 5, 0, 10)


class TestSweep:
    @pytest.mark.parametrize("m1", [5, 10, 20])
    def test_interior_maximum(self, pilot_params, m1):
        sweep = optimal_n_sweep(m1, pilot_params, CFG, range(2, 401, 2))
        assert sweep.has_interior_max
        k = int(np.argmax(sweep.standardized_effect))
        assert sweep.power[k] > sweep.power[0] and sweep.power[k] > sweep.power[-1]
        assert sweep.n_total[0] < sweep.argmax < sweep.n_total[-1]

    def test_argmax_grows_with_servers(self, pilot_params):
        argmaxes = [optimal_n_sweep(m, pilot_params, CFG, range(2, 401, 2)).argmax for m in (5, 10, 20)]
        assert argmaxes == sorted(argmaxes)

    def test_rows_match_estimator(self, pilot_params):
        sweep = optimal_n_sweep(5, pilot_params, CFG, [10, 20])
        em = estimator_moments(pilot_params, 5, 10, 10, 10.0)
        assert sweep.effect[1] == pytest.approx(em.effect)
        assert sweep.std_error[1] == pytest.approx(math.sqrt(em.variance_at_T))
        assert sweep.power[1] == pytest.approx(power_at_true_effect(pilot_params, 5, 10, 10, CFG))

    @pytest.mark.parametrize("bad", [[], [3, 4], [0, 2]])
    def test_rejects_bad_ranges(self, pilot_params, bad):
        with pytest.raises(DomainError):
            optimal_n_sweep(5, pilot_params, CFG, bad)

    def test_constant_effect_variant_is_monotone(self, pilot_params):
        # without interference the effect would not dilute, so power only grows
        sweep = optimal_n_sweep(5, pilot_params, CFG, range(2, 201, 2))
        fixed = sweep.effect[0]
        power = [
            power_at_mde(se**2 / 2, se**2 / 2, fixed, CFG.alpha) for se in sweep.std_error
        ]
        assert all(b >= a for a, b in zip(power, power[1:]))

    @pytest.mark.parametrize(
        "field, values, direction",
        [
            ("lam", [0.2, 0.3, 0.4], -1),
            ("tau", [0.2, 0.3, 0.4], +1),
            ("mu", [2.0, 3.0, 4.0], +1),
            ("p", [0.4, 0.5, 0.6], +1),
        ],
    )
    def test_argmax_direction(self, figure4_params, field, values, direction):
        base = dict(lam=figure4_params.lam, tau=figure4_params.tau, mu=figure4_params.mu, p=figure4_params.p)
        argmaxes = []
        for v in values:
            params = ModelParams(**{**base, field: v})
            argmaxes.append(optimal_n_sweep(5, params, CFG, range(2, 401, 2)).argmax)
        diffs = np.sign(np.diff(argmaxes))
        assert np.all(diffs == direction), argmaxes
