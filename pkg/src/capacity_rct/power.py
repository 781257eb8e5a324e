"""Power of the one-sided z-test and the three pilot-to-trial sizing policies.

All policies return designs with ``N1 == N0`` and report the power the
design actually has under the queueing model, whatever assumptions the
policy used to choose it.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from capacity_rct.errors import DomainError, SearchExhausted
from capacity_rct.estimator import (
    control_moments,
    estimator_moments,
    treatment_moments,
)
from capacity_rct.queueing import ModelParams, ceil_count, critical_ratio

DEFAULT_GAMMA = 0.5
DEFAULT_N_CAP = 10_000


class Policy(str, enum.Enum):
    NAIVE_NO_SCALEUP = "NaiveNoScaleUp"
    NAIVE_PROPORTIONAL = "NaiveProportional"
    SQRT_STAFFING = "SqrtStaffing"


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    beta: float = 0.8
    horizon: float = 10.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.alpha < self.beta < 1:
            raise DomainError(
                f"need 0 < alpha < beta < 1, got alpha={self.alpha}, beta={self.beta}"
            )
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class PilotStudy:
    """A pilot with oracle knowledge of its own estimator distribution.

    The effect and asymptotic variances are filled in from the model at
    construction, so they cannot disagree with the analytics.
    """

    params: ModelParams
    m1p: int
    n1p: int
    n0p: int
    effect: float = field(init=False)
    treat_asy_variance: float = field(init=False)
    control_asy_variance: float = field(init=False)

    def __post_init__(self):
        if self.n1p < 1 or self.n0p < 1 or self.m1p < 0:
            raise DomainError("pilot needs n1p, n0p >= 1 and m1p >= 0")
        treat = treatment_moments(self.params, self.m1p, self.n1p)
        control = control_moments(self.params, self.n0p)
        object.__setattr__(self, "effect", treat.mean - control.mean)
        object.__setattr__(self, "treat_asy_variance", treat.asy_variance)
        object.__setattr__(self, "control_asy_variance", control.asy_variance)


@dataclass(frozen=True)
class DesignTriple:
    m1: int
    n1: int
    n0: int
    achieved_power: float
    policy: Policy


def power_at_mde(
    variance_treat: float, variance_control: float, mde: float, alpha: float
) -> float:
    """``1 - Phi(z_{1-alpha} - mde / sd)`` for the one-sided z-test."""
    if variance_treat < 0 or variance_control < 0:
        raise DomainError("variances must be nonnegative")
    total = variance_treat + variance_control
    if total <= 0:
        raise DomainError("total variance is zero; power is undefined")
    # norm.sf keeps precision where 1 - cdf would round to 0 or 1.
    return float(norm.sf(norm.isf(alpha) - mde / math.sqrt(total)))


def power_at_true_effect(
    params: ModelParams, m1: int, n1: int, n0: int, config: TestConfig
) -> float:
    moments = estimator_moments(params, m1, n1, n0, config.horizon)
    return power_at_mde(
        moments.treat_asy_variance / config.horizon,
        moments.control_asy_variance / config.horizon,
        moments.effect,
        config.alpha,
    )


def _naive_n1(pilot: PilotStudy, config: TestConfig, n_cap: int) -> int:
    # The naive experimenter takes the pilot effect as fixed and scales both
    # pilot variances by 1/N.  Power is then increasing in N, so the first
    # feasible N is the minimum; the scan starts at the pilot size.
    for n in range(pilot.n1p, n_cap + 1):
        v_treat = pilot.treat_asy_variance * pilot.n1p / (n * config.horizon)
        v_control = pilot.control_asy_variance * pilot.n0p / (n * config.horizon)
        if power_at_mde(v_treat, v_control, pilot.effect, config.alpha) >= config.beta:
            return n
    raise SearchExhausted(f"no N1 <= {n_cap} meets power {config.beta} under naive assumptions")


def naive_no_scaleup(
    pilot: PilotStudy, config: TestConfig, n_cap: int = DEFAULT_N_CAP
) -> DesignTriple:
    n1 = _naive_n1(pilot, config, n_cap)
    m1 = pilot.m1p
    return DesignTriple(
        m1, n1, n1, power_at_true_effect(pilot.params, m1, n1, n1, config),
        Policy.NAIVE_NO_SCALEUP,
    )


def naive_proportional(
    pilot: PilotStudy, config: TestConfig, n_cap: int = DEFAULT_N_CAP
) -> DesignTriple:
    n1 = _naive_n1(pilot, config, n_cap)
    m1 = -(-pilot.m1p * n1 // pilot.n1p)
    return DesignTriple(
        m1, n1, n1, power_at_true_effect(pilot.params, m1, n1, n1, config),
        Policy.NAIVE_PROPORTIONAL,
    )


def sqrt_staffing(n1: int, params: ModelParams, gamma: float = DEFAULT_GAMMA) -> int:
    """Square-root staffing: ``ceil(r * N1 + gamma * sqrt(N1))`` servers."""
    if n1 < 1:
        raise DomainError(f"n1 must be >= 1, got {n1}")
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    return ceil_count(critical_ratio(params) * n1 + gamma * math.sqrt(n1))


def sqrt_policy(
    pilot: PilotStudy,
    config: TestConfig,
    gamma: float = DEFAULT_GAMMA,
    n_cap: int = DEFAULT_N_CAP,
) -> DesignTriple:
    """Smallest ``N1 = N0`` whose square-root-staffed design reaches power ``beta``.

    Uses the true effect and exact asymptotic variances at every candidate.
    Power is not monotone in ``N1`` under the queueing model, so this is a
    plain scan from 1 rather than a bisection.
    """
    params = pilot.params
    for n in range(1, n_cap + 1):
        m = sqrt_staffing(n, params, gamma)
        power = power_at_true_effect(params, m, n, n, config)
        if power >= config.beta:
            return DesignTriple(m, n, n, power, Policy.SQRT_STAFFING)
    raise SearchExhausted(f"no N1 <= {n_cap} meets power {config.beta} with sqrt staffing")


def run_policies(
    pilot: PilotStudy, config: TestConfig, gamma: float = DEFAULT_GAMMA,
    n_cap: int = DEFAULT_N_CAP,
) -> list[DesignTriple]:
    return [
        naive_no_scaleup(pilot, config, n_cap),
        naive_proportional(pilot, config, n_cap),
        sqrt_policy(pilot, config, gamma, n_cap),
    ]


@dataclass(frozen=True, eq=False)
class PowerSweep:
    """Power against total enrolment ``N`` with ``N1 = N0 = N/2``."""

    m1: int
    n_total: np.ndarray
    power: np.ndarray
    effect: np.ndarray
    std_error: np.ndarray

    @property
    def standardized_effect(self) -> np.ndarray:
        return self.effect / self.std_error

    @property
    def argmax(self) -> int:
        # Power is increasing in effect/se but saturates at 1.0 in floating
        # point; ranking on effect/se keeps the maximiser well defined.
        return int(self.n_total[int(np.argmax(self.standardized_effect))])

    @property
    def has_interior_max(self) -> bool:
        z = self.standardized_effect
        best = float(np.max(z))
        return best > z[0] and best > z[-1]


def optimal_n_sweep(
    m1: int, params: ModelParams, config: TestConfig, n_values: Iterable[int]
) -> PowerSweep:
    """Evaluate power over even total sizes ``N`` and locate the best one."""
    n_total = np.asarray(list(n_values), dtype=int)
    if n_total.size == 0:
        raise DomainError("sweep range is empty")
    if np.any(n_total % 2) or np.any(n_total < 2):
        raise DomainError("sweep sizes must be even and >= 2 so that N1 = N0 = N/2")
    power = np.empty(n_total.size)
    effect = np.empty(n_total.size)
    std_error = np.empty(n_total.size)
    for k, n in enumerate(n_total):
        half = int(n) // 2
        moments = estimator_moments(params, m1, half, half, config.horizon)
        effect[k] = moments.effect
        std_error[k] = math.sqrt(moments.variance_at_T)
        power[k] = power_at_mde(
            moments.treat_asy_variance / config.horizon,
            moments.control_asy_variance / config.horizon,
            moments.effect,
            config.alpha,
        )
    return PowerSweep(m1, n_total, power, effect, std_error)
