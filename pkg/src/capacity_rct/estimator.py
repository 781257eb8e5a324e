"""Large-T moments of the difference-in-means estimator.

The treatment group is one closed queue with ``M1`` servers and ``N1``
users; the control group is ``N0`` independent unserved users.  Means are
steady-state fractions of time spent in the desired state.  Variances are
asymptotic, i.e. ``lim T * Var(time average)``; divide by ``T`` for a
finite-horizon approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from capacity_rct import fluid
from capacity_rct.errors import DomainError
from capacity_rct.queueing import (
    ModelParams,
    StationaryDistribution,
    SystemSize,
    birth_rates,
    mean_queue_length,
    stationary_distribution,
)


@dataclass(frozen=True)
class GroupMoments:
    mean: float
    asy_variance: float


@dataclass(frozen=True)
class EstimatorMoments:
    effect: float
    variance_at_T: float
    horizon: float
    treat_asy_variance: float
    control_asy_variance: float


def queue_length_asy_variance(dist: StationaryDistribution, params: ModelParams) -> float:
    """Asymptotic variance of the time-averaged queue length.

    Birth-death formula (Burman; Whitt 1992) with ``f(i) = i``::

        2 * sum_{j<N} [sum_{i<=j} (i - K) pi(i)]^2 / (birth(j) pi(j))

    The partial sums telescope to zero at ``j = N``, so in the upper tail
    they are taken from the right (``-sum_{i>j}``) to avoid cancellation.
    """
    probs = dist.probs
    n = dist.size.users
    k_bar = mean_queue_length(dist)
    weighted = (np.arange(n + 1) - k_bar) * probs
    left = np.cumsum(weighted)
    right = -(np.cumsum(weighted[::-1])[::-1] - weighted)
    mass = np.cumsum(probs)
    partial = np.where(mass <= 0.5, left, right)[:n]
    denom = birth_rates(params, dist.size)[:n] * probs[:n]
    # Underflowed states carry O(pi) partial sums, so their terms vanish.
    ok = denom > 0
    return 2.0 * math.fsum(partial[ok] ** 2 / denom[ok])


def control_moments(params: ModelParams, n0: int) -> GroupMoments:
    if n0 < 1:
        raise DomainError(f"control group needs at least one user, got {n0}")
    total = params.lam + params.tau
    mean = params.tau / total
    var = 2.0 * params.lam * params.tau / total**3 / n0
    return GroupMoments(mean, var)


def treatment_moments(params: ModelParams, m1: int, n1: int) -> GroupMoments:
    size = SystemSize(m1, n1)
    dist = stationary_distribution(params, size)
    mean = 1.0 - mean_queue_length(dist) / n1
    var = queue_length_asy_variance(dist, params) / n1**2
    return GroupMoments(mean, var)


def steady_state_effect(params: ModelParams, m1: int, n1: int) -> float:
    """Treatment minus control share of time in the desired state; free of ``N0``."""
    dist = stationary_distribution(params, SystemSize(m1, n1))
    return (1.0 - mean_queue_length(dist) / n1) - params.tau / (params.lam + params.tau)


def estimator_moments(
    params: ModelParams, m1: int, n1: int, n0: int, horizon: float
) -> EstimatorMoments:
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    treat = treatment_moments(params, m1, n1)
    control = control_moments(params, n0)
    return EstimatorMoments(
        effect=treat.mean - control.mean,
        variance_at_T=(treat.asy_variance + control.asy_variance) / horizon,
        horizon=horizon,
        treat_asy_variance=treat.asy_variance,
        control_asy_variance=control.asy_variance,
    )


def scale_up_bias(
    params: ModelParams, experiment_ratio: float, deployment_ratio: float
) -> float:
    """Fluid-limit bias of an experiment run at one server/user ratio and
    deployed at another: ``theta*(experiment) - theta*(deployment)``.

    Zero when both ratios are at or above the critical ratio; positive
    (the experiment overstates the effect) when deployment is more
    congested than the experiment.
    """
    if experiment_ratio < 0 or deployment_ratio < 0:
        raise DomainError("server/user ratios must be nonnegative")
    return fluid.fluid_effect(experiment_ratio, params) - fluid.fluid_effect(
        deployment_ratio, params
    )
