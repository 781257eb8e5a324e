"""Fluid limit of the queue as M, N grow with M/N -> mbar.

``z`` is the fraction of users in the undesired state.  Service capacity
binds once ``z`` reaches ``mbar``, which puts a kink in the vector field at
``z = mbar`` and in the steady state at ``mbar = r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from capacity_rct.errors import DomainError
from capacity_rct.queueing import ModelParams, SystemSize, critical_ratio

DEFAULT_STEP = 0.01


@dataclass(frozen=True, eq=False)
class FluidTrajectory:
    times: np.ndarray
    z: np.ndarray

    @property
    def final(self) -> float:
        return float(self.z[-1])


def fluid_derivative(z: float, mbar: float, params: ModelParams) -> float:
    if not 0 <= z <= 1:
        raise DomainError(f"fluid state must lie in [0, 1], got {z}")
    served = z if z < mbar else mbar
    return params.lam * (1 - z) - served * params.mu * params.p - z * params.tau


def fluid_steady_state(mbar: float, params: ModelParams) -> float:
    if mbar < 0:
        raise DomainError(f"server ratio must be nonnegative, got {mbar}")
    if mbar <= critical_ratio(params):
        return (params.lam - mbar * params.mu * params.p) / (params.lam + params.tau)
    return critical_ratio(params)


def fluid_effect(mbar: float, params: ModelParams) -> float:
    """Treatment effect in the fluid limit: linear in ``mbar`` up to ``r``, flat after."""
    if mbar < 0:
        raise DomainError(f"server ratio must be nonnegative, got {mbar}")
    base = params.lam + params.tau
    served = params.mu * params.p
    if mbar <= critical_ratio(params):
        return mbar * served / base
    return params.lam * served / (base * (base + served))


def integrate_fluid(
    z0: float,
    mbar: float,
    params: ModelParams,
    horizon: float,
    step: float = DEFAULT_STEP,
) -> FluidTrajectory:
    """Classical RK4 with a fixed step; the last step is shortened to land on ``horizon``.

    The field is continuous across ``z = mbar``, so each stage simply
    evaluates whichever branch it lands in.
    """
    if not 0 <= z0 <= 1:
        raise DomainError(f"initial state must lie in [0, 1], got {z0}")
    if not horizon > 0 or not step > 0:
        raise DomainError("horizon and step must be positive")
    if step > horizon:
        raise DomainError(f"step {step} exceeds horizon {horizon}")

    def f(z):
        # RK4 stages can overshoot [0, 1] by O(h^5); clamp before evaluating.
        return fluid_derivative(min(max(z, 0.0), 1.0), mbar, params)

    n_full = int(horizon / step + 1e-9)
    times = [i * step for i in range(n_full + 1)]
    if horizon - times[-1] > 1e-12 * horizon:
        times.append(horizon)
    else:
        times[-1] = horizon
    zs = [z0]
    z = z0
    for t0, t1 in zip(times[:-1], times[1:]):
        h = t1 - t0
        k1 = f(z)
        k2 = f(z + 0.5 * h * k1)
        k3 = f(z + 0.5 * h * k2)
        k4 = f(z + h * k3)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        zs.append(z)
    return FluidTrajectory(np.asarray(times), np.asarray(zs))


def relaxation_horizon(params: ModelParams) -> float:
    """Horizon after which the fluid path has settled: 50 slowest time constants."""
    return 50.0 / (params.lam + params.tau)


def approx_queue_length(params: ModelParams, size: SystemSize) -> float:
    return size.users * fluid_steady_state(size.ratio, params)
