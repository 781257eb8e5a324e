"""Closed birth-death queue for a population of two-state users.

Each of ``N`` users alternates between a desired state (0) and an undesired
state (1).  Users in state 1 wait for one of ``M`` servers; a completed
service returns the user to state 0 with probability ``p``, and users also
recover on their own at rate ``tau``.  The number of users in state 1 is a
birth-death chain on ``0..N`` with

    birth(i) = (N - i) * lam
    death(i) = min(i, M) * mu * p + i * tau

``M = 0`` is a valid system: it is the control group, which gets no service.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from capacity_rct.errors import DomainError

# Width of the QED band, in units of sqrt(N).  Same constant as the default
# square-root staffing buffer.
REGIME_GAMMA = 0.5


@dataclass(frozen=True)
class ModelParams:
    """Per-user rates: ``lam`` leaves the desired state, ``tau`` recovers
    unassisted, ``mu`` is the per-server service rate and ``p`` the chance a
    service ends in the desired state."""

    lam: float
    tau: float
    mu: float
    p: float

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lambda must be > 0, got {self.lam}")
        if not self.tau >= 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")
        if not self.mu > 0:
            raise DomainError(f"mu must be > 0, got {self.mu}")
        if not 0 <= self.p <= 1:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")

    @property
    def critical_ratio(self) -> float:
        return critical_ratio(self)


@dataclass(frozen=True)
class SystemSize:
    servers: int
    users: int

    def __post_init__(self):
        if self.users < 1:
            raise DomainError(f"users must be >= 1, got {self.users}")
        if self.servers < 0:
            raise DomainError(f"servers must be >= 0, got {self.servers}")

    @property
    def ratio(self) -> float:
        return self.servers / self.users


class Regime(str, enum.Enum):
    EFFICIENCY_DRIVEN = "EfficiencyDriven"
    QUALITY_DRIVEN = "QualityDriven"
    QUALITY_EFFICIENCY_DRIVEN = "QualityEfficiencyDriven"


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Steady-state law of the queue length; ``probs[j] = P(X = j)``."""

    probs: np.ndarray
    size: SystemSize

    @property
    def mean(self) -> float:
        return mean_queue_length(self)


def _check_state(i: int, size: SystemSize) -> None:
    if not 0 <= i <= size.users:
        raise DomainError(f"queue length {i} outside 0..{size.users}")


def rate_up(i: int, params: ModelParams, size: SystemSize) -> float:
    """Rate at which the queue grows from ``i`` to ``i + 1``."""
    _check_state(i, size)
    return (size.users - i) * params.lam


def rate_down(i: int, params: ModelParams, size: SystemSize) -> float:
    """Rate at which the queue shrinks from ``i`` to ``i - 1``."""
    _check_state(i, size)
    return min(i, size.servers) * params.mu * params.p + i * params.tau


def birth_rates(params: ModelParams, size: SystemSize) -> np.ndarray:
    """Vectorised ``rate_up`` over all states ``0..N``."""
    i = np.arange(size.users + 1)
    return (size.users - i) * params.lam


def death_rates(params: ModelParams, size: SystemSize) -> np.ndarray:
    """Vectorised ``rate_down`` over all states ``0..N``."""
    i = np.arange(size.users + 1)
    return np.minimum(i, size.servers) * params.mu * params.p + i * params.tau


def stationary_distribution(params: ModelParams, size: SystemSize) -> StationaryDistribution:
    """Solve the balance equations by the ratio recursion, in log space.

    ``pi(j) = pi(j-1) * birth(j-1) / death(j)``.  Log-ratios are accumulated
    and the running maximum is subtracted before exponentiating, so the
    result stays finite for N in the tens of thousands.  States whose mass
    underflows come out as exact zeros.
    """
    up = birth_rates(params, size)[:-1]
    down = death_rates(params, size)[1:]
    with np.errstate(divide="ignore"):
        log_ratio = np.log(up) - np.log(down)
    # death(j) == 0 only when tau == 0 and (M == 0 or p == 0): every user is
    # eventually absorbed in the undesired state.
    if np.any(down == 0):
        probs = np.zeros(size.users + 1)
        probs[-1] = 1.0
        return StationaryDistribution(probs, size)
    log_pi = np.concatenate(([0.0], np.cumsum(log_ratio)))
    log_pi -= log_pi.max()
    probs = np.exp(log_pi)
    probs /= math.fsum(probs)
    return StationaryDistribution(probs, size)


def mean_queue_length(dist: StationaryDistribution) -> float:
    """Expected number of users in the undesired state, ``sum_j j pi(j)``."""
    j = np.arange(len(dist.probs))
    return math.fsum(j * dist.probs)


def critical_ratio(params: ModelParams) -> float:
    return params.lam / (params.lam + params.tau + params.mu * params.p)


def offered_load(params: ModelParams, users: int) -> float:
    """Expected queue length if a server were always free: ``r * N``."""
    if users < 1:
        raise DomainError(f"users must be >= 1, got {users}")
    return critical_ratio(params) * users


def ceil_count(x: float) -> int:
    """Ceiling for server counts, forgiving float noise just above an integer."""
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def classify_regime(
    params: ModelParams, size: SystemSize, gamma: float = REGIME_GAMMA
) -> Regime:
    """Label the system by comparing ``M`` with the band ``rN -+ gamma*sqrt(N)``.

    The top of the QED band is the square-root staffing level
    ``ceil(rN + gamma*sqrt(N))``, so a system staffed by that rule is QED.
    ``gamma=0`` reduces to the large-system rule ``M/N`` versus ``r``.
    """
    load = offered_load(params, size.users)
    buffer = gamma * math.sqrt(size.users)
    if size.servers > ceil_count(load + buffer):
        return Regime.QUALITY_DRIVEN
    if size.servers < load - buffer:
        return Regime.EFFICIENCY_DRIVEN
    return Regime.QUALITY_EFFICIENCY_DRIVEN
