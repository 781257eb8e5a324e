"""Event-driven simulation of the queue, used to check the analytics.

Random streams: replication ``k`` of a run seeded with ``seed`` draws from
``PCG64(SeedSequence(seed, spawn_key=(k, stream)))``.  Stream 0 is the
treatment queue; stream ``1 + u`` is control user ``u``.  A replication's
output therefore depends only on ``(seed, k)``, never on scheduling.
"""

from __future__ import annotations

import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from capacity_rct.errors import DomainError
from capacity_rct.estimator import queue_length_asy_variance
from capacity_rct.fluid import approx_queue_length
from capacity_rct.queueing import (
    ModelParams,
    SystemSize,
    birth_rates,
    death_rates,
    mean_queue_length,
    stationary_distribution,
)

THREADS_ENV = "CAPACITY_RCT_THREADS"
DEFAULT_RESAMPLES = 10_000
_CHUNK = 4096


@dataclass(frozen=True)
class SimConfig:
    seed: int
    horizon: float
    replications: int = 500
    initial_queue: int = 0
    checkpoint_times: tuple[float, ...] = field(default=())
    stationary_start: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.replications < 1:
            raise DomainError("need at least one replication")
        if self.initial_queue < 0:
            raise DomainError("initial queue length must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        cps = tuple(float(t) for t in self.checkpoint_times) or (float(self.horizon),)
        if any(t <= 0 for t in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
            raise DomainError("checkpoint times must be positive and strictly ascending")
        if cps[-1] > self.horizon:
            raise DomainError("last checkpoint lies beyond the horizon")
        object.__setattr__(self, "checkpoint_times", cps)


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Piecewise-constant queue length: ``states[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    states: np.ndarray
    horizon: float
    _area: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        widths = np.diff(self.times)
        area = np.concatenate(([0.0], np.cumsum(self.states[:-1] * widths)))
        object.__setattr__(self, "_area", area)

    def integral(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self._area[k] + self.states[k] * (t - self.times[k]))


@dataclass(frozen=True, eq=False)
class SimSummary:
    """Across-replication statistics of the time-averaged queue length."""

    checkpoint_times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    mean_low: np.ndarray
    mean_high: np.ndarray
    var_low: np.ndarray
    var_high: np.ndarray
    replications: int


def replication_rng(seed: int, replication_index: int, stream: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(seed, spawn_key=(replication_index, stream))
    return np.random.Generator(np.random.PCG64(seq))


def simulate_path(
    params: ModelParams,
    size: SystemSize,
    config: SimConfig,
    replication_index: int,
    stream: int = 0,
    initial_queue: int | None = None,
) -> SamplePath:
    """Exact simulation of the birth-death chain up to ``config.horizon``.

    Holding times are exponential with the total rate in the current state,
    drawn by inverse transform; the jump is a birth with probability
    ``birth / total``.  With ``config.stationary_start`` the initial state
    is drawn from the stationary law (first uniform of the stream) and
    ``initial_queue`` is ignored.
    """
    rng = replication_rng(config.seed, replication_index, stream)
    if config.stationary_start and initial_queue is None:
        cdf = np.cumsum(stationary_distribution(params, size).probs)
        x = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), size.users)
    else:
        x = config.initial_queue if initial_queue is None else initial_queue
    if not 0 <= x <= size.users:
        raise DomainError(f"initial queue {x} outside 0..{size.users}")
    up = birth_rates(params, size).tolist()
    down = death_rates(params, size).tolist()
    horizon = config.horizon
    log = math.log

    times = [0.0]
    states = [x]
    t = 0.0
    buf = rng.random(2 * _CHUNK).tolist()
    pos = 0
    while True:
        b = up[x]
        total = b + down[x]
        if total <= 0.0:
            break
        if pos == len(buf):
            buf = rng.random(2 * _CHUNK).tolist()
            pos = 0
        u_time, u_jump = buf[pos], buf[pos + 1]
        pos += 2
        t -= log(1.0 - u_time) / total
        if t >= horizon:
            break
        x = x + 1 if u_jump * total < b else x - 1
        times.append(t)
        states.append(x)
    return SamplePath(np.asarray(times), np.asarray(states, dtype=np.int64), horizon)


def time_average_queue(path: SamplePath, t: float) -> float:
    """``(1/t) * integral_0^t X(s) ds``, exact for the piecewise-constant path."""
    if not 0 < t <= path.horizon:
        raise DomainError(f"time {t} outside (0, {path.horizon}]")
    return path.integral(t) / t


def worker_count() -> int:
    """Process count for replication fan-out, capped by ``CAPACITY_RCT_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        cap = int(raw)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, min(cap, os.cpu_count() or 1))


def map_replications(
    func: Callable[[int], np.ndarray], replications: int, workers: int | None = None
) -> np.ndarray:
    """Run ``func(k)`` for every replication and stack results in index order."""
    workers = worker_count() if workers is None else workers
    indices = range(replications)
    if workers <= 1 or replications < 2:
        results = [func(k) for k in indices]
    else:
        chunk = max(1, replications // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(func, indices, chunksize=chunk))
    return np.asarray(results)


def _checkpoint_averages(params, size, config, k):
    path = simulate_path(params, size, config, k)
    return np.array([time_average_queue(path, t) for t in config.checkpoint_times])


def simulate_time_averages(
    params: ModelParams, size: SystemSize, config: SimConfig, workers: int | None = None
) -> np.ndarray:
    """Per-replication time-averaged queue lengths, shape ``(replications, checkpoints)``."""
    func = partial(_checkpoint_averages, params, size, config)
    return map_replications(func, config.replications, workers)


def _estimator_replication(params, m1, n1, n0, config, k):
    treat = simulate_path(params, SystemSize(m1, n1), config, k, stream=0)
    control_size = SystemSize(0, 1)
    control_start = None if config.stationary_start else 0
    control_total = 0.0
    for u in range(n0):
        path = simulate_path(
            params, control_size, config, k, stream=1 + u, initial_queue=control_start
        )
        control_total += time_average_queue(path, config.horizon)
    treat_share = 1.0 - time_average_queue(treat, config.horizon) / n1
    control_share = 1.0 - control_total / n0
    return treat_share - control_share


def simulate_estimator(
    params: ModelParams, m1: int, n1: int, n0: int, config: SimConfig,
    workers: int | None = None,
) -> np.ndarray:
    """Time-average estimator at ``config.horizon``, one value per replication.

    Unless ``config.stationary_start`` is set, control users start in the
    desired state and the treatment queue at ``config.initial_queue``.
    """
    if n1 < 1 or n0 < 1:
        raise DomainError("both groups need at least one user")
    func = partial(_estimator_replication, params, m1, n1, n0, config)
    return map_replications(func, config.replications, workers)


def bootstrap_interval(
    values: Sequence[float],
    level: float = 0.95,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int | Sequence[int] = 0,
    statistic: Callable = np.mean,
) -> tuple[float, float]:
    """Percentile bootstrap interval for ``statistic`` (the mean by default)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DomainError("bootstrap needs at least two values")
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if np.all(values == values[0]):
        c = float(statistic(values))
        return c, c
    res = stats.bootstrap(
        (values,),
        statistic,
        n_resamples=resamples,
        confidence_level=level,
        method="percentile",
        vectorized=True,
        rng=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def _sample_var(x, axis=-1):
    return np.var(x, axis=axis, ddof=1)


def summarize(
    averages: np.ndarray,
    checkpoint_times: Sequence[float],
    seed: int = 0,
    level: float = 0.95,
    resamples: int = DEFAULT_RESAMPLES,
) -> SimSummary:
    averages = np.atleast_2d(np.asarray(averages, dtype=float).T).T
    cols = averages.shape[1]
    mean_ci = [
        bootstrap_interval(averages[:, c], level, resamples, (seed, c, 0)) for c in range(cols)
    ]
    var_ci = [
        bootstrap_interval(averages[:, c], level, resamples, (seed, c, 1), _sample_var)
        for c in range(cols)
    ]
    return SimSummary(
        checkpoint_times=np.asarray(checkpoint_times, dtype=float),
        mean=averages.mean(axis=0),
        variance=averages.var(axis=0, ddof=1),
        mean_low=np.array([lo for lo, _ in mean_ci]),
        mean_high=np.array([hi for _, hi in mean_ci]),
        var_low=np.array([lo for lo, _ in var_ci]),
        var_high=np.array([hi for _, hi in var_ci]),
        replications=averages.shape[0],
    )


@dataclass(frozen=True)
class ValidationRow:
    time: float
    sim_mean: float
    mean_low: float
    mean_high: float
    sim_variance: float
    var_low: float
    var_high: float
    clt_mean: float
    clt_variance: float
    fluid_mean: float
    clt_mean_flag: bool
    fluid_mean_flag: bool
    clt_variance_flag: bool

    @property
    def scaled_variance_error(self) -> float:
        """Relative gap between ``t * sample variance`` and the asymptotic variance."""
        return abs(self.sim_variance / self.clt_variance - 1.0)


@dataclass(frozen=True)
class ValidationReport:
    params: ModelParams
    size: SystemSize
    replications: int
    asy_variance: float
    rows: tuple[ValidationRow, ...]

    def at(self, t: float) -> ValidationRow:
        for row in self.rows:
            if math.isclose(row.time, t):
                return row
        raise KeyError(t)


def validate_against_clt(
    params: ModelParams,
    size: SystemSize,
    config: SimConfig,
    level: float = 0.95,
    resamples: int = DEFAULT_RESAMPLES,
    workers: int | None = None,
) -> ValidationReport:
    """Compare simulated time-averaged queue lengths with the analytic approximations.

    A flag is raised at a checkpoint when the analytic value (large-T mean
    ``K``, large-T variance ``sigma^2 / t``, or fluid mean ``N z*``) falls
    outside the bootstrap interval of the matching simulated statistic.
    The variance flag is informational for small ``t``.
    """
    averages = simulate_time_averages(params, size, config, workers)
    summary = summarize(averages, config.checkpoint_times, config.seed, level, resamples)
    dist = stationary_distribution(params, size)
    k_bar = mean_queue_length(dist)
    asy_var = queue_length_asy_variance(dist, params)
    fluid_mean = approx_queue_length(params, size)
    rows = []
    for c, t in enumerate(summary.checkpoint_times):
        lo, hi = summary.mean_low[c], summary.mean_high[c]
        clt_var = asy_var / t
        rows.append(
            ValidationRow(
                time=float(t),
                sim_mean=float(summary.mean[c]),
                mean_low=float(lo),
                mean_high=float(hi),
                sim_variance=float(summary.variance[c]),
                var_low=float(summary.var_low[c]),
                var_high=float(summary.var_high[c]),
                clt_mean=k_bar,
                clt_variance=clt_var,
                fluid_mean=fluid_mean,
                clt_mean_flag=not lo <= k_bar <= hi,
                fluid_mean_flag=not lo <= fluid_mean <= hi,
                clt_variance_flag=not summary.var_low[c] <= clt_var <= summary.var_high[c],
            )
        )
    return ValidationReport(params, size, config.replications, asy_var, tuple(rows))
