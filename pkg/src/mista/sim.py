"""Replicated Monte Carlo runs of the slot dynamics.

Random streams: replication ``i`` of a run with seed ``s`` uses
``numpy.random.SeedSequence(s + i).generate_state(1)[0]`` as the 32-bit seed
of numba's per-thread Mersenne Twister (MT19937). The ``reference`` engine
instead steps :func:`mista.protocol.step` with ``numpy.random.PCG64(s + i)``;
it is slow and exists to cross-check the kernel.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel
from .analytic import ActiveCountPmf, support_min
from .errors import AccumulatorOverflowError, ParameterError
from .protocol import NetworkState, Policy, PolicyParams, step

log = logging.getLogger(__name__)

TRAJECTORY_POINTS = 10_000
STARTS = ("threshold", "fresh", "staggered")
_ACC_LIMIT = 2**62


@dataclass(frozen=True)
class RunConfig:
    params: PolicyParams
    slots: int
    warmup_slots: int | None = None  # default: 10% of slots
    seed: int = 0
    replications: int = 1
    start: str = "threshold"  # initial ages, see initial_ages
    engine: str = "kernel"

    def __post_init__(self) -> None:
        if self.slots < 1:
            raise ParameterError("slots must be positive")
        if self.warmup_slots is None:
            object.__setattr__(self, "warmup_slots", self.slots // 10)
        if not 0 <= self.warmup_slots < self.slots:
            raise ParameterError(f"warmup_slots must lie in [0, slots), got {self.warmup_slots}")
        if self.replications < 1:
            raise ParameterError("replications must be positive")
        if self.engine not in ("kernel", "reference"):
            raise ParameterError(f"unknown engine {self.engine!r}")
        if self.start not in STARTS:
            raise ParameterError(f"unknown start {self.start!r}; expected one of {STARTS}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def measured_slots(self) -> int:
        return self.slots - self.warmup_slots

    @property
    def sample_every(self) -> int:
        return max(1, self.slots // TRAJECTORY_POINTS)


@dataclass(frozen=True)
class RunMetrics:
    """Statistics over the post-warm-up slots of one run.

    Trajectory arrays cover the whole run, warm-up included, sampled every
    ``max(1, slots // 10**4)`` slots.
    """

    avg_aoi_per_source: np.ndarray
    network_avg_aoi: float
    throughput: float
    active_count_histogram: dict[int, float]
    successes: int
    resets_per_source: np.ndarray
    n: int
    measured_slots: int
    seed: int
    trajectory_t: np.ndarray = field(repr=False)
    trajectory_m: np.ndarray = field(repr=False)
    trajectory_aoi: np.ndarray = field(repr=False)
    trajectory_pivot_age: np.ndarray = field(repr=False)

    @property
    def k_trajectory(self) -> np.ndarray:
        """(slot, m/n) pairs."""
        return np.column_stack([self.trajectory_t, self.trajectory_m / self.n])

    @property
    def normalized_aoi(self) -> float:
        return self.network_avg_aoi / self.n

    def scalars(self) -> dict[str, float]:
        return {
            "throughput": self.throughput,
            "network_avg_aoi": self.network_avg_aoi,
            "aoi_over_n": self.normalized_aoi,
            "successes": float(self.successes),
        }


@dataclass(frozen=True)
class ReplicatedMetrics:
    runs: tuple[RunMetrics, ...]
    mean: dict[str, float]
    std: dict[str, float]


def stream_seed(seed: int, replication: int) -> int:
    return int(np.random.SeedSequence(seed + replication).generate_state(1, dtype=np.uint32)[0])


def _check_overflow(params: PolicyParams, slots: int) -> None:
    # a single source's age never exceeds slots + gamma, summed over at most `slots` slots
    if slots * (slots + params.effective_gamma) >= _ACC_LIMIT:
        raise AccumulatorOverflowError(f"{slots} slots could overflow the age accumulators")


def initial_ages(params: PolicyParams, start: str = "threshold") -> np.ndarray:
    """Age vector at slot 0.

    ``threshold``: every source at gamma (all active). ``fresh``: every source
    at age 1. ``staggered``: distinct ages spread evenly over 1..gamma-1, so
    nobody is active and sources join one by one; sources beyond gamma-1
    start active.
    """
    n, gamma = params.n, params.effective_gamma
    if start == "threshold":
        return np.full(n, gamma, np.int64)
    if start == "fresh":
        return np.ones(n, np.int64)
    if start == "staggered":
        slots = gamma - 1
        ages = np.full(n, gamma, np.int64)
        k = min(n, slots)
        if k:
            ages[:k] = 1 + (np.arange(k) * slots) // k
        return ages
    raise ParameterError(f"unknown start {start!r}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def _mode(params: PolicyParams) -> int:
    if params.policy is Policy.MISTA:
        return _kernel.MINISLOT
    if params.policy is Policy.MUMISTA:
        return _kernel.MULTI_MINISLOT
    return _kernel.SINGLE_TOSS


def _metrics(config, seed, age_sum, resets, hist, successes, st, sm, sa, sp) -> RunMetrics:
    n = config.params.n
    measured = config.measured_slots
    per_source = age_sum / measured
    total = hist.sum()
    histogram = {int(m): float(c / total) for m, c in enumerate(hist) if c}
    return RunMetrics(
        avg_aoi_per_source=_freeze(per_source),
        network_avg_aoi=float(per_source.mean()),
        throughput=successes / measured,
        active_count_histogram=histogram,
        successes=int(successes),
        resets_per_source=_freeze(resets),
        n=n,
        measured_slots=measured,
        seed=seed,
        trajectory_t=_freeze(st),
        trajectory_m=_freeze(sm),
        trajectory_aoi=_freeze(sa),
        trajectory_pivot_age=_freeze(sp),
    )


def _run_kernel(config: RunConfig, seed: int) -> RunMetrics:
    p = config.params
    schedule = p.retention if p.policy is Policy.MUMISTA else (1.0,)
    out = _kernel.run_kernel(
        p.n, p.effective_gamma, _mode(p), p.tau1, p.effective_tau2, schedule,
        config.slots, config.warmup_slots, stream_seed(seed, 0), initial_ages(p, config.start), config.sample_every,
    )
    return _metrics(config, seed, *out)


def _run_reference(config: RunConfig, seed: int) -> RunMetrics:
    p = config.params
    n, W = p.n, config.warmup_slots
    rng = np.random.Generator(np.random.PCG64(seed))
    state = NetworkState(initial_ages(p, config.start))
    age_sum = np.zeros(n, np.int64)
    resets = np.zeros(n, np.int64)
    hist = np.zeros(n + 1, np.int64)
    samples = []
    successes = 0
    for t in range(config.slots):
        m = int((state.ages >= p.effective_gamma).sum())
        if t % config.sample_every == 0:
            samples.append((t, m, float(state.ages.mean()), int(state.ages[0])))
        if t >= W:
            age_sum += state.ages
            hist[m] += 1
        state, outcome = step(state, p, rng)
        if outcome.winner is not None and t >= W:
            successes += 1
            resets[outcome.winner] += 1
    st, sm, sa, sp = (np.array(c) for c in zip(*samples))
    return _metrics(config, seed, age_sum, resets, hist, successes, st, sm, sa, sp)


def run(config: RunConfig) -> RunMetrics:
    """Simulate one replication with ``config.seed``."""
    _check_overflow(config.params, config.slots)
    if config.engine == "reference":
        return _run_reference(config, config.seed)
    return _run_kernel(config, config.seed)


def _default_workers() -> int:
    env = os.environ.get("MISTA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicated(config: RunConfig, workers: int | None = None) -> ReplicatedMetrics:
    """Run ``config.replications`` independent replications with seeds seed, seed+1, ...

    The kernel releases the GIL, so replications run on a thread pool.
    """
    _check_overflow(config.params, config.slots)
    configs = [replace(config, seed=config.seed + i, replications=1) for i in range(config.replications)]
    workers = workers or _default_workers()
    if workers == 1 or len(configs) == 1:
        runs = [run(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(configs))) as ex:
            runs = list(ex.map(run, configs))
    keys = runs[0].scalars().keys()
    table = {k: np.array([r.scalars()[k] for r in runs]) for k in keys}
    mean = {k: float(v.mean()) for k, v in table.items()}
    std = {k: float(v.std(ddof=1)) if v.size > 1 else 0.0 for k, v in table.items()}
    log.debug("replicated %d runs: %s", len(runs), mean)
    return ReplicatedMetrics(tuple(runs), mean, std)


def empirical_active_pmf(metrics: RunMetrics, gamma: int | None = None) -> ActiveCountPmf:
    """Normalised active-count histogram laid out like the analytic PMF."""
    hist = metrics.active_count_histogram
    if not hist:
        raise ParameterError("empty active-count histogram")
    n = metrics.n
    lo = min(hist) if gamma is None else min(support_min(n, gamma), min(hist))
    probs = np.zeros(n - lo + 1)
    for m, f in hist.items():
        probs[m - lo] = f
    return ActiveCountPmf(lo, probs / probs.sum())


def steady_state_entry(trajectory: np.ndarray, times: np.ndarray, target: float, rel_tol: float) -> int | None:
    """First sampled slot from which the series stays within ``rel_tol`` of ``target``."""
    ok = np.abs(trajectory - target) <= rel_tol * abs(target)
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return int(times[0] if bad.size == 0 else times[bad[-1] + 1])
