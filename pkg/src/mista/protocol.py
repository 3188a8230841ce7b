"""Slot-level mechanics of slotted ALOHA, Threshold ALOHA, MiSTA and MuMiSTA.

Everything here is a pure function of ``(state, params, rng)``. The simulation
loop lives in :mod:`mista.sim`; this module is the per-slot reference that the
fast kernel is checked against.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

log = logging.getLogger(__name__)

# exp(j*log1p(-x)) is used once j*|log1p(-x)| exceeds this
_LOG_SPACE_CUTOFF = 30.0


class Policy(str, enum.Enum):
    SLOTTED_ALOHA = "sa"
    THRESHOLD_ALOHA = "ta"
    MISTA = "mista"
    MUMISTA = "mumista"


class OutcomeKind(str, enum.Enum):
    IDLE = "idle"
    MINI_SUCCESS = "mini_success"
    COLLISION_THEN_SUCCESS = "collision_then_success"
    COLLISION_THEN_FAIL = "collision_then_fail"
    COLLISION_THEN_SILENT = "collision_then_silent"


@dataclass(frozen=True)
class PolicyParams:
    """Finite-n protocol configuration.

    ``retention`` is only used by MuMiSTA: entry ``j`` is the probability that
    a current contender transmits in minislot ``j``. When omitted it defaults
    to ``(tau1, tau2, tau2, ...)``.
    """

    n: int
    gamma: int
    tau1: float
    tau2: float = 1.0
    policy: Policy = Policy.MISTA
    minislots: int = 1
    retention: tuple[float, ...] | None = None
    tau_order_violated: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        policy = Policy(self.policy)
        object.__setattr__(self, "policy", policy)
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        if not 0.0 < self.tau1 <= 1.0:
            raise ParameterError(f"tau1 must lie in (0, 1], got {self.tau1!r}")
        if not 0.0 < self.tau2 <= 1.0:
            raise ParameterError(f"tau2 must lie in (0, 1], got {self.tau2!r}")
        # Threshold ALOHA with gamma = 1 is plain slotted ALOHA; kept for cross-checks
        min_gamma = 1 if policy is Policy.THRESHOLD_ALOHA else 2
        if policy is not Policy.SLOTTED_ALOHA and (int(self.gamma) != self.gamma or self.gamma < min_gamma):
            raise ParameterError(f"gamma must be an integer >= {min_gamma}, got {self.gamma!r}")
        if policy is Policy.MUMISTA:
            if self.minislots < 1:
                raise ParameterError("MuMiSTA needs at least one minislot")
            if self.retention is None:
                sched = (self.tau1,) + (self.tau2,) * (self.minislots - 1)
                object.__setattr__(self, "retention", sched)
            else:
                object.__setattr__(self, "retention", tuple(float(p) for p in self.retention))
            if len(self.retention) != self.minislots:
                raise ParameterError(
                    f"retention schedule has {len(self.retention)} entries, expected {self.minislots}"
                )
            if any(not 0.0 < p <= 1.0 for p in self.retention):
                raise ParameterError("retention probabilities must lie in (0, 1]")
        if policy is Policy.MISTA and self.tau2 > self.tau1:
            object.__setattr__(self, "tau_order_violated", True)
            # the age-optimal point has tau2 > tau1 once n > 26, so only flag it
            log.debug("tau2=%s exceeds tau1=%s; formulas still apply", self.tau2, self.tau1)

    @property
    def effective_gamma(self) -> int:
        """Activity threshold actually used; slotted ALOHA keeps everyone active."""
        return 1 if self.policy is Policy.SLOTTED_ALOHA else int(self.gamma)

    @property
    def effective_tau2(self) -> float:
        """Post-collision attempt probability; single-toss policies behave as tau2 = 1."""
        return self.tau2 if self.policy is Policy.MISTA else 1.0


@dataclass(frozen=True)
class ScaledParams:
    """Asymptotic configuration: alpha = n*tau1, r = gamma/n."""

    alpha: float
    r: float
    tau2: float = 1.0

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha!r}")
        if not self.r > 0:
            raise ParameterError(f"r must be positive, got {self.r!r}")
        if not 0.0 < self.tau2 <= 1.0:
            raise ParameterError(f"tau2 must lie in (0, 1], got {self.tau2!r}")

    def to_policy(self, n: int, policy: Policy = Policy.MISTA, **kwargs) -> PolicyParams:
        tau1 = self.alpha / n
        if tau1 > 1.0:
            raise ParameterError(f"alpha={self.alpha} exceeds n={n}; tau1 would be {tau1}")
        tau2 = self.tau2 if Policy(policy) in (Policy.MISTA, Policy.MUMISTA) else 1.0
        return PolicyParams(n=n, gamma=int(round(self.r * n)), tau1=tau1, tau2=tau2, policy=policy, **kwargs)


@dataclass(frozen=True)
class NetworkState:
    """Per-source ages (slots) at the start of slot ``t``."""

    ages: np.ndarray
    t: int = 0

    def __post_init__(self) -> None:
        ages = np.asarray(self.ages, dtype=np.int64)
        if ages.ndim != 1 or ages.size == 0:
            raise ParameterError("ages must be a non-empty vector")
        if (ages < 1).any():
            raise ParameterError("ages must be >= 1")
        ages.setflags(write=False)
        object.__setattr__(self, "ages", ages)

    @classmethod
    def all_at(cls, n: int, age: int, t: int = 0) -> NetworkState:
        return cls(np.full(n, age, dtype=np.int64), t)


@dataclass(frozen=True)
class SlotOutcome:
    kind: OutcomeKind
    attempters: frozenset[int]
    data_transmitters: frozenset[int]
    winner: int | None = None

    @property
    def success(self) -> bool:
        return self.winner is not None


def pow1m(x: float, j: float) -> float:
    """(1 - x)**j, evaluated in log space when it would underflow."""
    if j == 0:
        return 1.0
    if x >= 1.0:
        return 0.0
    lg = math.log1p(-x)
    if j * abs(lg) > _LOG_SPACE_CUTOFF:
        return math.exp(j * lg)
    return (1.0 - x) ** j


def per_source_success(m: int, tau1: float, tau2: float) -> float:
    """Success probability of one particular active source when ``m`` are active."""
    if m <= 0:
        return 0.0
    return tau1 * ((1.0 - tau2) * pow1m(tau1, m - 1) + tau2 * pow1m(tau1 * tau2, m - 1))


def success_probability(m: int, tau1: float, tau2: float) -> float:
    """Probability that some source succeeds in a slot with ``m`` active sources.

    Sum of the sole-minislot-attempter term and the collision-then-single-data
    term. ``tau2 = 1`` recovers single-toss slotted ALOHA among ``m`` contenders.
    """
    if m < 0:
        raise ParameterError(f"m must be >= 0, got {m}")
    return m * per_source_success(m, tau1, tau2)


def active_set(state: NetworkState, params: PolicyParams) -> frozenset[int]:
    """Indices (0-based) of sources whose age has reached the threshold."""
    if params.policy is Policy.SLOTTED_ALOHA:
        return frozenset(range(state.ages.size))
    return frozenset(np.flatnonzero(state.ages >= params.gamma).tolist())


def advance(state: NetworkState, winner: int | None) -> NetworkState:
    """Age update: the winner restarts at 1, everyone else ages by one slot."""
    ages = state.ages + 1
    if winner is not None:
        ages[winner] = 1
    return NetworkState(ages, state.t + 1)


def _bernoulli_subset(members: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if members.size == 0:
        return members
    if p >= 1.0:
        return members
    return members[rng.random(members.size) < p]


def resolve(active: np.ndarray, params: PolicyParams, rng: np.random.Generator) -> SlotOutcome:
    """Run one slot's contention among the sorted ``active`` indices."""
    if params.policy is Policy.MUMISTA:
        return _resolve_mumista(active, params, rng)

    attempters = _bernoulli_subset(active, params.tau1, rng)
    att = frozenset(attempters.tolist())
    if attempters.size == 0:
        return SlotOutcome(OutcomeKind.IDLE, att, frozenset())
    if attempters.size == 1:
        w = int(attempters[0])
        return SlotOutcome(OutcomeKind.MINI_SUCCESS, att, att, w)
    if params.policy is not Policy.MISTA:
        # single toss: a collision is the whole slot
        return SlotOutcome(OutcomeKind.COLLISION_THEN_FAIL, att, att)

    data = _bernoulli_subset(attempters, params.tau2, rng)
    tx = frozenset(data.tolist())
    if data.size == 1:
        return SlotOutcome(OutcomeKind.COLLISION_THEN_SUCCESS, att, tx, int(data[0]))
    if data.size == 0:
        return SlotOutcome(OutcomeKind.COLLISION_THEN_SILENT, att, tx)
    return SlotOutcome(OutcomeKind.COLLISION_THEN_FAIL, att, tx)


def _resolve_mumista(active: np.ndarray, params: PolicyParams, rng: np.random.Generator) -> SlotOutcome:
    contenders = active
    seen: set[int] = set()
    collided = False
    for p in params.retention:
        attempters = _bernoulli_subset(contenders, p, rng)
        seen.update(attempters.tolist())
        if attempters.size == 1:
            w = int(attempters[0])
            kind = OutcomeKind.COLLISION_THEN_SUCCESS if collided else OutcomeKind.MINI_SUCCESS
            return SlotOutcome(kind, frozenset(seen), frozenset((w,)), w)
        if attempters.size >= 2:
            collided = True
            contenders = attempters
        # silence: the same contenders try again in the next minislot
    if collided:
        return SlotOutcome(OutcomeKind.COLLISION_THEN_SILENT, frozenset(seen), frozenset())
    return SlotOutcome(OutcomeKind.IDLE, frozenset(), frozenset())


def step(state: NetworkState, params: PolicyParams, rng: np.random.Generator) -> tuple[NetworkState, SlotOutcome]:
    """Advance the network by one slot."""
    if state.ages.size != params.n:
        raise ParameterError(f"state has {state.ages.size} sources, params expect {params.n}")
    if params.policy is Policy.SLOTTED_ALOHA:
        active = np.arange(params.n)
    else:
        active = np.flatnonzero(state.ages >= params.gamma)
    outcome = resolve(active, params, rng)
    return advance(state, outcome.winner), outcome


def mumista_step(state: NetworkState, params: PolicyParams, rng: np.random.Generator) -> tuple[NetworkState, SlotOutcome]:
    if params.policy is not Policy.MUMISTA:
        raise ParameterError("mumista_step requires a MuMiSTA policy")
    return step(state, params, rng)
