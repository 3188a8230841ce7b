"""Brute-force stationary analysis of the truncated age chain for tiny networks.

Transitions are generated from the per-slot success probabilities in
:mod:`mista.protocol` and the age-update rule, never from the closed forms
in :mod:`mista.analytic`, so the two can be compared.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import SizeError, SolverError
from .protocol import PolicyParams, ScaledParams, per_source_success

# dense matrices: rows beyond this cost >100 MB and minutes of elimination
STATE_GUARD = 4_000
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True, order=True)
class StateType:
    """Active count plus the (distinct, sorted) ages of the passive sources."""

    m: int
    passive_ages: tuple[int, ...]


def type_multiplicity(n: int, st: StateType) -> int:
    # choose the active sources, then assign the distinct passive ages
    return math.factorial(n) // math.factorial(st.m)


def recurrent_count(n: int, gamma: int, m: int) -> int:
    """Number of recurrent states with ``m`` active sources."""
    if n - m > gamma - 1:
        return 0
    return math.comb(n, m) * math.factorial(gamma - 1) // math.factorial(gamma - 1 - n + m)


def enumerate_recurrent_types(n: int, gamma: int) -> list[tuple[StateType, int]]:
    """All recurrent state types with their multiplicities."""
    # the merged matrix has one row per type
    total = sum(math.comb(gamma - 1, n - m) for m in range(n + 1))
    if total > STATE_GUARD:
        raise SizeError(f"{total} recurrent types exceed the guard of {STATE_GUARD}")
    out = []
    for m in range(n, -1, -1):
        for ages in itertools.combinations(range(1, gamma), n - m):
            st = StateType(m, ages)
            out.append((st, type_multiplicity(n, st)))
    return out


def _next_type(st: StateType, gamma: int, success: bool) -> StateType:
    aged = [a + 1 for a in st.passive_ages]
    joining = sum(1 for a in aged if a >= gamma)
    passive = [a for a in aged if a < gamma]
    m = st.m + joining
    if success:
        m -= 1
        passive.append(1)
    return StateType(m, tuple(sorted(passive)))


def _type_matrix(params: PolicyParams):
    n, gamma = params.n, params.effective_gamma
    types = enumerate_recurrent_types(n, gamma)
    index = {st: i for i, (st, _) in enumerate(types)}
    P = np.zeros((len(types), len(types)))
    for st, _ in types:
        i = index[st]
        win = st.m * per_source_success(st.m, params.tau1, params.effective_tau2)
        P[i, index[_next_type(st, gamma, False)]] += 1.0 - win
        if st.m:
            P[i, index[_next_type(st, gamma, True)]] += win
    return types, P


def gth(P: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination for an irreducible row-stochastic P.

    Subtraction-free, so small stationary entries keep full relative accuracy.
    """
    A = np.array(P, dtype=float)
    size = A.shape[0]
    for k in range(size - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0.0:
            raise SolverError("chain is reducible; GTH elimination needs one communicating class")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(size)
    pi[0] = 1.0
    for k in range(1, size):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


def _direct(P: np.ndarray) -> np.ndarray:
    size = P.shape[0]
    A = P.T - np.eye(size)
    A[-1, :] = 1.0
    b = np.zeros(size)
    b[-1] = 1.0
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, b, rcond=None)[0]


def stationary(P: np.ndarray, method: str = "gth", tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix with one recurrent class.

    ``gth`` needs an irreducible chain; ``direct`` solves pi (P - I) = 0 with a
    normalisation row and copes with transient states. A few power steps then
    polish the result; :class:`SolverError` if the residual stays above ``tol``.
    """
    if method == "gth":
        try:
            pi = gth(P)
        except SolverError:
            # transient states (e.g. tau1 = 1) break GTH but leave pi unique
            pi = _direct(P)
    else:
        pi = _direct(P)
    for _ in range(50):
        resid = np.abs(pi @ P - pi).max()
        if resid < tol:
            break
        pi = pi @ P
        pi /= pi.sum()
    else:
        raise SolverError(f"stationary residual {resid:.3e} above {tol:.1e}")
    pi = np.where(pi < 1e-300, 0.0, pi)  # also drops round-off negatives on transient states
    return pi / pi.sum()


@dataclass(frozen=True)
class ExactSolution:
    params: PolicyParams
    types: tuple[StateType, ...]
    multiplicities: np.ndarray
    type_probabilities: np.ndarray  # total mass of each type
    residual: float

    @property
    def state_probabilities(self) -> np.ndarray:
        """Probability of a single state of each type."""
        return self.type_probabilities / self.multiplicities

    def P_m(self) -> np.ndarray:
        out = np.zeros(self.params.n + 1)
        for st, p in zip(self.types, self.type_probabilities):
            out[st.m] += p
        return out

    def pi_m(self) -> dict[int, np.ndarray]:
        """Per-state probabilities grouped by active count."""
        groups: dict[int, list[float]] = {}
        for st, p in zip(self.types, self.state_probabilities):
            groups.setdefault(st.m, []).append(p)
        return {m: np.array(v) for m, v in groups.items()}

    def ratios(self) -> dict[int, float]:
        """P_m / P_{m-1} for every m whose predecessor has mass."""
        pm = self.P_m()
        return {m: pm[m] / pm[m - 1] for m in range(1, pm.size) if pm[m - 1] > 0 and pm[m] > 0}


def exact_stationary(params: PolicyParams) -> ExactSolution:
    types, P = _type_matrix(params)
    rows = P.sum(axis=1)
    if np.abs(rows - 1.0).max() > 1e-12:
        raise SolverError("transition rows do not sum to one")
    pi = stationary(P)
    resid = float(np.abs(pi @ P - pi).max())
    return ExactSolution(
        params,
        tuple(st for st, _ in types),
        np.array([float(c) for _, c in types]),
        pi,
        resid,
    )


# --- unmerged chain on age vectors ---------------------------------------------


def _vector_transitions(ages: tuple[int, ...], params: PolicyParams):
    gamma = params.effective_gamma
    active = [i for i, a in enumerate(ages) if a >= gamma]
    q = per_source_success(len(active), params.tau1, params.effective_tau2)
    aged = tuple(min(a + 1, gamma) for a in ages)
    yield aged, 1.0 - len(active) * q
    for i in active:
        nxt = list(aged)
        nxt[i] = 1
        yield tuple(nxt), q


def is_recurrent_vector(ages: tuple[int, ...], gamma: int) -> bool:
    passive = [a for a in ages if a < gamma]
    return len(passive) == len(set(passive))


def vector_chain(params: PolicyParams, include_transient: bool = False):
    """Full transition matrix over truncated age vectors.

    By default only vectors with distinct below-threshold ages are kept;
    ``include_transient`` enumerates all of ``{1..gamma}^n``.
    """
    n, gamma = params.n, params.effective_gamma
    if include_transient:
        count = gamma**n
    else:
        count = sum(recurrent_count(n, gamma, m) for m in range(n + 1))
    if count > STATE_GUARD:
        raise SizeError(f"{count} age vectors exceed the guard of {STATE_GUARD}")
    states = [s for s in itertools.product(range(1, gamma + 1), repeat=n)
              if include_transient or is_recurrent_vector(s, gamma)]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        for nxt, p in _vector_transitions(s, params):
            P[index[s], index[nxt]] += p
    return states, P


def exact_vector_stationary(params: PolicyParams, include_transient: bool = False) -> dict[tuple[int, ...], float]:
    states, P = vector_chain(params, include_transient)
    pi = stationary(P, "direct" if include_transient else "gth")
    return dict(zip(states, pi))


# --- pivot check ------------------------------------------------------------------


def pivot_limit(scaled: ScaledParams, k: float) -> float:
    """Large-n limit of pi(S1) / (n pi(S2)) for states one active source apart."""
    a, t = scaled.alpha, scaled.tau2
    return 1.0 / (a * math.exp(-k * a) + a * t * (math.exp(-t * k * a) - math.exp(-k * a))) - k


@dataclass(frozen=True)
class PivotCheck:
    ratio: float
    limit: float
    s: int
    m: int


def pivot_ratio_check(params: PolicyParams, s: int, m: int, solution: ExactSolution | None = None) -> PivotCheck:
    """pi(S1) / (n pi(S2)) from the exact solve.

    S1 and S2 are concrete states in which the pivot (source 0) has passive
    age ``s`` and, excluding it, ``m`` resp. ``m - 1`` sources are active.
    """
    n, gamma = params.n, params.effective_gamma
    if not 1 <= s < gamma:
        raise ValueError("pivot age must be a passive age in 1..gamma-1")
    sol = exact_stationary(params) if solution is None else solution
    probs = dict(zip(sol.types, sol.state_probabilities))

    def find(active: int) -> float:
        for st, p in probs.items():
            if st.m == active and s in st.passive_ages:
                return p
        raise ValueError(f"no recurrent state with pivot age {s} and {active} active sources")

    ratio = find(m) / (n * find(m - 1))
    scaled = ScaledParams(alpha=n * params.tau1, r=gamma / n, tau2=params.effective_tau2)
    return PivotCheck(ratio, pivot_limit(scaled, m / n), s, m)
