"""Closed-form results for the truncated age chain and its large-n limit."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, NoRootError
from .protocol import PolicyParams, ScaledParams, pow1m, success_probability

ROOT_GRID = 10_000
ROOT_XTOL = 1e-12
QUAD_TOL = 1e-8
_EDGE = 1e-12


# --- finite n -----------------------------------------------------------------


@dataclass(frozen=True)
class ActiveCountPmf:
    """Probability of ``m`` active sources for ``m = support_min .. n``."""

    support_min: int
    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def n(self) -> int:
        return self.support_min + self.probabilities.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_min, self.n + 1)

    def full(self) -> np.ndarray:
        """PMF over ``0..n`` with zeros below the support."""
        out = np.zeros(self.n + 1)
        out[self.support_min:] = self.probabilities
        return out

    def mode(self) -> int:
        return int(self.support_min + np.argmax(self.probabilities))

    def mean(self) -> float:
        return float(self.support @ self.probabilities)

    def expect(self, fn) -> float:
        """E[fn(m)] under this PMF."""
        return float(sum(p * fn(int(m)) for m, p in zip(self.support, self.probabilities)))


def support_min(n: int, gamma: int) -> int:
    # passive ages are distinct values in 1..gamma-1
    return max(0, n - gamma + 1)


def _g(j: int, tau1: float, tau2: float) -> float:
    return (1.0 - tau2) * pow1m(tau1, j) + tau2 * pow1m(tau1 * tau2, j)


def state_prob_ratio(m: int, tau1: float, tau2: float) -> float:
    """pi_m / pi_{m-1}: ratio of single-state probabilities with m and m-1 active."""
    return (1.0 / tau1 - (m - 1) * _g(m - 2, tau1, tau2)) / _g(m - 1, tau1, tau2)


def pm_ratio(m: int, params: PolicyParams) -> float:
    """P_m / P_{m-1}, the ratio of total probabilities of m and m-1 active sources."""
    n, gamma = params.n, params.effective_gamma
    tau1, tau2 = params.tau1, params.effective_tau2
    lo = support_min(n, gamma)
    if m <= lo or m > n:
        raise DomainError(f"pm_ratio undefined for m={m}; support is {lo}..{n}")
    num = (1.0 / tau1 - (m - 1) * _g(m - 2, tau1, tau2)) * (n - m + 1)
    den = _g(m - 1, tau1, tau2) * m * (gamma - 1 - n + m)
    if den == 0.0:
        # tau1 = tau2 = 1: two or more active sources always collide, so the chain is absorbing
        raise DomainError(f"no stationary PMF: success probability is zero with {m - 1} active")
    return num / den


def active_count_pmf(params: PolicyParams) -> ActiveCountPmf:
    n, gamma = params.n, params.effective_gamma
    if gamma < 2:
        raise DomainError("the active-count PMF needs gamma >= 2")
    lo = support_min(n, gamma)
    logs = np.zeros(n - lo + 1)
    for i, m in enumerate(range(lo + 1, n + 1), start=1):
        ratio = pm_ratio(m, params)
        # tau1 = 1 can make a count unreachable: zero mass from there up
        logs[i] = logs[i - 1] + (math.log(ratio) if ratio > 0 else -math.inf)
    logs -= logs.max()
    p = np.exp(logs)
    return ActiveCountPmf(lo, p / p.sum())


def finite_throughput(params: PolicyParams, pmf: ActiveCountPmf | None = None) -> float:
    """Exact stationary successes per slot at finite n, E[m * q(m)]."""
    pmf = active_count_pmf(params) if pmf is None else pmf
    return pmf.expect(lambda m: success_probability(m, params.tau1, params.effective_tau2))


def total_variation(p: ActiveCountPmf, q: ActiveCountPmf) -> float:
    size = max(p.n, q.n) + 1
    a = np.zeros(size)
    b = np.zeros(size)
    a[: p.n + 1] = p.full()
    b[: q.n + 1] = q.full()
    return 0.5 * float(np.abs(a - b).sum())


# --- large-n drift and regimes -------------------------------------------------


def q0_limit(scaled: ScaledParams, k0: float) -> float:
    """Limit of n*q0: per-slot success of one active source, scaled by n."""
    a, t = scaled.alpha, scaled.tau2
    return a * math.exp(-k0 * a) + a * t * (math.exp(-t * k0 * a) - math.exp(-k0 * a))


def drift_domain(scaled: ScaledParams) -> tuple[float, float]:
    return max(0.0, 1.0 - scaled.r), 1.0


def drift_f(k: float, scaled: ScaledParams, *, strict: bool = True) -> float:
    """Limiting log-ratio ln(P_m/P_{m-1}) at load k = m/n.

    Outside the domain a :class:`DomainError` is raised, or with
    ``strict=False`` the signed infinity that keeps a bracket valid.
    """
    lo, hi = drift_domain(scaled)
    if not lo < k < hi:
        if strict:
            raise DomainError(f"k={k} outside ({lo}, {hi})")
        return math.inf if k <= lo else -math.inf
    a = 1.0 / (k * q0_limit(scaled, k)) - 1.0
    b = scaled.r / (k + scaled.r - 1.0) - 1.0
    if a <= 0 or b <= 0:
        if strict:
            raise DomainError(f"log argument non-positive at k={k}")
        return -math.inf if b <= 0 else math.inf
    return math.log(a) + math.log(b)


def _drift_vec(k: np.ndarray, scaled: ScaledParams) -> np.ndarray:
    a, t, r = scaled.alpha, scaled.tau2, scaled.r
    ka = k * a
    thr = ka * np.exp(-ka) + ka * t * (np.exp(-t * ka) - np.exp(-ka))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(1.0 / thr - 1.0) + np.log(r / (k + r - 1.0) - 1.0)


class Regime(str, enum.Enum):
    SINGLE_PEAK = "single_peak"
    DOUBLE_PEAK = "double_peak"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class DriftAnalysis:
    roots: tuple[float, ...]
    decreasing_roots: tuple[float, ...]
    regime: Regime
    selected_k0: float | None
    integral_k0_k2: float | None = None
    notes: tuple[str, ...] = field(default=())


def find_roots(scaled: ScaledParams, grid: int = ROOT_GRID, xtol: float = ROOT_XTOL) -> list[float]:
    lo, hi = drift_domain(scaled)
    xs = np.linspace(lo + _EDGE, hi - _EDGE, grid)
    v = _drift_vec(xs, scaled)
    s = np.sign(v)
    f = lambda x: drift_f(x, scaled, strict=False)  # noqa: E731
    roots = []
    for i in np.flatnonzero(s[:-1] * s[1:] < 0):
        roots.append(optimize.brentq(f, xs[i], xs[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    roots.extend(float(x) for x in xs[s == 0])
    return sorted(roots)


def regime_analysis(scaled: ScaledParams, grid: int = ROOT_GRID) -> DriftAnalysis:
    """Locate the roots of the drift and pick the load the system settles at.

    One root: that root. Three roots: the smallest if the drift integrates to a
    negative value between the outer roots, else the largest. Anything else is
    reported as degenerate with no selection.
    """
    roots = find_roots(scaled, grid)
    if not roots:
        raise NoRootError(f"drift has no sign change for {scaled}")
    # f starts positive at the left edge, so roots alternate decreasing/increasing
    decreasing = tuple(roots[0::2])
    if len(roots) == 1:
        return DriftAnalysis(tuple(roots), decreasing, Regime.SINGLE_PEAK, roots[0])
    if len(roots) == 3:
        k0, _, k2 = roots
        val, _ = integrate.quad(lambda x: drift_f(x, scaled), k0, k2, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        notes: tuple[str, ...] = ()
        if val == 0.0:
            warnings.warn("drift integral is exactly zero; keeping the smaller root", RuntimeWarning, stacklevel=2)
            notes = ("integral tie broken toward smaller root",)
        selected = k0 if val <= 0.0 else k2
        return DriftAnalysis(tuple(roots), decreasing, Regime.DOUBLE_PEAK, selected, val, notes)
    return DriftAnalysis(tuple(roots), decreasing, Regime.DEGENERATE, None, notes=(f"{len(roots)} roots",))


# --- age and throughput ----------------------------------------------------------


@dataclass(frozen=True)
class AgeDistribution:
    """Stationary age of one source that succeeds w.p. q0 per slot once active."""

    gamma: int
    q0: float

    def __post_init__(self) -> None:
        if not 0.0 < self.q0 <= 1.0:
            raise DomainError(f"q0 must lie in (0, 1], got {self.q0}")
        if self.gamma < 1:
            raise DomainError("gamma must be >= 1")

    @property
    def norm(self) -> float:
        return self.gamma - 1 + 1.0 / self.q0

    def pmf(self, j):
        j = np.asarray(j)
        return np.power(1.0 - self.q0, np.maximum(j - self.gamma, 0)) / self.norm

    def mean(self) -> float:
        g, q = self.gamma, self.q0
        return g * (g - 1) / (2.0 * self.norm) + 1.0 / q

    def series_mean(self, tail: float = 1e-12) -> float:
        """Mean by direct summation of j*pi_j, stopping once the tail is negligible."""
        total = 0.0
        mass = 0.0
        j = 1
        while True:
            pj = float(self.pmf(j))
            total += j * pj
            mass += pj
            if j >= self.gamma and 1.0 - mass < tail:
                return total
            j += 1


def age_distribution(gamma: int, q0: float) -> AgeDistribution:
    return AgeDistribution(gamma, q0)


def asymptotic_age(scaled: ScaledParams, k0: float) -> float:
    """Limit of average AoI divided by n, from the renewal form."""
    inv = 1.0 / q0_limit(scaled, k0)
    r = scaled.r
    return r * r / (2.0 * (r + inv)) + inv


def asymptotic_age_from_load(r: float, k0: float) -> float:
    """Same limit written through the root identity; equal only where f(k0) = 0."""
    return r * (k0 * k0 + 1.0) / (2.0 * (1.0 - k0))


def throughput_asymptotic(scaled: ScaledParams, k0: float) -> float:
    return k0 * q0_limit(scaled, k0)


# --- bounds and spectral efficiency ---------------------------------------------


def instantaneous_throughput_G(G: float, tau2: float) -> float:
    """Large-m slot success probability at offered load G = m*tau1."""
    if G < 0:
        raise DomainError("G must be >= 0")
    return tau2 * G * math.exp(-tau2 * G) + (1.0 - tau2) * G * math.exp(-G)


@dataclass(frozen=True)
class ThroughputBound:
    q_max: float
    G_star: float
    tau2_star: float
    bound_slope: float
    n: int | None = None

    @property
    def age_lower_bound(self) -> float | None:
        return None if self.n is None else self.n * self.bound_slope + 0.5


def max_throughput_and_age_bound(n: int | None = None, tau2: float | None = None) -> ThroughputBound:
    """Maximise the large-m slot success over (G, tau2) in (0, 10] x (0, 1].

    With ``tau2`` given, only G is optimised. The age bound is
    n / (2 q_max) + 1/2.
    """
    neg = lambda x: -instantaneous_throughput_G(x[0], x[1])  # noqa: E731
    if tau2 is not None:
        res = optimize.minimize_scalar(
            lambda g: -instantaneous_throughput_G(g, tau2), bounds=(0.0, 10.0), method="bounded",
            options={"xatol": 1e-10},
        )
        G, t, q = float(res.x), float(tau2), float(-res.fun)
    else:
        Gs = np.linspace(0.05, 10.0, 200)
        ts = np.linspace(0.005, 1.0, 200)
        gg, tt = np.meshgrid(Gs, ts, indexing="ij")
        vals = tt * gg * np.exp(-tt * gg) + (1 - tt) * gg * np.exp(-gg)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        res = optimize.minimize(
            neg, x0=[Gs[i], ts[j]], bounds=[(1e-9, 10.0), (1e-9, 1.0)], method="L-BFGS-B",
            options={"ftol": 1e-15, "gtol": 1e-12},
        )
        G, t = (float(v) for v in res.x)
        q = instantaneous_throughput_G(G, t)
    return ThroughputBound(q, G, t, 1.0 / (2.0 * q), n)


def spectral_ratio(theta2: float, theta1: float, c_bits: float, d_bits: float) -> float:
    """Spectral efficiency of MiSTA relative to Threshold ALOHA."""
    if theta1 <= 0 or theta2 <= 0 or c_bits <= 0 or d_bits < 0:
        raise DomainError("throughputs and c must be positive, d non-negative")
    return (theta2 / theta1) * c_bits / (c_bits + d_bits)


def spectral_break_even(theta2: float, theta1: float) -> float:
    """c/d above which the minislot overhead is paid for; inf if it never is."""
    gain = theta2 / theta1
    return math.inf if gain <= 1.0 else 1.0 / (gain - 1.0)
