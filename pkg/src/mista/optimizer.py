"""Search over (r, alpha, tau2) for the lowest asymptotic age per source."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize

from .analytic import (
    Regime,
    asymptotic_age,
    regime_analysis,
    throughput_asymptotic,
)
from .errors import NoFeasiblePoint, NoRootError, ParameterError
from .protocol import Policy, ScaledParams

R_RANGE = (1.0, 3.0)
ALPHA_RANGE = (1.0, 20.0)
REFINE_TOL = 1e-4
GRID_STEPS = (0.05, 0.5, 0.05)  # r, alpha, tau2


@dataclass(frozen=True)
class Candidate:
    r: float
    alpha: float
    tau2: float
    k0: float
    age: float
    throughput: float
    regime: Regime

    def as_dict(self) -> dict:
        return {
            "r": self.r, "alpha": self.alpha, "tau2": self.tau2, "k0": self.k0,
            "age_over_n": self.age, "throughput": self.throughput, "regime": self.regime.value,
        }


def evaluate(r: float, alpha: float, tau2: float) -> Candidate | None:
    """Regime analysis plus asymptotic age at one parameter point; None if infeasible."""
    if not (r > 0 and alpha > 0 and 0 < tau2 <= 1):
        return None
    scaled = ScaledParams(alpha, r, tau2)
    try:
        ra = regime_analysis(scaled)
    except NoRootError:
        return None
    if ra.selected_k0 is None:
        return None
    k0 = ra.selected_k0
    return Candidate(float(r), float(alpha), float(tau2), float(k0), float(asymptotic_age(scaled, k0)),
                     float(throughput_asymptotic(scaled, k0)), ra.regime)


def _accepts(c: Candidate | None, regime_filter: Regime | None) -> bool:
    if c is None or c.regime is Regime.DEGENERATE:
        return False
    return regime_filter is None or c.regime is regime_filter


def _objective(regime_filter, tau_fixed):
    def f(x):
        r, alpha = x[0], x[1]
        tau2 = 1.0 if tau_fixed else x[2]
        c = evaluate(r, alpha, tau2)
        return c.age if _accepts(c, regime_filter) else math.inf
    return f


@lru_cache(maxsize=8)
def coarse_grid(tau_fixed: bool, r_step: float = 0.05, alpha_step: float = 0.5, tau2_step: float = 0.05):
    """Evaluate every grid point once; cached so SP and DP searches share it."""
    rs = np.round(np.arange(R_RANGE[0], R_RANGE[1] + 1e-9, r_step), 10)
    alphas = np.round(np.arange(ALPHA_RANGE[0], ALPHA_RANGE[1] + 1e-9, alpha_step), 10)
    taus = [1.0] if tau_fixed else np.round(np.arange(tau2_step, 1.0 + 1e-9, tau2_step), 10)
    return tuple(evaluate(float(r), float(a), float(t)) for r, a, t in itertools.product(rs, alphas, taus))


def _pattern_search(f, x0, steps, tol=REFINE_TOL):
    """Compass search over all 3^d - 1 neighbour directions with step halving."""
    x = np.asarray(x0, float)
    steps = np.asarray(steps, float)
    cur = f(x)
    dirs = [np.array(d) for d in itertools.product((-1, 0, 1), repeat=x.size) if any(d)]
    while steps.max() > tol:
        best_v, best_x = cur, None
        for d in dirs:
            y = x + d * steps
            v = f(y)
            if v < best_v:
                best_v, best_x = v, y
        if best_x is None:
            steps = steps / 2
        else:
            x, cur = best_x, best_v
    return x, cur


def _refine(f, x0, steps):
    x, v = _pattern_search(f, x0, steps)
    # the optimum often sits on a regime boundary where compass moves stall
    res = optimize.minimize(f, x, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 4000})
    if res.fun < v:
        x, v = _pattern_search(f, res.x, np.asarray(steps) / 64)
    return x, v


def slotted_aloha_optimum() -> Candidate:
    # tau = 1/n: success per source (1/n)(1 - 1/n)^(n-1) -> 1/(e n)
    return Candidate(0.0, 1.0, 1.0, 1.0, math.e, math.exp(-1.0), Regime.SINGLE_PEAK)


def optimize_age(policy: Policy | str = Policy.MISTA, regime_filter: Regime | str | None = None,
                 starts: int = 4, grid_steps: tuple[float, float, float] = GRID_STEPS) -> Candidate:
    """Minimise the limiting age per source.

    ``regime_filter`` restricts to single- or double-peak points; ``None`` takes
    either. Threshold ALOHA pins tau2 to 1; slotted ALOHA is closed form.
    The best ``starts`` grid points (ignoring grid neighbours of earlier
    starts) are refined by compass search followed by a Nelder-Mead polish.
    """
    policy = Policy(policy)
    if isinstance(regime_filter, str):
        regime_filter = Regime(regime_filter)
    if regime_filter is Regime.DEGENERATE:
        raise ParameterError("degenerate regimes are never optimised")
    if policy is Policy.SLOTTED_ALOHA:
        return slotted_aloha_optimum()
    if policy is Policy.MUMISTA:
        raise ParameterError("MuMiSTA has no analytic age expression")
    tau_fixed = policy is Policy.THRESHOLD_ALOHA

    grid = [c for c in coarse_grid(tau_fixed, *grid_steps) if _accepts(c, regime_filter)]
    if not grid:
        raise NoFeasiblePoint(f"no {regime_filter} point for {policy.value}")
    grid.sort(key=lambda c: c.age)

    f = _objective(regime_filter, tau_fixed)
    steps = grid_steps[:2] if tau_fixed else grid_steps
    best = None
    seen: list[np.ndarray] = []
    for c in grid:
        x0 = np.array([c.r, c.alpha] if tau_fixed else [c.r, c.alpha, c.tau2])
        # skip starts that are grid neighbours of one already refined
        if any(np.all(np.abs(x0 - s) <= np.asarray(steps) * 1.01) for s in seen):
            continue
        seen.append(x0)
        x, v = _refine(f, x0, steps)
        if best is None or v < best[1]:
            best = (x, v)
        if len(seen) >= starts:
            break
    x = best[0]
    out = evaluate(x[0], x[1], 1.0 if tau_fixed else x[2])
    if not _accepts(out, regime_filter):
        raise NoFeasiblePoint("refinement left the feasible region")
    return out


def optimize_all(policy: Policy | str = Policy.MISTA) -> Candidate:
    """Best over both regimes; ties go to the single-peak point."""
    found = []
    for reg in (Regime.SINGLE_PEAK, Regime.DOUBLE_PEAK):
        try:
            found.append(optimize_age(policy, reg))
        except NoFeasiblePoint:
            pass
    if not found:
        raise NoFeasiblePoint(f"no feasible point for {policy}")
    return min(found, key=lambda c: (c.age, c.regime is not Regime.SINGLE_PEAK))


def sweep(parameter: str, values, fixed: dict[str, float]) -> list[tuple[float, Candidate | None]]:
    """Age along one parameter with the other two held at ``fixed``; None marks a gap."""
    if parameter not in ("r", "alpha", "tau2"):
        raise ParameterError(f"cannot sweep {parameter!r}")
    out = []
    for v in values:
        p = {"r": fixed.get("r"), "alpha": fixed.get("alpha"), "tau2": fixed.get("tau2", 1.0)}
        p[parameter] = float(v)
        c = evaluate(p["r"], p["alpha"], p["tau2"])
        out.append((float(v), c if _accepts(c, None) else None))
    return out


def sweep_minimum(curve: list[tuple[float, Candidate | None]]) -> tuple[float, Candidate]:
    pts = [(v, c) for v, c in curve if c is not None]
    if not pts:
        raise NoFeasiblePoint("sweep has no feasible point")
    return min(pts, key=lambda vc: vc[1].age)
