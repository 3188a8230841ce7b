"""Command-line entry point. Every command prints one JSON document.

Exit codes: 0 success, 2 invalid input or infeasible request, 3 when a run
could overflow the age accumulators.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, optimizer, oracle, sim
from .errors import AccumulatorOverflowError, MistaError
from .protocol import Policy, PolicyParams, ScaledParams

EXIT_INVALID = 2
EXIT_OVERFLOW = 3
DIGITS = 12

# double-peak optima used by `compare`
DP_MISTA = {"alpha": 10.0, "r": 1.59, "tau2": 0.38}
DP_TA = {"alpha": 4.69, "r": 2.21}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse already exits with 2; keep the reason to one line
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Round floats to 12 significant digits and make the tree JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{DIGITS}g}")
    if hasattr(obj, "value"):
        return obj.value
    return obj


def emit(doc: dict, out: str | None = None) -> None:
    text = json.dumps(_clean(doc), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


# --- parameter flags ------------------------------------------------------------


def _add_params(p: argparse.ArgumentParser, need_n: bool = True) -> None:
    p.add_argument("--policy", default="mista", choices=[x.value for x in Policy])
    if need_n:
        p.add_argument("--n", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=int)
    g.add_argument("--r", type=float, help="gamma / n; gamma = round(r * n)")
    t = p.add_mutually_exclusive_group()
    t.add_argument("--tau1", type=float)
    t.add_argument("--alpha", type=float, help="n * tau1")
    p.add_argument("--tau2", type=float, default=1.0)
    p.add_argument("--minislots", type=int, default=1)


def _policy_params(a) -> tuple[PolicyParams, dict]:
    """Build PolicyParams from flags; also return the scaled-flag conversion."""
    policy = Policy(a.policy)
    n = a.n
    conv: dict = {}
    if a.gamma is not None:
        gamma = a.gamma
    elif a.r is not None:
        gamma = int(round(a.r * n))
        conv.update(r=a.r, gamma=gamma)
    elif policy is Policy.SLOTTED_ALOHA:
        gamma = 1
    else:
        raise CliError("one of --gamma or --r is required")
    if a.tau1 is not None:
        tau1 = a.tau1
    elif a.alpha is not None:
        tau1 = a.alpha / n
        conv.update(alpha=a.alpha, tau1=tau1)
    else:
        raise CliError("one of --tau1 or --alpha is required")
    kw = {}
    if policy is Policy.MUMISTA:
        kw["minislots"] = a.minislots
    params = PolicyParams(n=n, gamma=gamma, tau1=tau1, tau2=a.tau2, policy=policy, **kw)
    return params, conv


def _params_doc(p: PolicyParams) -> dict:
    doc = {"policy": p.policy.value, "n": p.n, "gamma": p.effective_gamma, "tau1": p.tau1,
           "tau2": p.effective_tau2, "tau_order_violated": p.tau_order_violated}
    if p.policy is Policy.MUMISTA:
        doc["minislots"] = p.minislots
        doc["retention"] = list(p.retention)
    return doc


def _scaled(a) -> ScaledParams:
    if a.alpha is None or a.r is None:
        raise CliError("--alpha and --r are required")
    return ScaledParams(a.alpha, a.r, a.tau2)


def _add_scaled(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--tau2", type=float, default=1.0)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --- commands ---------------------------------------------------------------------


def cmd_simulate(a) -> dict:
    params, conv = _policy_params(a)
    if a.replications < 1:
        raise CliError("--replications must be >= 1")
    cfg = sim.RunConfig(params, slots=a.slots, warmup_slots=a.warmup, seed=a.seed,
                        replications=a.replications, start=a.start)
    rep = sim.run_replicated(cfg, workers=a.threads)
    first = rep.runs[0]
    doc = {
        "paper_anchor": "Figs. 3-9, Table I",
        "params": _params_doc(params),
        "conversion": conv,
        "slots": cfg.slots,
        "warmup_slots": cfg.warmup_slots,
        "seed": cfg.seed,
        "replications": cfg.replications,
        "start": cfg.start,
        "mean": rep.mean,
        "std": rep.std,
        "runs": [
            {"seed": r.seed, "throughput": r.throughput, "network_avg_aoi": r.network_avg_aoi,
             "aoi_over_n": r.normalized_aoi, "successes": r.successes}
            for r in rep.runs
        ],
        "active_count_histogram": first.active_count_histogram,
    }
    if a.csv:
        prefix = Path(a.csv)
        with open(f"{prefix}_trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "m", "k", "mean_age", "pivot_age"])
            for t, m, age, piv in zip(first.trajectory_t, first.trajectory_m,
                                      first.trajectory_aoi, first.trajectory_pivot_age):
                w.writerow([int(t), int(m), m / params.n, f"{age:.{DIGITS}g}", int(piv)])
        with open(f"{prefix}_histogram.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "frequency"])
            for m, f in sorted(first.active_count_histogram.items()):
                w.writerow([m, f"{f:.{DIGITS}g}"])
        doc["csv"] = [f"{prefix}_trajectory.csv", f"{prefix}_histogram.csv"]
    return doc


def cmd_pmf(a) -> dict:
    params, conv = _policy_params(a)
    pmf = analytic.active_count_pmf(params)
    return {
        "paper_anchor": "Fig. 3",
        "params": _params_doc(params),
        "conversion": conv,
        "support_min": pmf.support_min,
        "probabilities": pmf.probabilities,
        "mode": pmf.mode(),
        "mean": pmf.mean(),
        "throughput": analytic.finite_throughput(params, pmf),
    }


def cmd_roots(a) -> dict:
    s = _scaled(a)
    ra = analytic.regime_analysis(s)
    return {
        "paper_anchor": "Table I",
        "alpha": s.alpha, "r": s.r, "tau2": s.tau2,
        "roots": ra.roots,
        "decreasing_roots": ra.decreasing_roots,
        "regime": ra.regime,
        "selected_k0": ra.selected_k0,
        "integral_k0_k2": ra.integral_k0_k2,
        "notes": ra.notes,
    }


def cmd_age(a) -> dict:
    if a.q0 is not None:
        if a.gamma is None:
            raise CliError("--q0 needs --gamma")
        d = analytic.age_distribution(a.gamma, a.q0)
        return {"paper_anchor": "Table I", "gamma": a.gamma, "q0": a.q0, "mean_age": d.mean()}
    s = _scaled(a)
    k0 = a.k0 if a.k0 is not None else analytic.regime_analysis(s).selected_k0
    if k0 is None:
        raise CliError("degenerate regime: no selected root; pass --k0")
    return {
        "paper_anchor": "Table I",
        "alpha": s.alpha, "r": s.r, "tau2": s.tau2, "k0": k0,
        "n_q0": analytic.q0_limit(s, k0),
        "age_over_n": analytic.asymptotic_age(s, k0),
        "age_over_n_from_load": analytic.asymptotic_age_from_load(s.r, k0),
        "throughput": analytic.throughput_asymptotic(s, k0),
        "drift_at_k0": analytic.drift_f(k0, s, strict=False),
    }


def cmd_bound(a) -> dict:
    b = analytic.max_throughput_and_age_bound(a.n, a.tau2)
    doc = {"paper_anchor": "Table I lower bound", "q_max": b.q_max, "G": b.G_star,
           "tau2": b.tau2_star, "bound_slope": b.bound_slope}
    if a.n is not None:
        doc["n"] = a.n
        doc["age_lower_bound"] = b.age_lower_bound
    return doc


def cmd_spectral(a) -> dict:
    ratio = analytic.spectral_ratio(a.theta2, a.theta1, a.c, a.d)
    return {"paper_anchor": "Tables II-III", "theta2": a.theta2, "theta1": a.theta1, "c": a.c, "d": a.d,
            "ratio": ratio, "break_even_c_over_d": analytic.spectral_break_even(a.theta2, a.theta1)}


def cmd_optimize(a) -> dict:
    if a.sweep:
        fixed = {"alpha": a.alpha, "r": a.r, "tau2": a.tau2}
        missing = [k for k, v in fixed.items() if v is None and k != a.sweep]
        if missing or not a.values:
            raise CliError(f"--sweep {a.sweep} needs --values and fixed {', '.join(missing) or 'values'}")
        curve = optimizer.sweep(a.sweep, a.values, fixed)
        pts = [{"value": v, **(c.as_dict() if c else {"age_over_n": None})} for v, c in curve]
        best_v, best = optimizer.sweep_minimum(curve)
        return {"paper_anchor": "Figs. 6-7", "parameter": a.sweep, "fixed": fixed,
                "curve": pts, "argmin": best_v, "min_age_over_n": best.age}
    regime = None if a.regime == "any" else {"sp": analytic.Regime.SINGLE_PEAK,
                                             "dp": analytic.Regime.DOUBLE_PEAK}[a.regime]
    policy = Policy(a.policy)
    c = optimizer.optimize_all(policy) if regime is None else optimizer.optimize_age(policy, regime)
    return {"paper_anchor": "Table I", "policy": policy.value, "regime_filter": a.regime, **c.as_dict()}


def cmd_oracle(a) -> dict:
    params, conv = _policy_params(a)
    sol = oracle.exact_stationary(params)
    exact = sol.ratios()
    dev = 0.0
    rows = []
    for m, val in exact.items():
        ref = analytic.pm_ratio(m, params)
        dev = max(dev, abs(val - ref))
        rows.append({"m": m, "exact": val, "formula": ref})
    return {"paper_anchor": "Fig. 3 (active-count ratio)", "params": _params_doc(params), "conversion": conv,
            "types": len(sol.types), "residual": sol.residual, "ratios": rows, "max_deviation": dev}


def cmd_compare(a) -> dict:
    series = []
    for n in a.n_list:
        row = {"n": n}
        configs = {
            "sa": PolicyParams(n=n, gamma=1, tau1=1.0 / n, policy=Policy.SLOTTED_ALOHA),
            "ta": ScaledParams(DP_TA["alpha"], DP_TA["r"]).to_policy(n, Policy.THRESHOLD_ALOHA),
            "mista": ScaledParams(**DP_MISTA).to_policy(n, Policy.MISTA),
        }
        for name, params in configs.items():
            m = sim.run(sim.RunConfig(params, slots=a.slots, seed=a.seed))
            row[name] = {"aoi_over_n": m.normalized_aoi, "throughput": m.throughput,
                         "gamma": params.effective_gamma, "tau1": params.tau1}
        series.append(row)
    analytic_rows = {}
    for name, kw in (("ta", {**DP_TA, "tau2": 1.0}), ("mista", DP_MISTA)):
        s = ScaledParams(kw["alpha"], kw["r"], kw["tau2"])
        k0 = analytic.regime_analysis(s).selected_k0
        analytic_rows[name] = {"age_over_n": analytic.asymptotic_age(s, k0),
                               "throughput": analytic.throughput_asymptotic(s, k0), "k0": k0}
    analytic_rows["sa"] = {"age_over_n": math.e, "throughput": math.exp(-1.0)}
    return {"paper_anchor": "Figs. 8-9", "slots": a.slots, "seed": a.seed,
            "series": series, "large_n_limit": analytic_rows}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mista", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Monte Carlo run")
    _add_params(p)
    p.add_argument("--slots", type=int, default=10_000_000)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--start", choices=sim.STARTS, default="threshold")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads; default from MISTA_THREADS or the CPU count")
    p.add_argument("--out", help="also write the JSON here")
    p.add_argument("--csv", help="prefix for trajectory and histogram CSV files")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pmf", help="finite-n active-count PMF")
    _add_params(p)
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("roots", help="drift roots and regime")
    _add_scaled(p)
    p.set_defaults(func=cmd_roots)

    p = sub.add_parser("age", help="limiting age and throughput")
    _add_scaled(p)
    p.add_argument("--k0", type=float)
    p.add_argument("--gamma", type=int)
    p.add_argument("--q0", type=float)
    p.set_defaults(func=cmd_age)

    p = sub.add_parser("bound", help="throughput ceiling and age lower bound")
    p.add_argument("--n", type=int)
    p.add_argument("--tau2", type=float)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("spectral", help="spectral efficiency ratio")
    p.add_argument("--theta2", type=float, required=True)
    p.add_argument("--theta1", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("optimize", help="optimal (r, alpha, tau2) or a one-parameter sweep")
    p.add_argument("--policy", default="mista", choices=["mista", "ta", "sa"])
    p.add_argument("--regime", default="any", choices=["sp", "dp", "any"])
    p.add_argument("--sweep", choices=["r", "alpha", "tau2"])
    p.add_argument("--values", type=_floats)
    _add_scaled(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle", help="exact chain vs closed-form ratios")
    _add_params(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="AoI and throughput vs n for SA, TA and MiSTA")
    p.add_argument("--n-list", type=_ints, default=[50, 100, 200])
    p.add_argument("--slots", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = args.func(args)
    except AccumulatorOverflowError as exc:
        print(f"mista: overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (CliError, MistaError, ValueError) as exc:
        print(f"mista: error: {str(exc).splitlines()[0]}", file=sys.stderr)
        return EXIT_INVALID
    emit(doc, getattr(args, "out", None))
    return 0


if __name__ == "__main__":
    sys.exit(main())
