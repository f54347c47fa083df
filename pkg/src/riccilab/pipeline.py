"""Analysis of a finished trace, shared by ``lab run`` and ``lab verify``."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .flow import FlowTrace, SingularTimeFit, estimate_singular_time, last_decade
from .functionals import (
    DivergenceIntegrals,
    DoublingVerdict,
    DyadicDecomposition,
    FunctionalSeries,
    KappaSeries,
    divergence_integrals,
    doubling_bound_check,
    dyadic_decompose,
    kappa_monitor,
    sup_norms,
)
from .metric_spaces import (
    DistortionLedger,
    Correspondence,
    check_eps_approx,
    distortion_ledger,
    gh_bounds,
    gh_upper_bound,
    sample_ball,
    transported,
)
from .verification import (
    MID_FLOW,
    GapReport,
    MoserEstimate,
    evolution_residual,
    gap_report,
    moser_series,
    soliton_gallery,
)

RESIDUAL_LIMIT = 3e-2
MOSER_SPREAD_LIMIT = 0.2
GH_RADIUS = 0.5
GH_LATER_SNAPSHOTS = 3
EPS_APPROX_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class RunAnalysis:
    trace: FlowTrace
    fit: SingularTimeFit | None
    series: FunctionalSeries
    decomposition: DyadicDecomposition
    doubling: DoublingVerdict | None
    divergence: DivergenceIntegrals
    ledger: DistortionLedger
    moser: list[MoserEstimate]
    kappa: KappaSeries
    report: GapReport


def fit_singular_time(trace: FlowTrace) -> SingularTimeFit | None:
    try:
        return estimate_singular_time(trace)
    except ValueError:
        return None


def analyze(trace: FlowTrace) -> RunAnalysis:
    sc = trace.scenario
    fit = fit_singular_time(trace)
    T_hat = fit.T_hat if fit is not None else None
    series = sup_norms(trace, T_hat)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = dyadic_decompose(trace)
    doubling = doubling_bound_check(trace, dec) if len(dec) else None
    divergence = divergence_integrals(trace, T_hat)
    ledger = distortion_ledger(trace, sc.pairs, sc.ledger_stride)
    moser = moser_series(trace)
    kappa = kappa_monitor(trace, sc.kappa_samples)
    report = gap_report(trace, series, dec, fit.residual if fit else None, doubling=doubling,
                        divergence=divergence, ledger=ledger, moser=moser, kappa=kappa,
                        gallery=soliton_gallery((trace.n,)))
    return RunAnalysis(trace, fit, series, dec, doubling, divergence, ledger, moser, kappa, report)


def functional_rows(a: RunAnalysis):
    """Header and rows of ``functionals.csv`` (products are NaN without a singular time)."""
    s, tr = a.series, a.trace
    products = s.products()
    names = ["tQ", "tP", "tO", "t_sqrt_OQ", "tP_minus"] + [f"Q_lambda_{lam:g}" for lam in s.lambdas]
    nan = np.full(len(tr), np.nan)
    cols = [products.get(k, nan) for k in names]
    header = ["t", "O", "P", "Q", "P_minus", *names, "int_P", "int_R_alpha"]
    rows = (
        [tr.times[k], s.O[k], s.P[k], s.Q[k], s.P_minus[k], *(c[k] for c in cols),
         a.divergence.int_P[k], a.divergence.int_R_alpha[k]]
        for k in range(len(tr)))
    return header, rows


DYADIC_COLUMNS = ("i", "s", "s_next", "integral")
LEDGER_COLUMNS = ("pair", "t_a", "t_b", "d_start", "d_end", "log_ratio", "int_P", "margin",
                  "reduced_accuracy", "passed")


def dyadic_rows(dec: DyadicDecomposition):
    return ((lv.i, lv.s, lv.s_next, lv.integral) for lv in dec.levels)


def ledger_rows(ledger: DistortionLedger):
    return ((r.pair, *r.window, r.d_start, r.d_end, r.log_ratio, r.int_P, r.margin,
             r.reduced_accuracy, r.passed) for r in ledger.rows)


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def check_residual(trace: FlowTrace) -> dict:
    res = evolution_residual(trace)
    mid = res.worst(True, MID_FLOW)
    return {"verdict": _verdict(bool(mid <= RESIDUAL_LIMIT)), "limit": RESIDUAL_LIMIT,
            "window": list(MID_FLOW), "mid_flow_worst": mid, "worst": res.worst(True),
            "worst_including_unreliable": res.worst(False),
            "unreliable": int(np.count_nonzero(~res.reliable)), "stencils": int(res.index.size)}


def check_moser(trace: FlowTrace) -> dict:
    est = moser_series(trace)
    A0 = np.array([m.A0 for m in est])
    finite = bool(A0.size and np.all(np.isfinite(A0)))
    out = {"verdict": _verdict(finite), "windows": int(A0.size)}
    if A0.size:
        tail = set(last_decade(trace.Q).tolist())
        late = np.array([m.A0 for m in est if m.end in tail])
        out.update(min=float(A0.min()), max=float(A0.max()))
        if late.size:
            spread = float(late.max() / late.min() - 1.0) if late.min() > 0 else math.inf
            out.update(last_decade_windows=int(late.size), last_decade_spread=spread,
                       last_decade_spread_limit=MOSER_SPREAD_LIMIT)
    return out


def check_ledger(trace: FlowTrace) -> dict:
    sc = trace.scenario
    led = distortion_ledger(trace, sc.pairs, sc.ledger_stride)
    return {"verdict": _verdict(led.passed), "rows": len(led.rows),
            "failed_rows": sum(not r.passed for r in led.rows),
            "worst_margin": led.worst_margin,
            "reduced_accuracy_rows": sum(r.reduced_accuracy for r in led.rows)}


def check_doubling(trace: FlowTrace) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = dyadic_decompose(trace)
    if not len(dec):
        return {"verdict": "reported", "levels": 0, "message": "Q never doubles"}
    v = doubling_bound_check(trace, dec)
    return {"verdict": _verdict(v.passed), "levels": len(dec), "epsilon_hat": dec.epsilon_hat,
            "tightest_ratio": v.tightest_ratio, "min_slack_log2": v.min_slack_log2,
            "level_error": v.level_error, "record_error": v.record_error, "message": v.message}


def check_gh(trace: FlowTrace, center=(0.5, 0.0), radius: float = GH_RADIUS) -> dict:
    """Compare a sampled ball at the first snapshot with the same material points later on.

    For each later snapshot: the exact (or bounded) GH distance must not exceed
    the identity-correspondence bound, and whenever both samples have diameter
    below 2 the identity must be a ``2(1 - e^-xi)``-approximation, with ``xi``
    the largest log distance ratio.
    """
    k = trace.scenario.gh_sample_k
    X0 = sample_ball(trace.profiles[0], center, radius, k)
    later = np.unique(np.round(np.linspace(0, len(trace) - 1, GH_LATER_SNAPSHOTS + 1)[1:]).astype(int))
    rows, ok = [], True
    off = ~np.eye(len(X0), dtype=bool)
    for j in later:
        Xt = transported(trace, int(j), X0)
        ident = gh_upper_bound(X0, Xt, Correspondence.identity(len(X0)))
        lower, upper = gh_bounds(X0, Xt)
        xi = float(np.max(np.abs(np.log(Xt.dist[off] / X0.dist[off])))) if off.any() else 0.0
        row = {"snapshot": int(j), "t": float(trace.times[j]), "points": len(X0),
               "gh_lower": lower, "gh_upper": upper, "identity_bound": ident, "xi": xi}
        good = upper <= ident + 1e-12
        if 0 < xi and X0.diameter < 2 and Xt.diameter < 2:
            eps = 2.0 * (1.0 - math.exp(-xi)) + EPS_APPROX_TOLERANCE
            rep = check_eps_approx(np.arange(len(X0)), X0, Xt, eps)
            row.update(eps=eps, identity_approximation=rep.passed)
            good &= rep.passed
        row["verdict"] = _verdict(bool(good))
        ok &= bool(good)
        rows.append(row)
    return {"verdict": _verdict(ok), "center": list(center), "radius": radius,
            "truncated_sample": X0.truncated, "comparisons": rows}


def verify_trace(trace: FlowTrace) -> dict:
    """Every verification suite on a trace; ``hard_fail`` is set by any failing verdict."""
    checks = {
        "residual": check_residual(trace),
        "moser": check_moser(trace),
        "distortion_ledger": check_ledger(trace),
        "doubling_bound": check_doubling(trace),
        "gh_sampling": check_gh(trace),
    }
    return {"checks": checks, "hard_fail": any(c["verdict"] == "fail" for c in checks.values())}
