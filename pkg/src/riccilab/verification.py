"""Numerical checks of curvature identities and estimates along a flow.

* ``evolution_residual`` measures how well the recorded scalar curvature obeys
  ``(d/dt - Laplacian) R = 2 |Ric|^2``.
* ``moser_check`` estimates the constant ``A0`` in ``P(0) <= A0 sqrt(sup O)``
  on parabolically normalized windows.
* ``soliton_gallery`` tabulates the gap functional
  ``min(sqrt(sup|Rm| sup|R|), sup|Ric|)`` on closed-form shrinking solitons.
* ``gap_report`` gathers every measured rate, integral and bound of a run.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .flow import FlowTrace, gauge_field, last_decade
from .functionals import (
    DivergenceIntegrals,
    DoublingVerdict,
    DyadicDecomposition,
    FunctionalSeries,
    KappaSeries,
)
from .geometry import EVEN, volume_element

# centred time differences are trusted while Q grows by less than this
# factor across the three snapshots
RESIDUAL_Q_GROWTH = 1.25
MID_FLOW = (0.25, 0.75)


def _d1_2(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order first derivative of an even function (zero at both poles)."""
    g = np.concatenate([[EVEN * f[1]], f, [EVEN * f[-2]]])
    return (g[2:] - g[:-2]) / (2.0 * h)


def _d2_2(f: np.ndarray, h: float) -> np.ndarray:
    g = np.concatenate([[EVEN * f[1]], f, [EVEN * f[-2]]])
    return (g[2:] - 2.0 * f + g[:-2]) / (h * h)


def laplacian(profile, field_: np.ndarray) -> np.ndarray:
    """Second-order Laplacian of a rotationally symmetric function.

    ``f_ss + (n-1) (psi_s / psi) f_s`` in the interior; at a pole the two terms
    coincide in the limit and give ``n f_ss``.
    """
    h, phi, psi, n = profile.h, profile.phi, profile.psi, profile.n
    fx, fxx = _d1_2(field_, h), _d2_2(field_, h)
    phx = _d1_2(phi, h)
    px = np.zeros_like(psi)
    px[1:-1] = (psi[2:] - psi[:-2]) / (2.0 * h)
    f_s = fx / phi
    f_ss = (fxx - fx * phx / phi) / phi**2
    out = np.empty_like(field_)
    out[1:-1] = f_ss[1:-1] + (n - 1) * (px[1:-1] / phi[1:-1]) / psi[1:-1] * f_s[1:-1]
    out[0] = n * f_ss[0]
    out[-1] = n * f_ss[-1]
    return out


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    index: np.ndarray      # snapshot of each centred stencil
    times: np.ndarray
    sup: np.ndarray        # sup |r| / sup |dR/dt|
    l2: np.ndarray         # volume RMS of r / sup |dR/dt|
    reliable: np.ndarray   # False where Q grows too fast across the stencil

    def worst(self, reliable_only: bool = True, window: tuple[float, float] | None = None) -> float:
        """Largest sup-residual, optionally restricted to ``window`` (fractions of the run).

        The first stencils straddle the fast initial layer with the coarse
        output stride, so refinement studies look at ``MID_FLOW``.
        """
        m = self.reliable.copy() if reliable_only else np.ones_like(self.reliable)
        if window is not None and self.times.size:
            end = self.times[-1]
            m &= (self.times >= window[0] * end) & (self.times <= window[1] * end)
        return float(np.max(self.sup[m])) if np.any(m) else math.nan


def residual_at(trace: FlowTrace, k: int) -> tuple[float, float, bool]:
    """Normalized residual from snapshots ``k-1, k, k+1``."""
    if not 1 <= k <= len(trace) - 2:
        raise ValueError("a centred residual needs a snapshot on either side")
    t0, t1, t2 = trace.times[k - 1:k + 2]
    R0, R1, R2 = (trace.curvatures[j].scalar for j in (k - 1, k, k + 1))
    h0, h1 = t1 - t0, t2 - t1
    # second-order derivative on a non-uniform three-point stencil
    dR = (-h1 / (h0 * (h0 + h1))) * R0 + ((h1 - h0) / (h0 * h1)) * R1 + (h0 / (h1 * (h0 + h1))) * R2
    prof, curv = trace.profiles[k], trace.curvatures[k]
    W = gauge_field(prof)
    dR_ricci = dR - W * _d1_2(R1, prof.h)
    r = dR_ricci - laplacian(prof, R1) - 2.0 * curv.norm_ric**2
    scale = float(np.max(np.abs(dR_ricci)))
    if scale == 0.0:
        return 0.0, 0.0, True
    vol = volume_element(prof)
    l2 = math.sqrt(np.trapezoid(r**2 * vol, prof.grid) / np.trapezoid(vol, prof.grid))
    growth = trace.Q[k + 1] / trace.Q[k - 1]
    reliable = max(growth, 1.0 / growth) < RESIDUAL_Q_GROWTH
    return float(np.max(np.abs(r))) / scale, l2 / scale, bool(reliable)


def evolution_residual(trace: FlowTrace, snapshots=None) -> ResidualSeries:
    """Residual of the scalar-curvature evolution identity at interior snapshots."""
    if len(trace) < 3:
        raise ValueError("evolution residual needs at least 3 snapshots")
    idx = np.arange(1, len(trace) - 1) if snapshots is None else np.asarray(snapshots, dtype=int)
    rows = np.array([residual_at(trace, int(k)) for k in idx], dtype=float).reshape(-1, 3)
    return ResidualSeries(idx, trace.times[idx], rows[:, 0], rows[:, 1], rows[:, 2].astype(bool))


@dataclass(frozen=True)
class MoserEstimate:
    end: int                     # snapshot at the window end
    window: tuple[float, float]
    A0: float


def moser_check(trace: FlowTrace, end: int) -> MoserEstimate:
    """``A0 = P(t_e) / sqrt(Q(t_e) * sup_window O)`` on ``[t_e - 1/(8 Q(t_e)), t_e]``.

    This is ``P(0) / sqrt(sup O)`` of the flow rescaled by ``Q(t_e)`` so that
    ``Q = 1`` at the window end and the window becomes ``[-1/8, 0]``.
    """
    t, O = trace.times, trace.O
    te, qe = float(t[end]), float(trace.Q[end])
    if qe <= 0:
        if trace.P[end] == 0:
            return MoserEstimate(end, (te, te), 0.0)
        raise ValueError("window needs positive curvature at its end")
    start = te - 1.0 / (8.0 * qe)
    if start < t[0]:
        raise ValueError(f"window [{start:.6g}, {te:.6g}] starts before the trace")
    inside = (t >= start) & (t <= te)
    sup_O = max(float(np.max(O[inside])), float(np.interp(start, t, O)))
    if sup_O == 0:
        return MoserEstimate(end, (start, te), 0.0 if trace.P[end] == 0 else math.inf)
    return MoserEstimate(end, (start, te), float(trace.P[end] / math.sqrt(qe * sup_O)))


def moser_series(trace: FlowTrace, ends=None) -> list[MoserEstimate]:
    """``moser_check`` at every snapshot (or ``ends``) whose window fits in the trace."""
    ends = range(len(trace)) if ends is None else ends
    out = []
    for k in ends:
        try:
            out.append(moser_check(trace, int(k)))
        except ValueError:
            continue
    return out


@dataclass(frozen=True)
class SolitonEntry:
    name: str
    dimension: int
    radius_sq: float | None
    sup_rm: float
    sup_ric: float
    sup_r: float
    gap: float
    note: str


def _sphere_norms(k: int, radius_sq: float) -> tuple[float, float, float]:
    """|Rm|, |Ric|, R of a round k-sphere factor of the given radius squared."""
    return (math.sqrt(2.0 * k * (k - 1)) / radius_sq,
            math.sqrt(k) * (k - 1) / radius_sq,
            k * (k - 1) / radius_sq)


def soliton_gallery(dimensions=(3, 4, 5)) -> list[SolitonEntry]:
    """Shrinking solitons normalized to ``Ric + L_V g = g/2`` (extinction at time 1)."""
    out = []
    for n in dimensions:
        r2 = 2.0 * (n - 1)
        rm, ric, r = _sphere_norms(n, r2)
        out.append(SolitonEntry(f"sphere S^{n}", n, r2, rm, ric, r, min(math.sqrt(rm * r), ric),
                                f"round sphere, radius^2 = 2(n-1) = {r2:g}"))
    for n in dimensions:
        r2 = 2.0 * (n - 2)
        rm, ric, r = _sphere_norms(n - 1, r2)
        out.append(SolitonEntry(f"cylinder S^{n - 1}xR", n, r2, rm, ric, r,
                                min(math.sqrt(rm * r), ric),
                                f"round S^{n - 1} of radius^2 = 2(n-2) = {r2:g} times a line"))
    for n in dimensions:
        out.append(SolitonEntry(f"flat R^{n}", n, None, 0.0, 0.0, 0.0, 0.0,
                                "Gaussian soliton, flat metric"))
    return out


VERDICTS = ("pass", "reported", "fail")
RM_RATE_FLOOR = 1.0 / 8.0
RM_RATE_TOLERANCE = 0.02


@dataclass(frozen=True)
class GapEntry:
    name: str
    statement: str
    value: float | None
    threshold: float | None
    verdict: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")


# every inequality the report covers, in report order
GAP_ENTRIES = {
    "rm_rate_floor": "(T-t) sup|Rm| >= 1/8 near a singular time",
    "ric_rate": "limsup (T-t) sup|Ric| is bounded below (by 1/(100 n^2) for type-I blowup)",
    "ric_rate_vs_doubling": "limsup (T-t) P >= eps0 / log 2 with eps0 the per-doubling integral of P",
    "rm_growth_under_ric_rate": "Q (T-t)^lambda -> 0 for lambda above the rate set by (T-t) P",
    "sqrt_OQ_rate": "limsup (T-t) sqrt(sup|Rm| sup|R|) is bounded below",
    "sqrt_OQ_rate_vs_constants": "limsup (T-t) sqrt(O Q) >= eps0 / (sqrt(2) A0)",
    "scalar_rate": "liminf (T-t) sup|R| > 0 for type-I blowup",
    "ric_minus_rate": "(T-t) sup|Ric_-| is bounded below unless the |R|^((n+2)/2) integral diverges",
    "int_P": "int sup|Ric| dt diverges at a singular time",
    "int_R_alpha": "int int |R|^((n+2)/2) dv dt diverges at a type-I singular time",
    "doubling_gap": "each doubling of Q costs at least eps0 of int P dt",
    "doubling_bound": "Q(K)/Q(t0) < 2^(int P dt / eps0 + 1)",
    "distance_distortion": "|log(d_t1 / d_t0)| <= int_t0^t1 P dt",
    "moser_A0": "P(0) <= A0 sqrt(sup O) on a normalized window of length 1/8",
    "kappa": "Vol B(x, r) >= kappa r^n where sup|Rm| <= r^-2",
    "soliton_gap": "min(sqrt(sup|Rm| sup|R|), sup|Ric|) > 0 on non-flat shrinking solitons",
}


@dataclass(frozen=True)
class GapReport:
    T_hat: float | None
    fit_residual: float | None
    status: str
    entries: tuple[GapEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if names != list(GAP_ENTRIES):
            raise ValueError("a gap report lists every covered inequality exactly once, in order")

    def __getitem__(self, name: str) -> GapEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def hard_fail(self) -> bool:
        return any(e.verdict == "fail" for e in self.entries)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "GapReport":
        raw = json.loads(text)
        entries = tuple(GapEntry(**e) for e in raw.pop("entries"))
        return cls(entries=entries, **raw)


def _window(values: np.ndarray, idx: np.ndarray) -> dict:
    v = values[idx]
    return {"min": float(np.min(v)), "max": float(np.max(v))}


def _decreasing(v: np.ndarray) -> bool:
    return bool(v.size >= 2 and v[-1] < v[0] and np.all(np.diff(v) <= 1e-12 * np.abs(v[:-1])))


def gap_report(trace: FlowTrace, series: FunctionalSeries, decomposition: DyadicDecomposition,
               fit_residual: float | None = None, doubling: DoublingVerdict | None = None,
               divergence: DivergenceIntegrals | None = None, ledger=None,
               moser: list[MoserEstimate] | None = None, kappa: KappaSeries | None = None,
               gallery: list[SolitonEntry] | None = None) -> GapReport:
    """Collect every measured rate and bound of a run.

    Hard verdicts exist only where a numeric threshold is known: the 1/8
    floor (with tolerance 0.02), the type-I Ricci floor 1/(100 n^2), the
    doubling bound, the distance distortion inequality and positivity of the
    soliton gaps.  Everything else is reported.  Without ``T_hat`` (or with a
    fit residual of 5% or more) all rate entries are left empty.
    """
    n = trace.n
    use_T = series.T_hat is not None and (fit_residual is None or fit_residual < 0.05)
    idx = last_decade(trace.Q)
    if use_T:
        idx = idx[series.T_hat - trace.times[idx] > 0]
        use_T = idx.size > 0
    eps = decomposition.epsilon_hat if len(decomposition) else None
    A0_max = max((m.A0 for m in moser), default=None) if moser else None

    def entry(name, value=None, threshold=None, verdict="reported", **details):
        return GapEntry(name, GAP_ENTRIES[name], None if value is None else float(value),
                        threshold, verdict, details)

    e = {}
    if use_T:
        tq, tp, to = series.tQ, series.tP, series.tO
        toq, tpm = series.t_sqrt_OQ, series.tP_minus
        floor = RM_RATE_FLOOR - RM_RATE_TOLERANCE
        wq = _window(tq, idx)
        e["rm_rate_floor"] = entry("rm_rate_floor", wq["min"], floor,
                                   "pass" if wq["min"] >= floor else "fail", window_max=wq["max"])
        wp = _window(tp, idx)
        ric_floor = 1.0 / (100.0 * n * n)
        e["ric_rate"] = entry("ric_rate", wp["max"], ric_floor,
                              "pass" if wp["max"] >= ric_floor else "fail", window_min=wp["min"])
        if eps is not None:
            e["ric_rate_vs_doubling"] = entry("ric_rate_vs_doubling", wp["max"],
                                              bound=eps / math.log(2.0))
        trends = {f"{lam:g}": _decreasing(series.q_lambda(lam)[idx])
                  for lam in series.lambdas if lam > 1}
        e["rm_growth_under_ric_rate"] = entry(
            "rm_growth_under_ric_rate",
            **{f"lambda_{k}_decreasing": v for k, v in trends.items()},
            **({"lambda_threshold": wp["max"] * math.log(2.0) / eps} if eps else {}))
        woq = _window(toq, idx)
        e["sqrt_OQ_rate"] = entry("sqrt_OQ_rate", woq["max"], window_min=woq["min"])
        if eps is not None and A0_max:
            e["sqrt_OQ_rate_vs_constants"] = entry("sqrt_OQ_rate_vs_constants", woq["max"],
                                                   bound=eps / (math.sqrt(2.0) * A0_max))
        wo = _window(to, idx)
        e["scalar_rate"] = entry("scalar_rate", wo["min"], window_max=wo["max"])
        wm = _window(tpm, idx)
        e["ric_minus_rate"] = entry("ric_minus_rate", wm["max"], window_min=wm["min"])
    if divergence is not None:
        e["int_P"] = entry("int_P", divergence.int_P[-1], growth_slope=divergence.growth_slope)
        e["int_R_alpha"] = entry("int_R_alpha", divergence.int_R_alpha[-1], alpha=divergence.alpha)
    if eps is not None:
        e["doubling_gap"] = entry("doubling_gap", eps, levels=len(decomposition))
    if doubling is not None:
        e["doubling_bound"] = entry("doubling_bound", doubling.min_slack_log2, 0.0,
                                    "pass" if doubling.passed else "fail",
                                    tightest_ratio=doubling.tightest_ratio,
                                    message=doubling.message)
    if ledger is not None and ledger.rows:
        e["distance_distortion"] = entry("distance_distortion", ledger.worst_margin, 0.0,
                                         "pass" if ledger.passed else "fail", rows=len(ledger.rows))
    if moser:
        e["moser_A0"] = entry("moser_A0", A0_max, window_min=min(m.A0 for m in moser),
                              windows=len(moser))
    if kappa is not None and np.any(np.isfinite(kappa.kappa)):
        e["kappa"] = entry("kappa", float(np.nanmin(kappa.kappa)), samples=int(kappa.index.size))
    if gallery is not None:
        nonflat = [s.gap for s in gallery if s.sup_rm > 0]
        flat_zero = all(s.gap == 0 for s in gallery if s.sup_rm == 0)
        e["soliton_gap"] = entry("soliton_gap", min(nonflat), 0.0,
                                 "pass" if min(nonflat) > 0 and flat_zero else "fail")
    entries = tuple(e.get(name) or entry(name) for name in GAP_ENTRIES)
    return GapReport(series.T_hat if use_T else None, fit_residual, trace.status, entries)
