"""Curvature functionals of a flow trace.

Sup-norms O, P, Q of |R|, |Ric|, |Rm| per snapshot, their blowup-rate products
against an estimated singular time, the dyadic decomposition of the run by
curvature doublings, cumulative divergence integrals and a volume-ratio
(non-collapsing) monitor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .flow import FlowTrace, last_decade
from .geodesics import ball_volume
from .geometry import volume_element

DEFAULT_LAMBDAS = (1.0, 1.5, 2.0)


@dataclass(frozen=True, eq=False)
class FunctionalSeries:
    """Per-snapshot sup-norms and, once ``T_hat`` is known, the rate products."""

    n: int
    times: np.ndarray
    O: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    P_minus: np.ndarray
    T_hat: float | None = None
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS

    def _gap(self) -> np.ndarray:
        if self.T_hat is None:
            raise ValueError("rate products need an estimated singular time")
        return self.T_hat - self.times

    @property
    def tQ(self) -> np.ndarray:
        return self._gap() * self.Q

    @property
    def tP(self) -> np.ndarray:
        return self._gap() * self.P

    @property
    def tO(self) -> np.ndarray:
        return self._gap() * self.O

    @property
    def tP_minus(self) -> np.ndarray:
        return self._gap() * self.P_minus

    @property
    def t_sqrt_OQ(self) -> np.ndarray:
        return self._gap() * np.sqrt(self.O * self.Q)

    def q_lambda(self, lam: float) -> np.ndarray:
        """``Q (T_hat - t)^lam``."""
        return self.Q * self._gap() ** lam

    def with_T_hat(self, T_hat: float) -> "FunctionalSeries":
        return FunctionalSeries(self.n, self.times, self.O, self.P, self.Q, self.P_minus,
                                float(T_hat), self.lambdas)

    def products(self) -> dict[str, np.ndarray]:
        """All rate products by column name (empty without ``T_hat``)."""
        if self.T_hat is None:
            return {}
        out = {"tQ": self.tQ, "tP": self.tP, "tO": self.tO,
               "t_sqrt_OQ": self.t_sqrt_OQ, "tP_minus": self.tP_minus}
        for lam in self.lambdas:
            out[f"Q_lambda_{lam:g}"] = self.q_lambda(lam)
        return out


def sup_norms(trace: FlowTrace, T_hat: float | None = None, lambdas=None) -> FunctionalSeries:
    if lambdas is None:
        lambdas = trace.scenario.lambdas if trace.scenario is not None else DEFAULT_LAMBDAS
    series = FunctionalSeries(trace.n, trace.times, trace.O, trace.P, trace.Q, trace.P_minus,
                              None if T_hat is None else float(T_hat), tuple(lambdas))
    if trace.status != "breakdown":
        for name in ("O", "P", "Q", "P_minus"):
            if not np.all(np.isfinite(getattr(series, name))):
                raise ValueError(f"non-finite {name} on a trace without breakdown")
    return series


def _loglinear(t: np.ndarray, y: np.ndarray, at: float) -> float:
    """Interpolate a series log-linearly in time (linearly if it is not positive)."""
    if np.any(y <= 0):
        return float(np.interp(at, t, y))
    return float(np.exp(np.interp(at, t, np.log(y))))


def _integral(t: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    """Trapezoid integral of the snapshot series over ``[a, b]``, log-linear at the ends."""
    if b <= a:
        return 0.0
    inside = (t > a) & (t < b)
    ts = np.concatenate([[a], t[inside], [b]])
    ys = np.concatenate([[_loglinear(t, y, a)], y[inside], [_loglinear(t, y, b)]])
    return float(np.trapezoid(ys, ts))


@dataclass(frozen=True)
class DyadicLevel:
    i: int
    s: float           # first time Q reaches 2^i Q(t0)
    s_next: float
    integral: float    # int_{s}^{s_next} P dt


@dataclass(frozen=True)
class DyadicDecomposition:
    t0: float
    q0: float
    levels: tuple[DyadicLevel, ...] = field(default_factory=tuple)

    @property
    def epsilon_hat(self) -> float:
        """Smallest per-doubling integral of P (NaN when there are no levels)."""
        return min((lv.integral for lv in self.levels), default=math.nan)

    def __len__(self) -> int:
        return len(self.levels)


def _crossing(t: np.ndarray, logq: np.ndarray, level: float, start: int) -> float | None:
    """First time after ``t[start]`` where the log-linear interpolant of Q reaches ``level``.

    ``start`` is the snapshot at or before the previous crossing, so the
    interpolant is below ``level`` on the segment it opens.
    """
    above = np.nonzero(logq[start + 1:] >= level)[0]
    if above.size == 0:
        return None
    k = start + 1 + int(above[0])
    if logq[k] == level:
        return float(t[k])
    t0, t1, y0, y1 = t[k - 1], t[k], logq[k - 1], logq[k]
    return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


def dyadic_decompose(trace: FlowTrace, t0: float = 0.0) -> DyadicDecomposition:
    """Split ``[t0, t_end]`` at the successive doublings of Q.

    Crossing times invert the log-linear interpolant of Q; only complete
    intervals ``[s_i, s_{i+1}]`` become levels.
    """
    t, Q, P = trace.times, trace.Q, trace.P
    if not t[0] <= t0 <= t[-1]:
        raise ValueError(f"t0 = {t0} lies outside the trace")
    q0 = _loglinear(t, Q, t0)
    logq = np.log2(Q / q0)
    start = int(np.searchsorted(t, t0, side="right")) - 1
    s = [t0]
    while True:
        nxt = _crossing(t, logq, float(len(s)), start)
        if nxt is None:
            break
        s.append(max(nxt, s[-1]))
        start = int(np.searchsorted(t, s[-1], side="right")) - 1
    levels = tuple(DyadicLevel(i, s[i], s[i + 1], _integral(t, P, s[i], s[i + 1]))
                   for i in range(len(s) - 1))
    if not levels:
        warnings.warn("Q never doubles after t0; the dyadic decomposition is empty", stacklevel=2)
    return DyadicDecomposition(float(t0), q0, levels)


@dataclass(frozen=True)
class DoublingVerdict:
    passed: bool
    tightest_ratio: float     # max over snapshots of (Q/Q0) / 2^(int P / eps + 1)
    min_slack_log2: float     # min over snapshots of log2 of bound / (Q/Q0)
    level_error: float        # max relative error of Q(s_i) against 2^i Q0
    record_error: float       # max relative mismatch of recorded Q and the curvature fields
    checked: int
    message: str = ""


LEVEL_TOLERANCE = 0.01
RECORD_TOLERANCE = 1e-6


def doubling_bound_check(trace: FlowTrace, decomposition: DyadicDecomposition) -> DoublingVerdict:
    """Check ``Q(K)/Q(t0) < 2^(int_{t0}^K P dt / eps_hat + 1)`` at every snapshot after t0.

    The bound holds by construction of the decomposition, so a failure points
    at inconsistent input: crossing times that do not reproduce ``2^i Q0``, or
    a recorded Q series that disagrees with the curvature fields it came from.
    """
    dec = decomposition
    if len(dec) == 0:
        raise ValueError("doubling check needs a non-empty decomposition")
    t, Q, P = trace.times, trace.Q, trace.P
    eps = dec.epsilon_hat
    after = np.nonzero(t > dec.t0)[0]
    cum = np.array([_integral(t, P, dec.t0, t[k]) for k in after])
    log_bound = cum / eps + 1.0
    log_ratio = np.log2(Q[after] / dec.q0)
    slack = log_bound - log_ratio
    level_err = max(abs(_loglinear(t, Q, lv.s) / (2.0**lv.i * dec.q0) - 1.0) for lv in dec.levels)
    recomputed = np.array([np.max(c.norm_rm) for c in trace.curvatures])
    record_err = float(np.max(np.abs(Q / recomputed - 1.0)))
    problems = []
    if np.any(slack <= 0):
        problems.append(f"bound violated at t = {t[after][np.argmin(slack)]:.6g}")
    if level_err > LEVEL_TOLERANCE:
        problems.append(f"Q at the crossing times is off by {level_err:.3g}")
    if record_err > RECORD_TOLERANCE:
        problems.append(f"recorded Q disagrees with the curvature by {record_err:.3g}")
    return DoublingVerdict(
        passed=not problems,
        tightest_ratio=float(np.max(2.0 ** -slack)) if slack.size else 0.0,
        min_slack_log2=float(np.min(slack)) if slack.size else math.inf,
        level_error=float(level_err),
        record_error=record_err,
        checked=int(after.size),
        message="; ".join(problems),
    )


@dataclass(frozen=True, eq=False)
class DivergenceIntegrals:
    alpha: float
    int_P: np.ndarray        # cumulative int_0^t P dt per snapshot
    int_R_alpha: np.ndarray  # cumulative int_0^t int_X |R|^alpha dv dt per snapshot
    growth_slope: float      # d(int P) / d log(1/(T_hat - t)) over the last decade


def divergence_integrals(trace: FlowTrace, T_hat: float | None = None) -> DivergenceIntegrals:
    n = trace.n
    alpha = (n + 2) / 2.0
    t = trace.times
    int_P = cumulative_trapezoid(trace.P, t, initial=0.0)
    space = np.array([np.trapezoid(np.abs(c.scalar) ** alpha * volume_element(p), p.grid)
                      for p, c in zip(trace.profiles, trace.curvatures)])
    int_R = cumulative_trapezoid(space, t, initial=0.0)
    slope = math.nan
    if T_hat is not None:
        idx = last_decade(trace.Q)
        idx = idx[T_hat - t[idx] > 0]
        if idx.size >= 2:
            slope = float(np.polyfit(np.log(1.0 / (T_hat - t[idx])), int_P[idx], 1)[0])
    return DivergenceIntegrals(alpha, int_P, int_R, slope)


@dataclass(frozen=True, eq=False)
class KappaSeries:
    index: np.ndarray     # snapshot indices that were evaluated
    times: np.ndarray
    center: np.ndarray    # x of the ball centre (node of max |Rm|)
    radius: np.ndarray    # r* = min(Q^(-1/2), diameter / 2)
    kappa: np.ndarray     # Vol(B(center, r*)) / r*^n, NaN where quadrature failed
    failed: np.ndarray

    @property
    def running_min(self) -> np.ndarray:
        k = np.where(np.isfinite(self.kappa), self.kappa, np.inf)
        return np.minimum.accumulate(k)


def kappa_snapshots(count: int, limit: int) -> np.ndarray:
    """Evenly spread snapshot indices, always including the first and last (so at least two)."""
    if limit <= 0 or count <= max(limit, 2):
        return np.arange(count)
    return np.unique(np.round(np.linspace(0, count - 1, max(limit, 2))).astype(int))


def kappa_at(trace: FlowTrace, k: int) -> tuple[float, float, float]:
    """``(center x, r*, kappa_hat)`` at snapshot ``k``."""
    prof, curv = trace.profiles[k], trace.curvatures[k]
    x = float(prof.grid[int(np.argmax(curv.norm_rm))])
    r = min(trace.Q[k] ** -0.5, 0.5 * trace.diameter[k])
    vol = ball_volume(prof, (x, 0.0), r)
    return x, r, vol / r**prof.n


def kappa_monitor(trace: FlowTrace, limit: int = 0) -> KappaSeries:
    """Volume ratio at the curvature maximum, on at most ``limit`` snapshots (0 means all)."""
    idx = kappa_snapshots(len(trace), limit)
    rows = []
    for k in idx:
        try:
            rows.append((*kappa_at(trace, int(k)), False))
        except (ValueError, ArithmeticError):
            rows.append((math.nan, math.nan, math.nan, True))
    cols = np.array(rows, dtype=float).reshape(len(rows), 4).T
    return KappaSeries(idx, trace.times[idx], cols[0], cols[1], cols[2], cols[3].astype(bool))
