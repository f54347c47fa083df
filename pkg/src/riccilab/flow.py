"""Rotationally symmetric Ricci flow on S^n.

The metric ``phi^2 dx^2 + psi^2 g_{S^{n-1}}`` is evolved by
``dg/dt = -2 Ric + L_W g`` on the fixed grid.  ``W = chi * xi`` where ``xi``
is the DeTurck field relative to the unit round sphere
``pi^2 dx^2 + sin^2(pi x) g_{S^{n-1}}`` and ``chi`` is a smooth cutoff equal
to 1 near the poles and 0 on the middle of the sphere.  Any choice of ``W``
gives the Ricci flow up to a time-dependent diffeomorphism, so every
curvature norm, distance and volume is that of the Ricci flow; the
diffeomorphism is integrated alongside (``material`` below) so fixed points
of the Ricci flow can be followed.

The unknowns are the ratios ``A = phi / pi`` and ``B = psi / sin(pi x)`` to the
background.  Both are smooth even functions at the poles, where smoothness of
the metric means ``A = B``.  In these variables every term singular at a pole
is either ``(A^2 - B^2) / sin^2`` or ``cot * (odd derivative)``, so the
equations are evaluated pointwise at interior nodes and the pole rates are
extrapolated from them.

Why the gauge is split: with no DeTurck term the defect ``A - B`` at a pole
obeys a backward heat equation and destroys the run within a few hundred
steps, while the DeTurck term damps it.  Applied everywhere, though, the
DeTurck gauge pulls grid points into a forming neck and starves the
shoulders beside it of resolution.  Away from the poles the plain flow keeps
``phi`` governed by its own equation, which is what the neck needs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

from . import _kernels
from .geometry import (
    EVEN,
    CurvatureField,
    NumericalBreakdown,
    WarpedProfile,
    curvature,
    d1,
    round_sphere,
)

FAMILIES = ("round_sphere", "dumbbell")
STATUSES = ("completed", "singularity-approached", "breakdown")

# curvature time-step constant: dt <= cfl / (2 C Q)
CURVATURE_DT_CONSTANT = 10.0
MAX_RETRIES = 12
# an extra snapshot is taken whenever Q has grown by this factor since the last one
SNAPSHOT_Q_GROWTH = 1.05


@dataclass(frozen=True)
class Scenario:
    """Parameters of one flow run.

    ``neck_center``/``neck_width`` locate the compact bump that carves the
    neck of the dumbbell in the x coordinate.  ``pairs`` are point pairs
    ``((x, angle), (x, angle))`` tracked by the distance-distortion ledger,
    ``kappa_samples`` caps the snapshots given a volume-ratio estimate (0 means
    all) and ``ledger_stride`` groups snapshots into ledger windows.
    """

    n: int = 3
    family: str = "round_sphere"
    radius: float = 1.0
    neck: float = 0.2
    bump: float = 1.0
    neck_center: float = 0.5
    neck_width: float = 0.35
    grid_n: int = 200
    cfl: float = 0.4
    stop_q_ratio: float = 100.0
    max_steps: int = 1_000_000
    output_stride: int = 10
    lambdas: tuple[float, ...] = (1.0, 1.5, 2.0)
    gh_sample_k: int = 5
    pairs: tuple = (((0.0, 0.0), (1.0, 0.0)), ((0.25, 0.0), (0.75, 0.0)))
    checkpoints: tuple[float, ...] = ()
    kappa_samples: int = 24
    ledger_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "checkpoints", tuple(sorted(float(v) for v in self.checkpoints)))
        object.__setattr__(self, "pairs", tuple(
            (tuple(map(float, a)), tuple(map(float, b))) for a, b in self.pairs))
        problems = {
            "n": int(self.n) != self.n or self.n < 3,
            "family": self.family not in FAMILIES,
            "cfl": not 0.0 < self.cfl < 1.0,
            "stop_q_ratio": not self.stop_q_ratio > 1.0,
            "grid_n": int(self.grid_n) != self.grid_n or self.grid_n < 50,
            "max_steps": int(self.max_steps) != self.max_steps or self.max_steps < 0,
            "output_stride": int(self.output_stride) != self.output_stride or self.output_stride < 1,
            "radius": not self.radius > 0,
            "bump": not self.bump > 0,
            "neck": not 0 < self.neck < self.bump,
            "neck_center": not 0 < self.neck_center < 1,
            "neck_width": not 0 < self.neck_width,
            "gh_sample_k": int(self.gh_sample_k) != self.gh_sample_k or self.gh_sample_k < 1,
            "kappa_samples": int(self.kappa_samples) != self.kappa_samples or self.kappa_samples < 0,
            "ledger_stride": int(self.ledger_stride) != self.ledger_stride or self.ledger_stride < 1,
            "lambdas": len(self.lambdas) == 0,
            "checkpoints": any(t <= 0 for t in self.checkpoints),
        }
        for key, bad in problems.items():
            if bad:
                raise ValueError(f"invalid scenario value for {key!r}: {getattr(self, key)!r}")
        for a, b in self.pairs:
            for p in (a, b):
                if len(p) != 2 or not 0.0 <= p[0] <= 1.0:
                    raise ValueError(f"invalid scenario value for 'pairs': {p!r}")


def _bump(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def initial_profile(scenario: Scenario) -> WarpedProfile:
    """Initial metric of a scenario.

    The dumbbell is ``psi = bump sin(pi x) (1 - a B((x - c)/w))`` with ``B`` the
    standard compactly supported smooth bump (``B(0) = 1``) and ``a`` chosen so
    that ``psi(c) = neck``; ``phi = pi * bump``.  Away from the bump support it
    is a round sphere of radius ``bump``, so the poles are exactly regular.
    """
    sc = scenario
    N = sc.grid_n
    if sc.family == "round_sphere":
        return round_sphere(sc.n, sc.radius, N)
    x = np.linspace(0.0, 1.0, N + 1)
    base = sc.bump * np.sin(np.pi * x)
    a = 1.0 - sc.neck / (sc.bump * math.sin(math.pi * sc.neck_center))
    psi = base * (1.0 - a * _bump((x - sc.neck_center) / sc.neck_width))
    psi[0] = psi[-1] = 0.0
    if sc.neck_center == 0.5:
        psi = 0.5 * (psi + psi[::-1])
    phi = np.full_like(x, math.pi * sc.bump)
    if np.any(psi[1:-1] <= 0):
        raise ValueError("dumbbell violates psi > 0 in the interior (neck too deep)")
    prof = WarpedProfile(sc.n, x, phi, psi, 0.0)
    slope = np.gradient(psi, x) / phi
    if np.max(np.abs(slope)) > 1.0 + 1e-6:
        raise ValueError(
            f"dumbbell violates |dpsi/ds| <= 1 (max {np.max(np.abs(slope)):.4f}); widen the neck")
    prof.check_poles()
    return prof


@lru_cache(maxsize=16)
def _trig(N: int) -> tuple[np.ndarray, np.ndarray]:
    """``sin(pi x)`` and ``cos(pi x)`` with exact mirror symmetry about x = 1/2."""
    x = np.linspace(0.0, 1.0, N + 1)
    y = np.minimum(x, 1.0 - x)
    sn = np.sin(np.pi * y)
    cs = np.cos(np.pi * y) * np.where(x > 0.5, -1.0, 1.0)
    if N % 2 == 0:
        cs[N // 2] = 0.0
    sn.setflags(write=False)
    cs.setflags(write=False)
    return sn, cs


# The DeTurck term acts fully where min(x, 1 - x) < GAUGE_INNER and not at
# all beyond GAUGE_OUTER.
GAUGE_INNER = 0.05
GAUGE_OUTER = 0.25
# the transition is the polynomial step I_u(k+1, k+1), C^k at both ends; an
# exp(-1/u) step is smoother but too steep near its ends for the grid
GAUGE_SMOOTHNESS = 6


@lru_cache(maxsize=16)
def _gauge_cutoff(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Cutoff ``chi`` (1 at the poles, 0 mid-sphere) and ``d chi / d sigma``."""
    x = np.linspace(0.0, 1.0, N + 1)
    y = np.minimum(x, 1.0 - x)
    width = GAUGE_OUTER - GAUGE_INNER
    u = np.clip((y - GAUGE_INNER) / width, 0.0, 1.0)
    k = GAUGE_SMOOTHNESS + 1
    chi = 1.0 - betainc(k, k, u)
    dstep = u ** (k - 1) * (1.0 - u) ** (k - 1) / beta_fn(k, k)
    # d/dsigma = (1/pi) d/dx, and dy/dx flips sign past the equator
    dchi = -dstep / width / np.pi * np.where(x > 0.5, -1.0, 1.0)
    if N % 2 == 0:
        dchi[N // 2] = 0.0
    chi.setflags(write=False)
    dchi.setflags(write=False)
    return chi, dchi


def _fill_poles(f: np.ndarray) -> np.ndarray:
    _kernels._fill_poles(f)
    return f


def to_regular(profile: WarpedProfile) -> tuple[np.ndarray, np.ndarray]:
    """Ratios ``(A, B)`` of ``(phi, psi)`` to the unit round sphere."""
    sn, _ = _trig(profile.N)
    A = profile.phi / np.pi
    B = np.empty_like(A)
    B[1:-1] = profile.psi[1:-1] / sn[1:-1]
    return A, _fill_poles(B)


def from_regular(n: int, grid: np.ndarray, A: np.ndarray, B: np.ndarray, time: float) -> WarpedProfile:
    sn, _ = _trig(grid.size - 1)
    return WarpedProfile(n, grid, np.pi * A, B * sn, time)


def _rates(n: int, A: np.ndarray, B: np.ndarray, M: np.ndarray, grid: np.ndarray, h: float):
    sn, cs = _trig(A.size - 1)
    chi, dchi = _gauge_cutoff(A.size - 1)
    A_t, B_t, M_t = np.empty_like(A), np.empty_like(B), np.empty_like(M)
    if not _kernels.flow_rates(float(n), A, B, M, grid, h, sn, cs, chi, dchi, A_t, B_t, M_t):
        bad = ~(np.isfinite(A_t) & np.isfinite(B_t))
        raise NumericalBreakdown("non-finite flow rate", int(np.argmax(bad)))
    return A_t, B_t, M_t


def gauge_field(profile: WarpedProfile) -> np.ndarray:
    """x-component of the field ``W`` moving the grid relative to the Ricci flow.

    A scalar ``f`` sampled at a fixed node changes at rate
    ``(df/dt)_Ricci + W * f_x``.
    """
    A, B = to_regular(profile)
    N = profile.N
    sn, cs = _trig(N)
    chi, _ = _gauge_cutoff(N)
    hs = np.pi * profile.h
    a1, b1 = d1(A, hs, EVEN), d1(B, hs, EVEN)
    W = np.zeros_like(A)
    i = slice(1, N)
    a, b, s, c = A[i], B[i], sn[i], cs[i]
    D = (a * a - b * b) / (s * s)
    xi = a1[i] / a**3 + (profile.n - 1) * (c * s * D / (a * a * b * b) - b1[i] / (a * a * b))
    W[i] = chi[i] * xi / np.pi
    return W


def _rk4(n, A, B, M, h, grid, dt):
    """Classical RK4 on ``(A, B, material)``."""
    u0 = (A, B, M)
    k1 = _rates(n, *u0, grid, h)
    k2 = _rates(n, *(u + 0.5 * dt * k for u, k in zip(u0, k1)), grid, h)
    k3 = _rates(n, *(u + 0.5 * dt * k for u, k in zip(u0, k2)), grid, h)
    k4 = _rates(n, *(u + dt * k for u, k in zip(u0, k3)), grid, h)
    A1, B1, M1 = (u + dt / 6.0 * (p + 2.0 * (q + r) + w) for u, p, q, r, w in zip(u0, k1, k2, k3, k4))
    M1[0], M1[-1] = 0.0, 1.0
    bad = ~((A1 > 0) & (B1 > 0))
    if np.any(bad):
        raise NumericalBreakdown("profile left the positive range", int(np.argmax(bad)))
    return A1, B1, M1


def step(profile: WarpedProfile, dt: float) -> WarpedProfile:
    """One RK4 step of the flow; raises ``NumericalBreakdown`` if positivity fails."""
    if dt == 0.0:
        return profile
    A, B = to_regular(profile)
    grid = profile.grid
    A1, B1, _ = _rk4(profile.n, A, B, grid.copy(), profile.h, grid, dt)
    return from_regular(profile.n, grid, A1, B1, profile.time + dt)


# The sixth-order Laplacian plus the pole damping term reach about
# -9.1 / ds^2 in the spectrum; RK4 is stable to -2.78 / dt.
STENCIL_FACTOR = 0.5


def stable_dt(profile: WarpedProfile, Q: float, cfl: float) -> float:
    ds_min = float(np.min(profile.phi)) * profile.h
    return 0.5 * cfl * min(STENCIL_FACTOR * ds_min**2, 1.0 / (CURVATURE_DT_CONSTANT * max(Q, 1e-300)))


def neck_radius(psi: np.ndarray) -> float:
    """Smallest interior local minimum of ``psi`` (NaN if there is none)."""
    i = np.arange(1, psi.size - 1)
    mins = i[(psi[i] < psi[i - 1]) & (psi[i] <= psi[i + 1])]
    mins = mins[(mins > 1) & (mins < psi.size - 2)]
    return float(psi[mins].min()) if mins.size else math.nan


@dataclass(frozen=True, eq=False)
class FlowTrace:
    times: np.ndarray
    profiles: tuple[WarpedProfile, ...]
    curvatures: tuple[CurvatureField, ...]
    O: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    P_minus: np.ndarray
    diameter: np.ndarray
    neck_radius: np.ndarray
    status: str = "completed"
    message: str = ""
    scenario: Scenario | None = None
    steps: int = 0
    material: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.material is None:
            object.__setattr__(self, "material", tuple(p.grid for p in self.profiles))
        if len(self.material) != len(self.profiles):
            raise ValueError("one material map per snapshot is required")

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def n(self) -> int:
        return self.profiles[0].n

    @classmethod
    def from_profiles(cls, profiles: Sequence[WarpedProfile], **kw) -> "FlowTrace":
        if len(profiles) == 0:
            raise ValueError("a trace needs at least one snapshot")
        times = np.array([p.time for p in profiles], dtype=float)
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must increase strictly")
        curvs = tuple(curvature(p) for p in profiles)
        from .geometry import arclength
        return cls(
            times=times,
            profiles=tuple(profiles),
            curvatures=curvs,
            O=np.array([np.max(np.abs(c.scalar)) for c in curvs]),
            P=np.array([np.max(c.norm_ric) for c in curvs]),
            Q=np.array([np.max(c.norm_rm) for c in curvs]),
            P_minus=np.array([np.max(c.norm_ric_minus) for c in curvs]),
            diameter=np.array([arclength(p)[-1] for p in profiles]),
            neck_radius=np.array([neck_radius(p.psi) for p in profiles]),
            **kw,
        )

    def rescaled(self, c: float) -> "FlowTrace":
        """Parabolic rescaling ``g -> c^2 g``, ``t -> c^2 t`` of the whole trace."""
        return FlowTrace.from_profiles(
            [p.scaled(c) for p in self.profiles], material=self.material, status=self.status,
            message=self.message, scenario=self.scenario, steps=self.steps)

    def subset(self, idx) -> "FlowTrace":
        idx = list(idx)
        return FlowTrace.from_profiles(
            [self.profiles[i] for i in idx], material=tuple(self.material[i] for i in idx),
            status=self.status, message=self.message, scenario=self.scenario, steps=self.steps)

    def material_position(self, k: int, x0: float) -> float:
        """Grid coordinate at snapshot ``k`` of the point that started at ``x0``."""
        m = self.material[k]
        if x0 <= 0.0 or x0 >= 1.0:
            return float(x0)
        return float(np.interp(x0, m, self.profiles[k].grid))


def run(scenario: Scenario) -> FlowTrace:
    """Integrate until the curvature ratio, the step budget or a breakdown stops the run.

    Snapshots are kept every ``output_stride`` steps, whenever Q has grown by
    ``SNAPSHOT_Q_GROWTH`` since the previous snapshot, at every scenario
    checkpoint time (the step is shortened to land on it exactly) and at the
    final time.
    """
    sc = scenario
    prof = initial_profile(sc)
    n, grid, h = prof.n, prof.grid, prof.h
    A, B = to_regular(prof)
    M = grid.copy()
    snaps, mats = [prof], [M]
    q0 = float(np.max(curvature(prof).norm_rm))
    q = q0
    status, message = "completed", ""
    pending = list(sc.checkpoints)
    steps = since = 0
    q_snap = q
    while steps < sc.max_steps:
        if q >= sc.stop_q_ratio * q0:
            status = "singularity-approached"
            break
        dt = stable_dt(prof, q, sc.cfl)
        target = None
        if pending and prof.time + dt >= pending[0]:
            dt = pending[0] - prof.time
            target = pending[0]
        for _ in range(MAX_RETRIES):
            try:
                A1, B1, M1 = _rk4(n, A, B, M, h, grid, dt)
                t1 = target if target is not None else prof.time + dt
                new = from_regular(n, grid, A1, B1, t1)
                q_new = float(_kernels.max_norm_rm(n, new.phi, new.psi, h))
                break
            except (NumericalBreakdown, ValueError) as exc:
                dt *= 0.5
                target = None
                message = str(exc)
        else:
            status = "breakdown"
            break
        if target is not None:
            pending.pop(0)
        A, B, M, prof, q = A1, B1, M1, new, q_new
        steps += 1
        since += 1
        if target is not None or since >= sc.output_stride or q >= SNAPSHOT_Q_GROWTH * q_snap:
            snaps.append(prof)
            mats.append(M)
            since, q_snap = 0, q
    if snaps[-1] is not prof:
        snaps.append(prof)
        mats.append(M)
    if status != "breakdown":
        message = ""
    return FlowTrace.from_profiles(snaps, material=tuple(mats), status=status, message=message,
                                   scenario=sc, steps=steps)


@dataclass(frozen=True)
class SingularTimeFit:
    T_hat: float
    residual: float
    lower_bound: float
    window: tuple[int, int]


def last_decade(Q: np.ndarray) -> np.ndarray:
    """Indices of the snapshots whose Q lies within a factor 10 of the last one."""
    return np.nonzero(Q >= Q[-1] / 10.0)[0]


def estimate_singular_time(trace: FlowTrace, min_points: int = 10) -> SingularTimeFit:
    """Fit ``1/Q = (T - t)/c`` over the last decade of Q.

    ``residual`` is the RMS misfit divided by the spread of ``1/Q`` over the
    window; ``lower_bound`` is ``t_last + 1/(8 Q_last)``.
    """
    t, Q = trace.times, trace.Q
    idx = last_decade(Q)
    if idx.size < min_points:
        raise ValueError(
            f"singular-time fit needs {min_points} snapshots in the last decade of Q, have {idx.size}")
    y = 1.0 / Q[idx]
    A = np.vstack([t[idx], np.ones(idx.size)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    if slope >= 0:
        raise ValueError("1/Q is not decreasing over the last decade; no finite-time blowup")
    T_hat = -icpt / slope
    fit = A @ np.array([slope, icpt])
    spread = float(np.ptp(y))
    resid = float(np.sqrt(np.mean((fit - y) ** 2)) / spread) if spread > 0 else 0.0
    lower = float(t[-1] + 1.0 / (8.0 * Q[-1]))
    return SingularTimeFit(float(T_hat), resid, lower, (int(idx[0]), int(idx[-1])))
