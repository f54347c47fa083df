"""Distances and geodesic balls on a rotationally symmetric S^n.

Every pair of points lies on a totally geodesic meridian 2-sphere, a surface
of revolution ``ds^2 + psi(s)^2 dtheta^2``.  A point is given as
``(x, theta)``: grid coordinate and angle on that meridian sphere.

Geodesics are found through the Clairaut integral ``psi sin(beta) = c``.  For
a fixed constant ``c`` a geodesic moves monotonically in ``s`` between turning
points where ``psi = c``; the angle and length picked up on a monotone leg are

    Theta = int c / (psi sqrt(psi^2 - c^2)) ds,
    Lambda = int psi / sqrt(psi^2 - c^2) ds.

Three families of legs connect a source ``a`` to a target ``b``: direct,
turning once beyond ``max(a, b)`` and turning once below ``min(a, b)``.  The
launch angle (equivalently ``c``) is found by scanning ``c`` and bisecting each
bracket of ``Theta(c) = alpha``; the shortest root wins.  If no bracket is
found the distance falls back to a shortest path on a polar mesh.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.special import beta as beta_fn, betainc

from .geometry import WarpedProfile, arclength, unit_sphere_volume

_FAMILIES = ("direct", "upper", "lower")


def _reference_rule(levels: int = 20, order: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on [0, 1] graded geometrically towards both ends.

    The innermost piece at each end uses ``u = delta w^2`` so that inverse
    square-root endpoint singularities are integrated exactly in the limit.
    """
    w, W = np.polynomial.legendre.leggauss(order)
    w = 0.5 * (w + 1.0)
    W = 0.5 * W
    nodes, weights = [], []
    delta = 0.5 ** (levels + 1)
    nodes.append(delta * w**2)
    weights.append(2.0 * delta * w * W)
    for k in range(levels, 0, -1):
        a, b = 0.5 ** (k + 1), 0.5**k
        nodes.append(a + (b - a) * w)
        weights.append((b - a) * W)
    u = np.concatenate(nodes)
    wt = np.concatenate(weights)
    return np.concatenate([u, 1.0 - u[::-1]]), np.concatenate([wt, wt[::-1]])


_U, _W = _reference_rule()


@dataclass(frozen=True)
class GeodesicResult:
    length: float
    method: str          # "meridian", "clairaut" or "graph"
    clairaut: float      # Clairaut constant of the minimizer (0 for meridians)

    @property
    def reduced_accuracy(self) -> bool:
        return self.method == "graph"


@dataclass(frozen=True)
class BallVolume:
    volume: float
    saturated: bool


class MeridianSurface:
    """Interpolated meridian profile ``psi(s)`` of a warped metric."""

    def __init__(self, profile: WarpedProfile, refine: int = 4):
        self.profile = profile
        self.n = profile.n
        self.s = arclength(profile)
        self.L = float(self.s[-1])
        self._psi = PchipInterpolator(self.s, profile.psi)
        self._s_of_x = PchipInterpolator(profile.grid, self.s)
        self._x_of_s = PchipInterpolator(self.s, profile.grid)
        m = refine * profile.N
        self.sf = np.linspace(0.0, self.L, m + 1)
        self.pf = self.psi(self.sf)
        inner = np.arange(1, m)
        is_min = (self.pf[inner] < self.pf[inner - 1]) & (self.pf[inner] <= self.pf[inner + 1])
        self._local_min = inner[is_min]

    def psi(self, s):
        return np.maximum(self._psi(np.clip(s, 0.0, self.L)), 0.0)

    def s_of_x(self, x):
        return np.clip(self._s_of_x(x), 0.0, self.L)

    def x_of_s(self, s):
        return np.clip(self._x_of_s(np.clip(s, 0.0, self.L)), 0.0, 1.0)

    # ---- band boundaries -------------------------------------------------

    def _min_between(self, a: float, b: np.ndarray) -> np.ndarray:
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        i = np.searchsorted(self.sf, lo, side="right")
        j = np.searchsorted(self.sf, hi, side="left")
        m = np.minimum(self.psi(lo), self.psi(hi))
        for k in range(b.size):
            if j.flat[k] > i.flat[k]:
                m.flat[k] = min(m.flat[k], self.pf[i.flat[k]:j.flat[k]].min())
        return m

    def _turning(self, start: np.ndarray, c: np.ndarray, upward: bool):
        """First ``s`` beyond ``start`` (upward or downward) with ``psi(s) = c``.

        ``start`` has shape ``(nb,)`` and ``c`` shape ``(nb, nc)``; returns the
        turning points and the fine-grid index of the crossing cell.
        """
        nb, nc = c.shape
        left = np.empty_like(c)
        right = np.empty_like(c)
        cell = np.empty(c.shape, dtype=int)
        sf, pf = self.sf, self.pf
        for k in range(nb):
            if upward:
                i0 = int(np.searchsorted(sf, start[k], side="right"))
                rm = np.minimum.accumulate(pf[i0:])
                j = np.searchsorted(-rm, -c[k], side="left")
                idx = i0 + np.minimum(j, rm.size - 1)
                right[k] = sf[idx]
                left[k] = np.where(j == 0, start[k], sf[np.maximum(idx - 1, 0)])
                left[k] = np.maximum(left[k], start[k])
            else:
                i0 = int(np.searchsorted(sf, start[k], side="left")) - 1
                rm = np.minimum.accumulate(pf[i0::-1])
                j = np.searchsorted(-rm, -c[k], side="left")
                idx = i0 - np.minimum(j, rm.size - 1)
                left[k] = sf[idx]
                right[k] = np.where(j == 0, start[k], sf[np.minimum(idx + 1, sf.size - 1)])
                right[k] = np.minimum(right[k], start[k])
            cell[k] = idx
        # psi > c on the near side of the cell, psi <= c on the far side
        for _ in range(60):
            mid = 0.5 * (left + right)
            near = self.psi(mid) > c
            if upward:
                left, right = np.where(near, mid, left), np.where(near, right, mid)
            else:
                left, right = np.where(near, left, mid), np.where(near, mid, right)
            if np.all(right - left <= 4e-16 * self.L):
                break
        return 0.5 * (left + right), cell

    # ---- leg integrals ---------------------------------------------------

    def _legs(self, s1, s2, c):
        """Angle and length of monotone legs from ``s1`` to ``s2 >= s1``."""
        span = (s2 - s1)[..., None]
        s = s1[..., None] + span * _U
        psi = self.psi(s)
        cc = c[..., None]
        gap = psi * psi - cc * cc
        live = (gap > 0) & (psi > 0)
        rad = np.sqrt(np.where(live, gap, 1.0))
        # nodes that round onto the turning point carry no weight
        dtheta = np.where(live, cc / (np.where(live, psi, 1.0) * rad), 0.0)
        dlen = np.where(live, psi / rad, 0.0)
        theta = (span[..., 0]) * np.sum(_W * dtheta, axis=-1)
        length = (span[..., 0]) * np.sum(_W * dlen, axis=-1)
        return theta, length

    def families(self, a: float, b: np.ndarray, c_frac: np.ndarray):
        """Angle/length of each geodesic family on a grid of Clairaut constants.

        ``c_frac`` are fractions of the largest admissible constant
        ``min psi`` on ``[min(a, b), max(a, b)]``.  Returns a dict mapping family
        name to ``(c, theta, length, continuous)`` where ``continuous[..., j]``
        tells whether the family varies continuously from ``c[j]`` to
        ``c[j + 1]``.
        """
        b = np.atleast_1d(np.asarray(b, dtype=float))
        cmax = self._min_between(a, b)
        c = cmax[:, None] * c_frac[None, :]
        lo = np.minimum(a, b)[:, None] * np.ones_like(c)
        hi = np.maximum(a, b)[:, None] * np.ones_like(c)
        aa = np.full_like(c, a)
        bb = b[:, None] * np.ones_like(c)
        out = {}

        th, ln = self._legs(lo, hi, c)
        out["direct"] = (c, th, ln, np.ones(c[:, :-1].shape, dtype=bool))

        top, cell = self._turning(np.maximum(a, b), c, upward=True)
        t1, l1 = self._legs(aa, top, c)
        t2, l2 = self._legs(bb, top, c)
        out["upper"] = (c, t1 + t2, l1 + l2, self._continuous(cell))

        bot, cell = self._turning(np.minimum(a, b), c, upward=False)
        t1, l1 = self._legs(bot, aa, c)
        t2, l2 = self._legs(bot, bb, c)
        out["lower"] = (c, t1 + t2, l1 + l2, self._continuous(cell))
        return out

    def _continuous(self, cell: np.ndarray) -> np.ndarray:
        """Turning points jump when ``c`` passes the value of a local minimum."""
        i, j = cell[:, :-1], cell[:, 1:]
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        ok = np.ones(i.shape, dtype=bool)
        for m in self._local_min:
            ok &= ~((lo < m) & (m < hi))
        return ok

    def family_point(self, family: str, a: float, b: float, c: float) -> tuple[float, float]:
        ca = np.array([[c]])
        aa, bb = np.array([[a]]), np.array([[b]])
        lo, hi = np.minimum(aa, bb), np.maximum(aa, bb)
        if family == "direct":
            th, ln = self._legs(lo, hi, ca)
        elif family == "upper":
            top, _ = self._turning(np.array([max(a, b)]), ca, upward=True)
            t1, l1 = self._legs(aa, top, ca)
            t2, l2 = self._legs(bb, top, ca)
            th, ln = t1 + t2, l1 + l2
        else:
            bot, _ = self._turning(np.array([min(a, b)]), ca, upward=False)
            t1, l1 = self._legs(bot, aa, ca)
            t2, l2 = self._legs(bot, bb, ca)
            th, ln = t1 + t2, l1 + l2
        return float(th[0, 0]), float(ln[0, 0])


_SURFACES: "weakref.WeakKeyDictionary[WarpedProfile, MeridianSurface]" = weakref.WeakKeyDictionary()


def meridian_surface(profile: WarpedProfile) -> MeridianSurface:
    surf = _SURFACES.get(profile)
    if surf is None:
        surf = _SURFACES[profile] = MeridianSurface(profile)
    return surf


def _angle_gap(t1: float, t2: float) -> float:
    a = abs(t1 - t2) % (2.0 * np.pi)
    return min(a, 2.0 * np.pi - a)


# c grid clustered towards both ends of (0, 1)
_C_SCAN = np.sin(0.5 * np.pi * (np.arange(1, 97) / 97.0)) ** 2
_C_SCAN = np.concatenate([[1e-7, 1e-5, 1e-3], _C_SCAN, [1.0 - 1e-7]])


# accepted mismatch between the reached and the wanted angle
_ROOT_TOL = 1e-8
_MAX_BRACKETS = 4


def _targets(alpha: float, theta_max: float) -> list[float]:
    """Angles congruent to +-alpha modulo 2 pi, up to ``theta_max``."""
    out, k = [], 0
    while 2 * np.pi * k - alpha <= theta_max:
        for t in (2 * np.pi * k + alpha, 2 * np.pi * k - alpha):
            if 0.0 <= t <= theta_max and t not in out:
                out.append(t)
        k += 1
    return out


def geodesic(profile: WarpedProfile, a, b) -> GeodesicResult:
    """Minimizing geodesic between ``a = (x, theta)`` and ``b = (x, theta)``."""
    surf = meridian_surface(profile)
    sa, sb = float(surf.s_of_x(a[0])), float(surf.s_of_x(b[0]))
    alpha = _angle_gap(a[1], b[1])
    direct = abs(sa - sb)
    at_pole = a[0] in (0.0, 1.0) or b[0] in (0.0, 1.0)
    tiny = 1e-12 * float(surf.pf.max())
    if alpha == 0.0 or at_pole or surf.psi(sa) <= tiny or surf.psi(sb) <= tiny:
        return GeodesicResult(direct, "meridian", 0.0)

    # curves through a pole, and along the parallel, are always admissible
    best = GeodesicResult(min(sa + sb, 2.0 * surf.L - sa - sb), "meridian", 0.0)
    if sa == sb and surf.psi(sa) * alpha < best.length:
        best = GeodesicResult(float(surf.psi(sa) * alpha), "clairaut", float(surf.psi(sa)))

    fams = surf.families(sa, np.array([sb]), _C_SCAN)
    # no curve is shorter than its change in arclength; shorter roots are quadrature artifacts
    floor = direct * (1.0 - 1e-12)
    found = False
    for name in _FAMILIES:
        c, th, ln, cont = (v[0] for v in fams[name])
        if name == "direct":
            # exact c = 0 limit (the meridian), so tiny angle gaps still bracket
            c, th, ln = np.r_[0.0, c], np.r_[0.0, th], np.r_[direct, ln]
            cont = np.r_[True, cont]
        ok = np.isfinite(th) & np.isfinite(ln)
        if not np.any(ok):
            continue
        for target in _targets(alpha, float(th[ok].max())):
            g = th - target
            # scan nodes already on target (degenerate families, e.g. antipodes)
            hit = ok & (np.abs(g) < _ROOT_TOL) & (ln >= floor)
            if np.any(hit):
                found = True
                j = int(np.argmin(np.where(hit, ln, np.inf)))
                if ln[j] < best.length:
                    best = GeodesicResult(float(ln[j]), "clairaut", float(c[j]))
            idx = np.nonzero((np.sign(g[:-1]) != np.sign(g[1:])) & cont & ok[:-1] & ok[1:]
                             & ~hit[:-1] & ~hit[1:])[0]
            # a degenerate family (all roots equally long) brackets many times
            idx = idx[np.argsort(np.minimum(ln[idx], ln[idx + 1]), kind="stable")][:_MAX_BRACKETS]
            for j in idx:
                def f(cc):
                    return surf.family_point(name, sa, sb, cc)[0] - target
                try:
                    root = brentq(f, c[j], c[j + 1], xtol=1e-15, rtol=1e-13, maxiter=100)
                except ValueError:
                    continue
                th_r, length = surf.family_point(name, sa, sb, root)
                if abs(th_r - target) > _ROOT_TOL or length < floor:
                    continue
                found = True
                if length < best.length:
                    best = GeodesicResult(length, "clairaut", root)
    if found or best.method == "clairaut" or abs(alpha - np.pi) < 1e-12:
        return best
    graph = max(direct, _graph_distance(surf, sa, a[1], sb, b[1]))
    return GeodesicResult(min(best.length, graph), "graph", np.nan)


def geodesic_distance(profile: WarpedProfile, a, b) -> float:
    if a[0] == b[0] and _angle_gap(a[1], b[1]) == 0.0:
        return 0.0
    return geodesic(profile, a, b).length


def _graph_distance(surf: MeridianSurface, sa, ta, sb, tb, ns: int = 200, nt: int = 256) -> float:
    """Shortest path on a polar (s, theta) mesh with a 16-neighbour stencil."""
    s = np.linspace(0.0, surf.L, ns + 1)
    t = np.linspace(0.0, 2.0 * np.pi, nt, endpoint=False)
    psi = surf.psi(s)
    nodes = np.arange((ns + 1) * nt).reshape(ns + 1, nt)
    rows, cols, wts = [], [], []
    steps = [(1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)]
    for di, dj in steps:
        i = np.arange(0, ns + 1 - di)
        for sign in (1,):
            j = np.arange(nt)
            I, J = np.meshgrid(i, j, indexing="ij")
            I2, J2 = I + di, (J + sign * dj) % nt
            pm = 0.5 * (psi[I] + psi[I2])
            w = np.hypot(s[I2] - s[I], pm * (t[1] - t[0]) * dj)
            rows.append(nodes[I, J].ravel())
            cols.append(nodes[I2, J2].ravel())
            wts.append(w.ravel())
    r, cidx, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(wts)
    G = coo_matrix((w, (r, cidx)), shape=(nodes.size, nodes.size)).tocsr()
    ia, ja = int(round(sa / surf.L * ns)), int(round(ta / (2 * np.pi) * nt)) % nt
    ib, jb = int(round(sb / surf.L * ns)), int(round(tb / (2 * np.pi) * nt)) % nt
    d = dijkstra(G, directed=False, indices=nodes[ia, ja])
    return float(d[nodes[ib, jb]])


# ---- geodesic balls ------------------------------------------------------

def _sin_power_integral(theta, k: int):
    """``int_0^theta sin^k``, vectorized, for ``theta`` in [0, pi]."""
    theta = np.clip(theta, 0.0, np.pi)
    a, b = 0.5 * (k + 1), 0.5
    full = beta_fn(a, b)
    half = 0.5 * full * betainc(a, b, np.sin(np.minimum(theta, np.pi - theta)) ** 2)
    return np.where(theta <= 0.5 * np.pi, half, full - half)


def _union_measure(intervals: list[tuple[float, float]], k: int) -> float:
    clipped = []
    for lo, hi in intervals:
        if hi < lo:
            lo, hi = hi, lo
        if lo < 2 * np.pi and hi > np.pi:
            # angles past pi are reached from the other side
            clipped.append((2 * np.pi - min(hi, 2 * np.pi), 2 * np.pi - max(lo, np.pi)))
        if lo < np.pi:
            clipped.append((max(lo, 0.0), min(hi, np.pi)))
    if not clipped:
        return 0.0
    clipped.sort()
    total, cur_lo, cur_hi = 0.0, *clipped[0]
    for lo, hi in clipped[1:]:
        if lo > cur_hi:
            total += float(_sin_power_integral(cur_hi, k) - _sin_power_integral(cur_lo, k))
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    total += float(_sin_power_integral(cur_hi, k) - _sin_power_integral(cur_lo, k))
    return total


def _family_intervals(c, th, ln, cont, rho) -> list[tuple[float, float]]:
    feas = ln <= rho
    out = []
    for j in range(th.size - 1):
        if not cont[j]:
            continue
        f0, f1 = feas[j], feas[j + 1]
        if f0 and f1:
            out.append((th[j], th[j + 1]))
        elif f0 != f1 and np.isfinite(ln[j]) and np.isfinite(ln[j + 1]):
            w = (rho - ln[j]) / (ln[j + 1] - ln[j])
            tc = th[j] + w * (th[j + 1] - th[j])
            out.append((th[j], tc) if f0 else (tc, th[j + 1]))
    return out


_C_BALL = np.sin(0.5 * np.pi * (np.arange(0, 97) / 96.0)) ** 2
_C_BALL[0] = 0.0
_C_BALL[-1] = 1.0 - 1e-9


def _cross_section(surf: MeridianSurface, sc: float, s: np.ndarray, rho: float) -> np.ndarray:
    """Weighted angular measure ``int sin^{n-2}`` of the ball at each ``s``."""
    k = surf.n - 2
    full = float(beta_fn(0.5 * (k + 1), 0.5))
    out = np.zeros(s.size)
    if surf.psi(sc) <= 0.0 or sc <= 0.0 or sc >= surf.L:
        out[np.abs(s - sc) <= rho] = full
        return out
    live = np.nonzero((np.abs(s - sc) <= rho) & (surf.psi(s) > 0))[0]
    if live.size == 0:
        return out
    fams = surf.families(sc, s[live], _C_BALL)
    for row, idx in enumerate(live):
        intervals = []
        for name in _FAMILIES:
            c, th, ln, cont = (v[row] for v in fams[name])
            intervals += _family_intervals(c, th, ln, cont, rho)
        if sc + s[idx] <= rho or 2 * surf.L - sc - s[idx] <= rho:
            intervals.append((np.pi, np.pi))
        if abs(s[idx] - sc) <= rho:
            intervals.append((0.0, 0.0))
        out[idx] = _union_measure(intervals, k)
    return out


def ball_volume(profile: WarpedProfile, center, radius: float, full: bool = False):
    """Volume of the geodesic ball of the given radius about ``center = (x, theta)``.

    The ball is integrated as ``omega_{n-2} int psi^{n-1} A(s) ds`` where
    ``A(s)`` is the ``sin^{n-2}``-weighted angular measure of the ball's slice
    at arclength ``s``.  Radii at or beyond the diameter (the pole-to-pole
    distance) return the total volume with ``saturated=True``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    surf = meridian_surface(profile)
    n = profile.n
    omega = unit_sphere_volume(n - 2)
    if radius >= surf.L:
        res = BallVolume(total_meridian_volume(surf), True)
        return res if full else res.volume
    sc = float(surf.s_of_x(center[0]))
    lo, hi = max(0.0, sc - radius), min(surf.L, sc + radius)
    v, wv = np.polynomial.legendre.leggauss(48)
    v = 0.5 * (v + 1.0)
    wv = 0.5 * wv
    vol = 0.0
    for a, b in ((lo, sc), (sc, hi)):
        if b <= a:
            continue
        s = a + (b - a) * 0.5 * (1.0 - np.cos(np.pi * v))
        jac = (b - a) * 0.5 * np.pi * np.sin(np.pi * v)
        A = _cross_section(surf, sc, s, radius)
        vol += float(np.sum(wv * jac * surf.psi(s) ** (n - 1) * A))
    res = BallVolume(omega * vol, False)
    return res if full else res.volume


def total_meridian_volume(surf: MeridianSurface) -> float:
    n = surf.n
    v, wv = np.polynomial.legendre.leggauss(64)
    pieces = np.linspace(0.0, surf.L, 17)
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        s = a + (b - a) * 0.5 * (v + 1.0)
        total += 0.5 * (b - a) * float(np.sum(wv * surf.psi(s) ** (n - 1)))
    return unit_sphere_volume(n - 1) * total
