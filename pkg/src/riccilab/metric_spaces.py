"""Finite metric spaces, Gromov-Hausdorff distances and distance distortion.

Geodesic balls of a warped profile are sampled into small pointed metric
spaces.  For finite spaces the Gromov-Hausdorff distance is half the least
distortion of a correspondence, which is computed exactly for spaces of at
most five points: a correspondence of distortion <= delta is a clique in the
graph on ``X x Y`` whose edges join pairs of compatible pairs, so the least
delta is found by bisection over the finitely many distortion values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .flow import FlowTrace
from .functionals import _integral
from .geodesics import geodesic, meridian_surface
from .geometry import WarpedProfile

BRUTE_FORCE_LIMIT = 5
TRIANGLE_TOLERANCE = 1e-9
# distance solver accuracy allowed on top of the 1e-3 ledger slack
DISCRETIZATION_TOLERANCE = 1e-4
LEDGER_SLACK = 1e-3


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """A pointed finite metric space.

    ``coords`` holds ``(x, angle)`` per point for spaces sampled from a
    profile and is ``None`` for abstract spaces.
    """

    dist: np.ndarray
    base: int = 0
    labels: tuple[str, ...] = ()
    coords: np.ndarray | None = None
    tolerance: float = TRIANGLE_TOLERANCE
    truncated: bool = False

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise ValueError("distance matrix must be square and non-empty")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distances must be finite and non-negative")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if np.max(np.abs(d - d.T)) > 0:
            raise ValueError("distance matrix must be symmetric")
        # d[i,k] - d[i,j] - d[j,k] over all triples
        worst = np.max(d[:, None, :] - d[:, :, None] - d[None, :, :])
        if worst > self.tolerance:
            raise ValueError(f"triangle inequality violated by {worst:.3g}")
        if not 0 <= self.base < d.shape[0]:
            raise ValueError("base point index out of range")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        labels = tuple(self.labels) or tuple(str(i) for i in range(d.shape[0]))
        if len(labels) != d.shape[0]:
            raise ValueError("one label per point is required")
        object.__setattr__(self, "labels", labels)
        if self.coords is not None:
            c = np.array(self.coords, dtype=float).reshape(d.shape[0], 2)
            c.setflags(write=False)
            object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return self.dist.shape[0]

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    def ball(self, radius: float) -> np.ndarray:
        """Indices whose distance to the base point is below ``radius``."""
        return np.nonzero(self.dist[self.base] < radius)[0]

    def scaled(self, c: float) -> "FiniteMetricSpace":
        return FiniteMetricSpace(c * self.dist, self.base, self.labels, self.coords, self.tolerance)

    @classmethod
    def from_points(cls, values, base: int = 0) -> "FiniteMetricSpace":
        """Points of a line or of Euclidean space with the induced metric."""
        p = np.asarray(values, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
        return cls(d, base, tuple(f"{v}" for v in np.asarray(values).tolist()))


@dataclass(frozen=True)
class Correspondence:
    """A relation between two finite spaces, as ``(i, j)`` index pairs."""

    pairs: frozenset

    def __init__(self, pairs):
        object.__setattr__(self, "pairs", frozenset((int(i), int(j)) for i, j in pairs))

    def validate(self, nx_: int, ny: int) -> None:
        left = {i for i, _ in self.pairs}
        right = {j for _, j in self.pairs}
        if any(not (0 <= i < nx_ and 0 <= j < ny) for i, j in self.pairs):
            raise ValueError("correspondence refers to a point outside the spaces")
        if left != set(range(nx_)) or right != set(range(ny)):
            raise ValueError("correspondence must cover every point of both spaces")

    @classmethod
    def identity(cls, size: int) -> "Correspondence":
        return cls((i, i) for i in range(size))


def distortion(dX: np.ndarray, dY: np.ndarray, pairs) -> float:
    pairs = list(pairs)
    if not pairs:
        return 0.0
    I = np.array([p[0] for p in pairs])
    J = np.array([p[1] for p in pairs])
    return float(np.max(np.abs(dX[np.ix_(I, I)] - dY[np.ix_(J, J)])))


def gh_upper_bound(X: FiniteMetricSpace, Y: FiniteMetricSpace, corr: Correspondence) -> float:
    """Half the distortion of ``corr``, an upper bound for the GH distance."""
    corr.validate(len(X), len(Y))
    return 0.5 * distortion(X.dist, Y.dist, corr.pairs)


def _covering_clique(dX, dY, xs, ys, delta, forced=None):
    """A correspondence between ``xs`` and ``ys`` of distortion <= delta, or None."""
    nodes = [(i, j) for i in xs for j in ys]
    g = nx.Graph()
    g.add_nodes_from(nodes)
    for (a, b), (c, d) in itertools.combinations(nodes, 2):
        if abs(dX[a, c] - dY[b, d]) <= delta:
            g.add_edge((a, b), (c, d))
    if forced is not None:
        g = g.subgraph([forced, *g.neighbors(forced)])
    need_x, need_y = set(xs), set(ys)
    for clique in nx.find_cliques(g):
        if forced is not None and forced not in clique:
            continue
        if {a for a, _ in clique} >= need_x and {b for _, b in clique} >= need_y:
            return clique
    return None


def _least_distortion(dX, dY, xs, ys, forced=None):
    """Least distortion over correspondences between ``xs`` and ``ys`` and a minimizer."""
    if len(xs) == 0 or len(ys) == 0:
        return math.inf, None
    sub_x, sub_y = dX[np.ix_(xs, xs)], dY[np.ix_(ys, ys)]
    cand = np.unique(np.abs(sub_x.ravel()[:, None] - sub_y.ravel()[None, :]))
    lo, hi = 0, cand.size - 1
    best = _covering_clique(dX, dY, xs, ys, cand[hi], forced)
    while lo < hi:
        mid = (lo + hi) // 2
        found = _covering_clique(dX, dY, xs, ys, cand[mid], forced)
        if found is None:
            lo = mid + 1
        else:
            hi, best = mid, found
    return float(cand[lo]), Correspondence(best)


def _guard(X, Y):
    if len(X) > BRUTE_FORCE_LIMIT or len(Y) > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"exact GH is limited to spaces of at most {BRUTE_FORCE_LIMIT} points "
            f"(got {len(X)} and {len(Y)}); use gh_upper_bound")


def gh_optimal(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> tuple[float, Correspondence]:
    _guard(X, Y)
    dis, corr = _least_distortion(X.dist, Y.dist, list(range(len(X))), list(range(len(Y))))
    return 0.5 * dis, corr


def gh_brute_force(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """Exact Gromov-Hausdorff distance of two spaces with at most five points each."""
    return gh_optimal(X, Y)[0]


def pointed_gh_brute_force(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> float:
    """Exact pointed GH distance: the least ``r`` whose balls ``B(base, 1/r)`` admit
    a correspondence containing the base pair with distortion below ``2 r``.

    The balls only change at ``r = 1/d`` for base distances ``d``, so the
    infimum is taken interval by interval.
    """
    _guard(X, Y)
    radii = np.unique(np.concatenate([X.dist[X.base], Y.dist[Y.base]]))
    radii = radii[radii > 0]
    # on [1/d_j, 1/d_{j-1}) both balls are {dist <= d_{j-1}}
    edges = np.concatenate([[0.0], radii, [math.inf]])
    best = math.inf
    for j in range(1, edges.size):
        lo = 0.0 if math.isinf(edges[j]) else 1.0 / edges[j]
        hi = math.inf if edges[j - 1] == 0 else 1.0 / edges[j - 1]
        xs = list(np.nonzero(X.dist[X.base] <= edges[j - 1])[0])
        ys = list(np.nonzero(Y.dist[Y.base] <= edges[j - 1])[0])
        dis, _ = _least_distortion(X.dist, Y.dist, xs, ys, forced=(X.base, Y.base))
        r = max(lo, 0.5 * dis)
        if r < hi:
            best = min(best, r)
    return float(best)


def radial_correspondence(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> Correspondence:
    """Match every point to the point of the other space at the closest distance from the base."""
    rx, ry = X.dist[X.base], Y.dist[Y.base]
    pairs = {(i, int(np.argmin(np.abs(ry - rx[i])))) for i in range(len(X))}
    pairs |= {(int(np.argmin(np.abs(rx - ry[j]))), j) for j in range(len(Y))}
    pairs.add((X.base, Y.base))
    return Correspondence(frozenset(pairs))


def gh_bounds(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> tuple[float, float]:
    """``(lower, upper)`` for the GH distance; both exact when the spaces are small enough.

    Larger spaces get half the diameter difference below and the better of the
    radial and index-order correspondences above.
    """
    if len(X) <= BRUTE_FORCE_LIMIT and len(Y) <= BRUTE_FORCE_LIMIT:
        d = gh_brute_force(X, Y)
        return d, d
    lower = 0.5 * abs(X.diameter - Y.diameter)
    upper = gh_upper_bound(X, Y, radial_correspondence(X, Y))
    if len(X) == len(Y):
        # equal sizes: the points may be listed in matching order
        upper = min(upper, gh_upper_bound(X, Y, Correspondence.identity(len(X))))
    return lower, max(lower, upper)


@dataclass(frozen=True)
class EpsApproxReport:
    base: bool
    cover: bool
    distortion: bool
    base_gap: float
    cover_gap: float
    distortion_gap: float

    @property
    def passed(self) -> bool:
        return self.base and self.cover and self.distortion

    def __bool__(self) -> bool:
        return self.passed


def check_eps_approx(mapping, X: FiniteMetricSpace, Y: FiniteMetricSpace, eps: float) -> EpsApproxReport:
    """Test the three conditions of an eps-approximation ``X -> Y``.

    Balls ``B(p, 1/eps)`` are the sample points whose distance to the base is
    below ``1/eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = np.asarray(mapping, dtype=int)
    if f.shape != (len(X),) or np.any(f < 0) or np.any(f >= len(Y)):
        raise ValueError("mapping must send every point of X to a point of Y")
    bx, by = X.ball(1.0 / eps), Y.ball(1.0 / eps)
    base_gap = float(Y.dist[f[X.base], Y.base])
    if by.size == 0:
        cover_gap = 0.0
    elif bx.size == 0:
        cover_gap = math.inf
    else:
        cover_gap = float(np.max(np.min(Y.dist[np.ix_(by, f[bx])], axis=1)))
    dist_gap = float(np.max(np.abs(X.dist[np.ix_(bx, bx)] - Y.dist[np.ix_(f[bx], f[bx])]))) \
        if bx.size else 0.0
    return EpsApproxReport(base_gap < eps, cover_gap < eps, dist_gap < eps,
                           base_gap, cover_gap, dist_gap)


def _distance_matrix(profile: WarpedProfile, coords) -> tuple[np.ndarray, bool]:
    k = len(coords)
    d = np.zeros((k, k))
    reduced = False
    for i, j in itertools.combinations(range(k), 2):
        res = geodesic(profile, tuple(coords[i]), tuple(coords[j]))
        d[i, j] = d[j, i] = res.length
        reduced |= res.reduced_accuracy
    return d, reduced


def _metric_closure(d: np.ndarray) -> np.ndarray:
    """Shortest-path closure, removing solver noise from the triangle inequality."""
    d = d.copy()
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def space_at(profile: WarpedProfile, coords, base: int = 0, labels=()) -> FiniteMetricSpace:
    """The finite space of the given ``(x, angle)`` points under ``profile``."""
    d, _ = _distance_matrix(profile, coords)
    return FiniteMetricSpace(_metric_closure(d), base, tuple(labels), np.asarray(coords))


SAMPLE_LEVELS = 7
SAMPLE_ANGLES = 12


def sample_ball(profile: WarpedProfile, center, radius: float, k: int) -> FiniteMetricSpace:
    """Deterministic stratified sample of ``k`` points from a geodesic ball.

    Candidates lie on a fixed grid of arclength levels and angles around the
    centre.  Those inside the ball are ordered by distance to the centre and
    ``k - 1`` of them are taken at evenly spaced ranks; the centre is the
    base point.  A ball with too few candidates yields a truncated space.
    """
    if k < 1:
        raise ValueError("sample size must be at least 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = (float(center[0]), float(center[1]))
    if k == 1:
        return FiniteMetricSpace(np.zeros((1, 1)), 0, ("c",), np.array([center]))
    surf = meridian_surface(profile)
    sc = float(surf.s_of_x(center[0]))
    levels = np.linspace(max(0.0, sc - radius), min(surf.L, sc + radius), SAMPLE_LEVELS)
    angles = center[1] + 2.0 * np.pi * np.arange(SAMPLE_ANGLES) / SAMPLE_ANGLES
    angles = np.mod(angles + np.pi, 2.0 * np.pi) - np.pi
    cand = []
    for s in levels:
        x = float(surf.x_of_s(s))
        at_pole = x in (0.0, 1.0)
        for a in angles[:1] if at_pole else angles:
            p = (x, 0.0 if at_pole else float(a))
            if p == center:
                continue
            d = geodesic(profile, center, p).length
            if 0.0 < d <= radius:
                cand.append((d, p))
    cand.sort()
    if len(cand) > k - 1:
        ranks = np.round(np.linspace(0, len(cand) - 1, k - 1)).astype(int)
        cand = [cand[i] for i in ranks]
    chosen = [center] + [p for _, p in cand]
    labels = tuple(f"({x:.6g},{a:.6g})" for x, a in chosen)
    space = space_at(profile, chosen, 0, labels)
    return FiniteMetricSpace(space.dist, 0, labels, space.coords, truncated=len(chosen) < k)


def transported(trace: FlowTrace, k: int, space: FiniteMetricSpace) -> FiniteMetricSpace:
    """The same material points as ``space`` (sampled at snapshot 0), measured at snapshot ``k``."""
    if space.coords is None:
        raise ValueError("space has no coordinates to transport")
    coords = [(trace.material_position(k, x), a) for x, a in space.coords]
    return space_at(trace.profiles[k], coords, space.base, space.labels)


@dataclass(frozen=True)
class LedgerRow:
    pair: int
    window: tuple[float, float]
    d_start: float
    d_end: float
    log_ratio: float     # |log(d_end / d_start)|
    int_P: float
    margin: float        # int_P - log_ratio
    reduced_accuracy: bool
    passed: bool


@dataclass(frozen=True, eq=False)
class DistortionLedger:
    rows: tuple[LedgerRow, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst_margin(self) -> float:
        return min((r.margin for r in self.rows), default=math.inf)


def pair_distances(trace: FlowTrace, pair, snapshots=None) -> tuple[np.ndarray, np.ndarray]:
    """Distance between the material points of ``pair`` at each snapshot, with solver flags."""
    (xa, ta), (xb, tb) = pair
    idx = range(len(trace)) if snapshots is None else snapshots
    out, flags = [], []
    for k in idx:
        a = (trace.material_position(k, xa), ta)
        b = (trace.material_position(k, xb), tb)
        res = geodesic(trace.profiles[k], a, b)
        out.append(res.length)
        flags.append(res.reduced_accuracy)
    return np.array(out), np.array(flags)


def distortion_window(trace: FlowTrace, pair, ia: int, ib: int, tag: int = 0) -> LedgerRow:
    d, flags = pair_distances(trace, pair, (ia, ib))
    return _row(trace, tag, ia, ib, d[0], d[1], bool(flags.any()))


def _row(trace, tag, ia, ib, da, db, reduced) -> LedgerRow:
    ta, tb = float(trace.times[ia]), float(trace.times[ib])
    if da <= 0 or db <= 0:
        raise ValueError("ledger pairs must be distinct points")
    lr = abs(math.log(db / da))
    ip = _integral(trace.times, trace.P, ta, tb)
    margin = ip - lr
    return LedgerRow(tag, (ta, tb), float(da), float(db), lr, ip, margin, reduced,
                     margin >= -(LEDGER_SLACK + DISCRETIZATION_TOLERANCE))


def distortion_ledger(trace: FlowTrace, pairs, stride: int = 1) -> DistortionLedger:
    """Distance distortion against ``int P dt`` over consecutive snapshot windows.

    ``stride`` groups that many consecutive snapshots into one window.
    """
    snaps = list(range(0, len(trace), stride))
    if snaps[-1] != len(trace) - 1:
        snaps.append(len(trace) - 1)
    rows = []
    for tag, pair in enumerate(pairs):
        d, flags = pair_distances(trace, pair, snaps)
        for w in range(len(snaps) - 1):
            rows.append(_row(trace, tag, snaps[w], snaps[w + 1], d[w], d[w + 1],
                             bool(flags[w] or flags[w + 1])))
    return DistortionLedger(tuple(rows))
