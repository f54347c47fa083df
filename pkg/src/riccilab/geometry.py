"""Rotationally symmetric metrics on S^n and their curvature.

A metric ``g = phi(x)^2 dx^2 + psi(x)^2 g_{S^{n-1}}`` is stored on a uniform
grid ``x_i = i/N`` of the unit interval.  The two poles sit at ``x = 0`` and
``x = 1`` where ``psi`` vanishes.

Smoothness at the poles means ``psi`` extends as an odd function and ``phi``
as an even function of ``x`` across each pole.  All spatial derivatives use
sixth-order central stencils on ghost nodes filled by that parity, so the
same stencil applies at every node, including the poles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _kernels

ODD = -1
EVEN = 1
_GHOST = 3


class NumericalBreakdown(ArithmeticError):
    """Raised when a derivative stencil produces a non-finite value."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"{message} (node {node})")
        self.node = node


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WarpedProfile:
    """Warped-product metric on S^n at one instant of the flow.

    ``phi`` is the radial stretch (arclength per unit of ``x``) and ``psi``
    the radius of the orbit sphere S^{n-1}.  Construction validates the
    pointwise invariants; pole regularity (``dpsi/ds = +-1`` at the poles) is
    a smoothness condition checked separately by :meth:`pole_slopes`.
    """

    n: int
    grid: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "grid", _frozen(self.grid))
        object.__setattr__(self, "phi", _frozen(self.phi))
        object.__setattr__(self, "psi", _frozen(self.psi))
        n, x, phi, psi = self.n, self.grid, self.phi, self.psi
        if int(n) != n or n < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {n}")
        if x.ndim != 1 or x.size < 2 * _GHOST + 2:
            raise ValueError("grid must be one-dimensional with at least 8 nodes")
        if phi.shape != x.shape or psi.shape != x.shape:
            raise ValueError("phi, psi and grid must have the same length")
        if x[0] != 0.0 or x[-1] != 1.0 or np.any(np.diff(x) <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")
        N = x.size - 1
        if np.max(np.abs(np.diff(x) - 1.0 / N)) > 1e-12:
            raise ValueError("grid must be uniform")
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ValueError("phi must be positive at every node")
        if psi[0] != 0.0 or psi[-1] != 0.0:
            raise ValueError("psi must vanish at both poles")
        if not np.all(np.isfinite(psi)) or np.any(psi[1:-1] <= 0):
            raise ValueError("psi must be positive at every interior node")

    @property
    def N(self) -> int:
        return self.grid.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def pole_slopes(self) -> tuple[float, float]:
        """dpsi/ds at the two poles (``+1`` and ``-1`` for a smooth metric)."""
        psi_s = d1(self.psi, self.h, ODD) / self.phi
        return float(psi_s[0]), float(psi_s[-1])

    def check_poles(self, tol: float = 5e-2) -> None:
        south, north = self.pole_slopes()
        if abs(south - 1.0) > tol or abs(north + 1.0) > tol:
            raise ValueError(
                f"pole regularity violated: dpsi/ds = {south:.4g} (south), {north:.4g} (north)")

    def scaled(self, c: float) -> "WarpedProfile":
        """Parabolic rescaling ``g -> c^2 g``, ``t -> c^2 t``."""
        return WarpedProfile(self.n, self.grid, c * self.phi, c * self.psi, c * c * self.time)


def _pad(f: np.ndarray, parity: int) -> np.ndarray:
    left = parity * f[_GHOST:0:-1]
    right = parity * f[-2:-_GHOST - 2:-1]
    return np.concatenate([left, f, right])


def d1(f: np.ndarray, h: float, parity: int) -> np.ndarray:
    """Sixth-order first derivative with parity ghosts at both ends.

    Differences are grouped antisymmetrically so that a mirror-symmetric
    input gives an exactly antisymmetric output in floating point.
    """
    g = _pad(f, parity)
    n = f.size

    def sh(k):
        return g[_GHOST + k:_GHOST + k + n]

    return (45.0 * (sh(1) - sh(-1)) - 9.0 * (sh(2) - sh(-2)) + (sh(3) - sh(-3))) / (60.0 * h)


def d2(f: np.ndarray, h: float, parity: int) -> np.ndarray:
    """Sixth-order second derivative with parity ghosts at both ends."""
    g = _pad(f, parity)
    n = f.size

    def sh(k):
        return g[_GHOST + k:_GHOST + k + n]

    return (2.0 * (sh(3) + sh(-3)) - 27.0 * (sh(2) + sh(-2)) + 270.0 * (sh(1) + sh(-1))
            - 490.0 * f) / (180.0 * h * h)


@dataclass(frozen=True)
class _Jet:
    psi_s: np.ndarray
    psi_ss: np.ndarray
    k_rad: np.ndarray
    k_sph: np.ndarray


def _jet(phi: np.ndarray, psi: np.ndarray, h: float) -> _Jet:
    # psi_ss/psi -> (psi_ss)_x / psi_x at a pole; the sphere curvature takes
    # the same limit there.
    psi_s, psi_ss, k_rad, k_sph = _kernels.jet(np.asarray(phi, float), np.asarray(psi, float), h)
    bad = ~(np.isfinite(k_rad) & np.isfinite(k_sph))
    if np.any(bad):
        raise NumericalBreakdown("non-finite curvature", int(np.argmax(bad)))
    return _Jet(psi_s, psi_ss, k_rad, k_sph)


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Pointwise curvature of a warped profile.

    Tensor norms use the orthonormal-frame Frobenius convention
    ``|Ric|^2 = sum R_ij^2`` and ``|Rm|^2 = sum R_ijkl^2``.
    """

    n: int
    k_rad: np.ndarray
    k_sph: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "k_rad", _frozen(self.k_rad))
        object.__setattr__(self, "k_sph", _frozen(self.k_sph))

    @property
    def ric_rad(self) -> np.ndarray:
        return (self.n - 1) * self.k_rad

    @property
    def ric_sph(self) -> np.ndarray:
        return self.k_rad + (self.n - 2) * self.k_sph

    @property
    def scalar(self) -> np.ndarray:
        return (self.n - 1) * (2.0 * self.k_rad + (self.n - 2) * self.k_sph)

    @property
    def norm_ric(self) -> np.ndarray:
        return np.sqrt(self.ric_rad**2 + (self.n - 1) * self.ric_sph**2)

    @property
    def norm_rm(self) -> np.ndarray:
        n = self.n
        return np.sqrt(4 * (n - 1) * self.k_rad**2 + 2 * (n - 1) * (n - 2) * self.k_sph**2)

    @property
    def norm_ric_minus(self) -> np.ndarray:
        rr = np.minimum(self.ric_rad, 0.0)
        rs = np.minimum(self.ric_sph, 0.0)
        return np.sqrt(rr**2 + (self.n - 1) * rs**2)


def arclength(profile: WarpedProfile) -> np.ndarray:
    """Arclength ``s_i`` of each node from the south pole (trapezoid rule)."""
    if np.any(profile.phi <= 0):
        raise ValueError("phi must be positive")
    return cumulative_trapezoid(profile.phi, profile.grid, initial=0.0)


def curvature(profile: WarpedProfile) -> CurvatureField:
    jet = _jet(profile.phi, profile.psi, profile.h)
    return CurvatureField(profile.n, jet.k_rad, jet.k_sph)


def volume_element(profile: WarpedProfile) -> np.ndarray:
    """Density of the Riemannian volume with respect to ``dx``."""
    return unit_sphere_volume(profile.n - 1) * profile.phi * profile.psi ** (profile.n - 1)


def total_volume(profile: WarpedProfile) -> float:
    return float(np.trapezoid(volume_element(profile), profile.grid))


def unit_sphere_volume(k: int) -> float:
    """Volume of the unit k-sphere S^k."""
    from scipy.special import gamma
    return float(2.0 * np.pi ** ((k + 1) / 2) / gamma((k + 1) / 2))


def round_sphere(n: int, radius: float = 1.0, N: int = 200, time: float = 0.0) -> WarpedProfile:
    x = np.linspace(0.0, 1.0, N + 1)
    psi = radius * np.sin(np.pi * x)
    psi[0] = psi[-1] = 0.0
    psi = 0.5 * (psi + psi[::-1])
    return WarpedProfile(n, x, np.full_like(x, np.pi * radius), psi, time)
