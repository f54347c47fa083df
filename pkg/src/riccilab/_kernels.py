"""Compiled stencil kernels for the flow and curvature hot loops.

Each kernel mirrors the vectorized stencils in ``geometry`` (same grouping of
differences, same parity ghosts), so mirror-symmetric input still gives
exactly mirror-symmetric output.
"""
import numpy as np
from numba import njit

POLE_WEIGHTS = np.array([1.6, -0.8, 8.0 / 35.0, -1.0 / 35.0])


@njit(cache=True, inline="always")
def _at(f, k, parity):
    N = f.size - 1
    if k < 0:
        return parity * f[-k]
    if k > N:
        return parity * f[2 * N - k]
    return f[k]


@njit(cache=True, inline="always")
def _d1(f, i, h, parity):
    return (45.0 * (_at(f, i + 1, parity) - _at(f, i - 1, parity))
            - 9.0 * (_at(f, i + 2, parity) - _at(f, i - 2, parity))
            + (_at(f, i + 3, parity) - _at(f, i - 3, parity))) / (60.0 * h)


@njit(cache=True, inline="always")
def _d2(f, i, h, parity):
    return (2.0 * (_at(f, i + 3, parity) + _at(f, i - 3, parity))
            - 27.0 * (_at(f, i + 2, parity) + _at(f, i - 2, parity))
            + 270.0 * (_at(f, i + 1, parity) + _at(f, i - 1, parity))
            - 490.0 * f[i]) / (180.0 * h * h)


@njit(cache=True)
def _fill_poles(f):
    N = f.size - 1
    w = POLE_WEIGHTS
    f[0] = w[0] * f[1] + w[1] * f[2] + w[2] * f[3] + w[3] * f[4]
    f[N] = w[0] * f[N - 1] + w[1] * f[N - 2] + w[2] * f[N - 3] + w[3] * f[N - 4]


@njit(cache=True, inline="always")
def _shift(M, grid, k):
    """``M - x`` at node ``k``, continued oddly across both poles."""
    N = M.size - 1
    if k < 0:
        return grid[-k] - M[-k]
    if k > N:
        return grid[2 * N - k] - M[2 * N - k]
    return M[k] - grid[k]


@njit(cache=True, inline="always")
def _d1_shift(M, grid, i, h):
    return (45.0 * (_shift(M, grid, i + 1) - _shift(M, grid, i - 1))
            - 9.0 * (_shift(M, grid, i + 2) - _shift(M, grid, i - 2))
            + (_shift(M, grid, i + 3) - _shift(M, grid, i - 3))) / (60.0 * h)


@njit(cache=True)
def flow_rates(n, A, B, M, grid, h, sn, cs, chi, dchi, A_t, B_t, M_t):
    """Rates of the pole-regularized system; returns False on a non-finite rate.

    The DeTurck field ``xi`` is switched on by the cutoff ``chi`` (1 near the
    poles, 0 in the middle); ``dchi`` is its derivative in ``sigma = pi x``.
    """
    N = A.size - 1
    hs = np.pi * h
    m = n - 1.0
    ok = True
    for i in range(1, N):
        a, b = A[i], B[i]
        a1 = _d1(A, i, hs, 1.0)
        a2 = _d2(A, i, hs, 1.0)
        b1 = _d1(B, i, hs, 1.0)
        b2 = _d2(B, i, hs, 1.0)
        s, c = sn[i], cs[i]
        cot = c / s
        D = (a * a - b * b) / (s * s)
        # plain Ricci flow in the fixed coordinates
        ra = m * ((b2 - b) / (a * b) + 2.0 * cot * b1 / (a * b)
                  - a1 * b1 / (a * a * b) - cot * a1 / (a * a))
        rb = ((b2 + 2.0 * b1 * cot - b) / (a * a) - (b1 + b * cot) * a1 / (a * a * a)
              - (n - 2.0) * (D / (a * a * b) + (b * b - b1 * b1) / (a * a * b)
                             - 2.0 * b1 * cot / (a * a)))
        xi = a1 / (a * a * a) + m * (c * s * D / (a * a * b * b) - b1 / (a * a * b))
        k = chi[i]
        if k > 0.0:
            da = (a2 / (a * a) - 2.0 * a1 * a1 / (a * a * a) - m * a / (b * b)
                  + m * b1 * b1 / (a * b * b) + m * cot * a1 / (b * b)
                  - m * c * c * D / (a * b * b) - 2.0 * m * c * s * D * b1 / (a * b * b * b))
            db = (b2 / (a * a) - b1 * b1 / (a * a * b) - m / b
                  + m * cot * b1 / (b * b) + D / (a * a * b))
            ra += k * (da - ra)
            rb += k * (db - rb)
        A_t[i] = ra + dchi[i] * xi * a
        B_t[i] = rb
        # material map: m_t = W m_x with m - x odd about both poles
        mx = 1.0 + _d1_shift(M, grid, i, h)
        M_t[i] = k * xi / np.pi * mx
        if not (np.isfinite(A_t[i]) and np.isfinite(B_t[i])):
            ok = False
    _fill_poles(A_t)
    _fill_poles(B_t)
    M_t[0] = 0.0
    M_t[N] = 0.0
    return ok


@njit(cache=True)
def jet(phi, psi, h):
    """``psi_s``, ``psi_ss``, ``k_rad`` and ``k_sph`` at every node.

    At a pole ``psi_ss / psi`` is replaced by its limit ``(psi_ss)_x / psi_x``
    and the sphere curvature takes the same value.
    """
    N = psi.size - 1
    psi_s = np.empty(N + 1)
    psi_ss = np.empty(N + 1)
    k_rad = np.empty(N + 1)
    k_sph = np.empty(N + 1)
    psi_x = np.empty(N + 1)
    for i in range(N + 1):
        px = _d1(psi, i, h, -1.0)
        pxx = _d2(psi, i, h, -1.0)
        fx = _d1(phi, i, h, 1.0)
        f = phi[i]
        psi_x[i] = px
        psi_s[i] = px / f
        psi_ss[i] = pxx / (f * f) - px * fx / (f * f * f)
    for i in range(1, N):
        k_rad[i] = -psi_ss[i] / psi[i]
        k_sph[i] = (1.0 - psi_s[i] * psi_s[i]) / (psi[i] * psi[i])
    for i in (0, N):
        k_rad[i] = -_d1(psi_ss, i, h, -1.0) / psi_x[i]
        k_sph[i] = k_rad[i]
    return psi_s, psi_ss, k_rad, k_sph


@njit(cache=True)
def max_norm_rm(n, phi, psi, h):
    _, _, kr, ks = jet(phi, psi, h)
    q = 0.0
    for i in range(kr.size):
        v = 4.0 * (n - 1) * kr[i] * kr[i] + 2.0 * (n - 1) * (n - 2) * ks[i] * ks[i]
        if not np.isfinite(v):
            return np.inf
        if v > q:
            q = v
    return np.sqrt(q)
