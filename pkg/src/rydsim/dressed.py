"""Dressed-state quantities: mixing angle, Rydberg fraction, Stark shifts,
dressed interaction J, its V-bandwidth and the performance index.

``sign(0)`` is taken as +1 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .hamiltonian import build_h2_reduced


def _sgn(x):
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)


class DressedAngle(NamedTuple):
    theta: float
    p_r: float
    coeffs: tuple[float, float]  # amplitudes of |1> and |r> in |d>


class StarkShifts(NamedTuple):
    u1: float
    u2_exact: float
    u2_blockade: float

    @property
    def j(self) -> float:
        return abs(2 * self.u1 - self.u2_exact)


@dataclass(frozen=True)
class DressedQuantities:
    theta: float
    p_r: float
    u1: float
    u2_exact: float
    u2_blockade: float
    j: float
    bw_j: float
    performance: float


def dressed_angle(omega: float, delta: float) -> DressedAngle:
    """Mixing angle of |d> = -sign(D) sin(theta/2)|1> + cos(theta/2)|r>.

    sin(theta) = W/sqrt(W^2+D^2), cos(theta) = -sign(D) D/sqrt(W^2+D^2),
    P_r = cos^2(theta/2).
    """
    if omega == 0 and delta == 0:
        raise ValueError("dressed angle undefined for omega = delta = 0")
    s = float(_sgn(delta))
    rabi = np.hypot(omega, delta)
    theta = float(np.arctan2(omega / rabi, -s * delta / rabi))
    c1, cr = -s * np.sin(theta / 2), np.cos(theta / 2)
    return DressedAngle(theta, float(cr**2), (float(c1), float(cr)))


def single_atom_shift(omega, delta):
    """U1 = (D - sign(D) sqrt(W^2 + D^2)) / 2 (vectorized)."""
    return (delta - _sgn(delta) * np.hypot(omega, delta)) / 2


def blockade_pair_shift(omega, delta):
    """Strong-blockade limit U2 = (D - sign(D) sqrt(2 W^2 + D^2)) / 2."""
    return (delta - _sgn(delta) * np.sqrt(2 * np.square(omega) + np.square(delta))) / 2


def exact_pair_shift(omega, delta, v):
    """U2 = -sign(D) min|eig(H2)| from the reduced two-atom Hamiltonian.

    A tie in |eig| means eigenvalues +-a, so the value is unambiguous.
    Broadcasts over array arguments.
    """
    omega, delta, v = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (omega, delta, v)))
    h = np.zeros(omega.shape + (3, 3))
    c = omega / np.sqrt(2)
    h[..., 0, 1] = h[..., 1, 0] = c
    h[..., 1, 2] = h[..., 2, 1] = c
    h[..., 1, 1] = delta
    h[..., 2, 2] = 2 * delta + v
    eig = np.linalg.eigvalsh(h)
    return -_sgn(delta) * np.abs(eig).min(axis=-1)


def stark_shifts(omega: float, delta: float, v: float) -> StarkShifts:
    eig = np.linalg.eigvalsh(build_h2_reduced(omega, delta, v))
    u2 = -float(_sgn(delta)) * float(np.abs(eig).min())
    return StarkShifts(float(single_atom_shift(omega, delta)), u2, float(blockade_pair_shift(omega, delta)))


def dressed_energy(omega, delta, v):
    """J = |2 U1 - U2| (vectorized)."""
    return np.abs(2 * single_atom_shift(omega, delta) - exact_pair_shift(omega, delta, v))


@dataclass(frozen=True)
class Landscape:
    delta: np.ndarray  # (nd,)
    v: np.ndarray  # (nv,)
    j: np.ndarray  # (nd, nv)
    p_r: np.ndarray  # (nd,)
    omega: float

    def rows(self):
        """(delta, v, J, P_r) tuples in rad/us, delta-major order."""
        for i, d in enumerate(self.delta):
            for k, v in enumerate(self.v):
                yield float(d), float(v), float(self.j[i, k]), float(self.p_r[i])

    def ridge(self) -> np.ndarray:
        """Detuning of maximal J for every V column."""
        return self.delta[np.argmax(self.j, axis=0)]

    def p_r_contour(self, level: float = 0.25) -> float:
        """Detuning at which P_r crosses `level` (linear interpolation on the grid)."""
        p = self.p_r
        idx = np.nonzero(np.diff(np.sign(p - level)))[0]
        if not len(idx):
            return float("nan")
        i = idx[0]
        return float(self.delta[i] + (level - p[i]) * (self.delta[i + 1] - self.delta[i]) / (p[i + 1] - p[i]))


def scan_landscape(delta_grid, v_grid, omega: float) -> Landscape:
    delta_grid = np.asarray(delta_grid, dtype=float)
    v_grid = np.asarray(v_grid, dtype=float)
    if delta_grid.size == 0 or v_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(np.diff(delta_grid) < 0) or np.any(np.diff(v_grid) < 0):
        raise ValueError("grids must be sorted")
    dd, vv = np.meshgrid(delta_grid, v_grid, indexing="ij")
    j = dressed_energy(omega, dd, vv)
    p_r = (1 - np.abs(delta_grid) / np.hypot(omega, delta_grid)) / 2
    return Landscape(delta_grid, v_grid, j, p_r, float(omega))


def _bisect(fun, lo, hi, iters=60):
    flo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm >= 0) == (flo >= 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bandwidth(omega: float, delta: float, v0: float, epsilon_bw: float = 0.1, window=None, n_scan: int = 400) -> float:
    """Width of the contiguous V-interval around `v0` where J(V) >= (1-eps) J(v0).

    The interval is bracketed on an `n_scan` grid over `window` (default
    ``(v0/2, 2 v0)``) and its edges refined by bisection. Edges that reach the
    window are clipped to it.
    """
    if not 0 < epsilon_bw < 1:
        raise ValueError("epsilon_bw must lie in (0, 1)")
    lo_w, hi_w = window if window is not None else (v0 / 2, 2 * v0)
    j0 = float(dressed_energy(omega, delta, v0))
    if j0 == 0:
        return 0.0
    thr = (1 - epsilon_bw) * j0

    def excess(v):
        return float(dressed_energy(omega, delta, v)) - thr

    grid = np.linspace(lo_w, hi_w, n_scan)
    ok = dressed_energy(omega, delta, grid) >= thr
    i0 = int(np.clip(np.searchsorted(grid, v0), 1, n_scan - 1))
    # walk outwards from v0 to the first failing grid point on each side
    right = None
    for i in range(i0, n_scan):
        if not ok[i]:
            right = _bisect(excess, max(v0, grid[i - 1]), grid[i])
            break
    left = None
    for i in range(i0 - 1, -1, -1):
        if not ok[i]:
            left = _bisect(excess, min(v0, grid[i + 1]), grid[i])
            break
    return (hi_w if right is None else right) - (lo_w if left is None else left)


def delta_for_rydberg_fraction(omega: float, p_r):
    """Negative detuning giving Rydberg fraction `p_r` in (0, 1/2)."""
    p_r = np.asarray(p_r, dtype=float)
    if np.any((p_r <= 0) | (p_r >= 0.5)):
        raise ValueError("P_r must lie in (0, 1/2) for this dressing branch")
    return -omega * (1 - 2 * p_r) / (2 * np.sqrt(p_r * (1 - p_r)))


@dataclass(frozen=True)
class PerformanceCurve:
    p_r: np.ndarray
    delta: np.ndarray
    j: np.ndarray
    bw_j: np.ndarray
    t2_proxy: np.ndarray
    performance: np.ndarray  # normalized to unit maximum


def performance_index(
    p_r_grid, omega: float, v: float, gamma_ref: float = 1.0, epsilon_bw: float = 0.1
) -> PerformanceCurve:
    """per = J * T2_proxy * bw_J with T2_proxy = 1 / (P_r * gamma_ref), normalized.

    With the dressed-state convention used here P_r = cos^2(theta/2) <= 1/2,
    so the grid must lie in (0, 1/2).
    """
    p_r = np.asarray(p_r_grid, dtype=float)
    delta = delta_for_rydberg_fraction(omega, p_r)
    j = dressed_energy(omega, delta, v)
    bw = np.array([bandwidth(omega, d, v, epsilon_bw) for d in delta])
    t2 = 1.0 / (p_r * gamma_ref)
    per = j * t2 * bw
    top = per.max()
    return PerformanceCurve(p_r, delta, j, bw, t2, per / top if top > 0 else per)


def dressed_quantities(omega: float, delta: float, v: float, epsilon_bw: float = 0.1) -> DressedQuantities:
    ang = dressed_angle(omega, delta)
    st = stark_shifts(omega, delta, v)
    bw = bandwidth(omega, delta, v, epsilon_bw)
    return DressedQuantities(
        ang.theta, ang.p_r, st.u1, st.u2_exact, st.u2_blockade, st.j, bw, st.j * bw / ang.p_r if ang.p_r else 0.0
    )
