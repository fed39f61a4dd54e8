"""Piecewise-constant time evolution of states and density matrices.

Small systems use an eigendecomposition per slice; large sparse systems use a
Lanczos approximation of exp(-i H t) v with an a-posteriori error estimate
and automatic sub-stepping.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hamiltonian import hermiticity_defect

DENSE_CAP = 512


class PropagationError(RuntimeError):
    """Raised when a slice cannot be propagated; carries the residual estimate."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_slices: int = 200

    def __post_init__(self):
        if int(self.n_slices) != self.n_slices or self.n_slices < 1:
            raise ValueError("n_slices must be a positive integer")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_slices

    @property
    def boundaries(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_slices + 1)

    @property
    def starts(self) -> np.ndarray:
        return self.boundaries[:-1]

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_slices) + 0.5) * self.dt

    def slice_at(self, t: float) -> int:
        """Boundary index of time `t`; ValueError if `t` is not a boundary."""
        k = round(t / self.dt)
        if abs(k * self.dt - t) > 1e-9 * max(1.0, self.t_final) or not 0 <= k <= self.n_slices:
            raise ValueError(f"time {t} is not a slice boundary of the grid")
        return int(k)


@dataclass
class EvolutionResult:
    final: np.ndarray
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    final_unitary: np.ndarray | None = None


def _as_slices(h_slices, n_slices: int) -> Callable[[int], object]:
    if callable(h_slices):
        return h_slices
    if sp.issparse(h_slices) or (isinstance(h_slices, np.ndarray) and h_slices.ndim == 2):
        return lambda j: h_slices
    seq = list(h_slices)
    if len(seq) != n_slices:
        raise ValueError(f"{len(seq)} slice Hamiltonians for {n_slices} slices")
    return seq.__getitem__


def _check_hermitian(h, j: int) -> None:
    if hermiticity_defect(h) > 1e-10:
        raise ValueError(f"slice {j}: Hamiltonian is not Hermitian")


def expm_dense(h, dt: float) -> np.ndarray:
    """exp(-i H dt) for a Hermitian matrix via eigendecomposition."""
    h = h.toarray() if sp.issparse(h) else np.asarray(h)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def expm_krylov(h, vec: np.ndarray, t: float, m: int = 30, tol: float = 1e-12, max_halvings: int = 40) -> np.ndarray:
    """Lanczos approximation of exp(-i H t) vec for Hermitian H.

    Each Krylov basis is reused for the largest sub-step whose error estimate
    beta * h_{m+1,m} * |[exp(-i tau T)]_{m,1}| stays below ``tol * tau / t``.
    """
    vec = np.asarray(vec, dtype=complex)
    n = vec.shape[0]
    m = max(1, min(m, n))
    remaining = float(t)
    tau = remaining
    out = vec.copy()
    if t == 0:
        return out
    while remaining > 0:
        beta = np.linalg.norm(out)
        if beta == 0:
            return out
        basis = np.zeros((m + 1, n), dtype=complex)
        alpha = np.zeros(m)
        offd = np.zeros(m)
        basis[0] = out / beta
        k_used = m
        h_next = 0.0
        for k in range(m):
            w = h @ basis[k]
            alpha[k] = np.vdot(basis[k], w).real
            w = w - alpha[k] * basis[k] - (offd[k - 1] * basis[k - 1] if k else 0)
            # full re-orthogonalization
            w -= basis[: k + 1].T @ (basis[: k + 1].conj() @ w)
            nrm = np.linalg.norm(w)
            if k < m - 1:
                offd[k] = nrm
            else:
                h_next = nrm
            if nrm <= 1e-14 * max(1.0, abs(alpha[k])):
                k_used = k + 1
                h_next = 0.0
                break
            if k < m - 1:
                basis[k + 1] = w / nrm
        a = alpha[:k_used]
        b = offd[: k_used - 1]
        evals, evecs = sla.eigh_tridiagonal(a, b) if k_used > 1 else (a.copy(), np.ones((1, 1)))
        tau = min(tau, remaining)
        # below this the estimate is dominated by rounding in `small`
        floor = 16 * k_used * np.finfo(float).eps * beta * h_next
        for _ in range(max_halvings):
            small = evecs @ (np.exp(-1j * evals * tau) * evecs[0].conj())
            err = beta * h_next * abs(small[-1])
            if err <= max(tol * tau / t, floor) or h_next == 0.0:
                break
            tau *= 0.5
        else:
            raise PropagationError(f"Krylov step did not converge (estimate {err:.3e})", residual=float(err))
        out = beta * (basis[:k_used].T @ small)
        remaining -= tau
        if remaining <= 1e-15 * t:
            break
        tau *= 2.0
    return out


def _apply_slice(h, state: np.ndarray, dt: float, method: str, m: int, tol: float) -> np.ndarray:
    if method == "dense":
        u = expm_dense(h, dt)
        return u @ state if state.ndim == 1 else u @ state @ u.conj().T
    if state.ndim == 1:
        return expm_krylov(h, state, dt, m, tol)
    # rho -> U rho U^dagger = (U (U rho)^dagger)^dagger
    half = np.column_stack([expm_krylov(h, col, dt, m, tol) for col in state.T])
    return np.column_stack([expm_krylov(h, col, dt, m, tol) for col in half.conj()]).conj().T


def choose_method(dim: int, method: str = "auto", dense_cap: int = DENSE_CAP) -> str:
    if method == "auto":
        return "dense" if dim <= dense_cap else "krylov"
    if method not in ("dense", "krylov"):
        raise ValueError(f"unknown method {method!r}")
    return method


def evolve(
    h_of_slice,
    initial,
    grid: TimeGrid,
    snapshot_times: Sequence[float] | None = None,
    method: str = "auto",
    dense_cap: int = DENSE_CAP,
    krylov_dim: int = 30,
    tol: float = 1e-12,
    check_hermitian: bool = True,
) -> EvolutionResult:
    """Propagate a pure state or density matrix through all slices.

    `h_of_slice` is a callable ``j -> H_j``, a sequence of matrices, or a
    single matrix (time independent). Snapshot times must be slice
    boundaries.
    """
    state = np.array(initial, dtype=complex)
    dim = state.shape[0]
    if state.ndim == 2 and state.shape != (dim, dim):
        raise ValueError("density matrix must be square")
    meth = choose_method(dim, method, dense_cap)
    get_h = _as_slices(h_of_slice, grid.n_slices)
    wanted = {}
    for t in snapshot_times or ():
        wanted.setdefault(grid.slice_at(t), []).append(float(t))
    result = EvolutionResult(final=state)
    if 0 in wanted:
        for t in wanted[0]:
            result.times.append(t)
            result.states.append(state.copy())
    for j in range(grid.n_slices):
        h = get_h(j)
        if h.shape != (dim, dim):
            raise ValueError(f"slice {j}: Hamiltonian shape {h.shape} does not match state dimension {dim}")
        if check_hermitian:
            _check_hermitian(h, j)
        state = _apply_slice(h, state, grid.dt, meth, krylov_dim, tol)
        for t in wanted.get(j + 1, ()):
            result.times.append(t)
            result.states.append(state.copy())
    result.final = state
    return result


def propagator_matrix(h_of_slice, grid: TimeGrid, dense_cap: int = DENSE_CAP) -> np.ndarray:
    """Ordered product U(t_f) = U_M ... U_1 of slice exponentials."""
    get_h = _as_slices(h_of_slice, grid.n_slices)
    first = get_h(0)
    dim = first.shape[0]
    if dim > dense_cap:
        raise ValueError(f"dimension {dim} exceeds the dense cap {dense_cap}")
    u = np.eye(dim, dtype=complex)
    for j in range(grid.n_slices):
        h = first if j == 0 else get_h(j)
        _check_hermitian(h, j)
        u = expm_dense(h, grid.dt) @ u
    return u


def evolve_static(h, initial, times: Sequence[float], dense_cap: int = DENSE_CAP, **krylov) -> list[np.ndarray]:
    """States of a time-independent evolution at increasing `times` (pure states)."""
    psi = np.asarray(initial, dtype=complex)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("times must be nonnegative and increasing")
    if psi.shape[0] <= dense_cap:
        dense = h.toarray() if sp.issparse(h) else np.asarray(h)
        w, v = np.linalg.eigh(dense)
        coef = v.conj().T @ psi
        return [v @ (np.exp(-1j * w * t) * coef) for t in times]
    out, now = [], 0.0
    for t in times:
        psi = expm_krylov(h, psi, t - now, **krylov)
        now = t
        out.append(psi.copy())
    return out


def unitarity_defect(u: np.ndarray) -> float:
    return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())


def norm_defect(state: np.ndarray) -> float:
    if state.ndim == 1:
        return abs(float(np.vdot(state, state).real) - 1.0)
    return abs(complex(np.trace(state)) - 1.0)

