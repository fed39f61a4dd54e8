"""Hamiltonian builders (sparse, Hermitian, deterministic element order).

Full-model terms act on the 3^N space with per-atom levels (0, 1, r);
the effective microwave Hamiltonian acts on the blockade-restricted space.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hilbert import LEVEL_0, LEVEL_1, LEVEL_R, BasisSet, SpaceKind, enumerate_full
from .model import PhysicalParams


class TermLabel(enum.Enum):
    RDB = "rdb"
    MW = "mw"
    DOPPLER = "doppler"
    CONTROL = "control"


def hermiticity_defect(mat) -> float:
    """max |H - H^dagger| relative to max |H| (0 for the zero matrix)."""
    if sp.issparse(mat):
        diff = abs(mat - mat.conj().T)
        top = abs(mat).max() if mat.nnz else 0.0
        dmax = diff.max() if diff.nnz else 0.0
    else:
        mat = np.asarray(mat)
        top = np.abs(mat).max() if mat.size else 0.0
        dmax = np.abs(mat - mat.conj().T).max() if mat.size else 0.0
    return float(dmax / top) if top else 0.0


@dataclass(frozen=True, eq=False)
class HamiltonianTerm:
    matrix: sp.csr_matrix
    basis: BasisSet
    label: TermLabel

    def __post_init__(self):
        if self.matrix.shape != (len(self.basis), len(self.basis)):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match basis dimension {len(self.basis)}")
        if hermiticity_defect(self.matrix) > 1e-12:
            raise ValueError(f"{self.label.value} term is not Hermitian")

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class MicrowaveDrive:
    """Piecewise-constant microwave drive.

    ``f[h-1, j]`` multiplies ``|0><0|`` on the mirror pair (h, N+1-h) during
    slice j, i.e. it is the level shift ``-delta_mw`` of those atoms; h = 1 is
    the edge pair.
    """

    omega_mw: np.ndarray  # (n_slices,)
    f: np.ndarray  # (n_atoms // 2, n_slices)
    cap: float | None = None

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega_mw, dtype=float))
        f = np.atleast_2d(np.asarray(self.f, dtype=float))
        if f.shape[1] != omega.shape[0]:
            raise ValueError("omega_mw and f must share the slice count")
        if self.cap is not None and np.any(np.abs(omega) > self.cap * (1 + 1e-12)):
            raise ValueError("|omega_mw| exceeds the configured cap")
        object.__setattr__(self, "omega_mw", omega)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_detunings(cls, omega_mw, delta_edge, delta_nonedge, n_atoms: int, cap=None) -> "MicrowaveDrive":
        omega_mw = np.atleast_1d(np.asarray(omega_mw, dtype=float))
        m = omega_mw.shape[0]
        f = np.empty((n_atoms // 2, m))
        f[0] = -np.broadcast_to(delta_edge, (m,))
        f[1:] = -np.broadcast_to(delta_nonedge, (m,))
        return cls(omega_mw, f, cap)

    @property
    def n_slices(self) -> int:
        return self.omega_mw.shape[0]

    @property
    def n_atoms(self) -> int:
        return 2 * self.f.shape[0]

    def atom_shifts(self, slice_index: int) -> np.ndarray:
        """Per-atom coefficient of |0><0| (``-delta_mw^n``) in one slice."""
        if not 0 <= slice_index < self.n_slices:
            raise IndexError(f"slice {slice_index} out of range [0, {self.n_slices})")
        col = self.f[:, slice_index]
        return np.concatenate([col, col[::-1]])

    def delta_mw(self, slice_index: int) -> np.ndarray:
        return -self.atom_shifts(slice_index)


def _full_basis(n_atoms: int, basis: BasisSet | None) -> BasisSet:
    if basis is None:
        return enumerate_full(n_atoms)
    if basis.kind is not SpaceKind.FULL3 or basis.n_atoms != n_atoms:
        raise ValueError("full-model terms need the FULL3 basis of the same atom count")
    return basis


def local_operator_sum(n_atoms: int, site_ops) -> sp.csr_matrix:
    """Sparse sum of single-site 3x3 operators, ``site_ops`` = [(site, op), ...]."""
    dim = 3**n_atoms
    codes = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for k, op in site_ops:
        op = np.asarray(op)
        place = 3 ** (n_atoms - 1 - k)
        digit = (codes // place) % 3
        for a, b in zip(*np.nonzero(op)):
            src = codes[digit == b]
            rows.append(src + (int(a) - int(b)) * place)
            cols.append(src)
            vals.append(np.full(src.shape, op[a, b]))
    if not rows:
        return sp.csr_matrix((dim, dim))
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def level_occupation(n_atoms: int, level: int) -> np.ndarray:
    """(n_atoms, 3^N) 0/1 array: atom k is in `level` for each basis state."""
    codes = np.arange(3**n_atoms, dtype=np.int64)
    return np.stack([((codes // 3 ** (n_atoms - 1 - k)) % 3 == level).astype(float) for k in range(n_atoms)])


def nominal_v_matrix(params: PhysicalParams) -> np.ndarray:
    """V_ij = V / |i-j|^6 for 0 < |i-j| <= interaction_range, else 0."""
    n = params.n_atoms
    i, j = np.indices((n, n))
    dist = np.abs(i - j)
    with np.errstate(divide="ignore"):
        v = np.where((dist > 0) & (dist <= params.interaction_range), params.v_nn / dist.astype(float) ** 6, 0.0)
    return v


def pairwise_interaction(positions, c6: float, interaction_range: int) -> np.ndarray:
    """V_ij = C6 / |x_i - x_j|^6 for 0 < |i-j| <= interaction_range, else 0."""
    x = np.asarray(positions, dtype=float)
    n = len(x)
    v = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, min(n, i + interaction_range + 1)):
            v[i, j] = v[j, i] = c6 / abs(x[i] - x[j]) ** 6
    return v


def build_h_rdb(params: PhysicalParams, v_matrix=None, basis: BasisSet | None = None) -> HamiltonianTerm:
    """sum_n [W/2 (|r><1| + h.c.) + D |r><r|]_n + sum_{i<j} V_ij n_r^i n_r^j."""
    n = params.n_atoms
    basis = _full_basis(n, basis)
    v = nominal_v_matrix(params) if v_matrix is None else np.asarray(v_matrix, dtype=float)
    if v.shape != (n, n):
        raise ValueError(f"v_matrix must be {n}x{n}")
    if np.abs(v - v.T).max() > 0 or np.any(np.diag(v) != 0):
        raise ValueError("v_matrix must be symmetric with zero diagonal")
    i, j = np.indices((n, n))
    if np.any(v[np.abs(i - j) > params.interaction_range] != 0):
        raise ValueError("v_matrix has entries beyond interaction_range")
    drive = np.zeros((3, 3))
    drive[LEVEL_R, LEVEL_1] = drive[LEVEL_1, LEVEL_R] = params.omega / 2
    drive[LEVEL_R, LEVEL_R] = params.delta
    mat = local_operator_sum(n, [(k, drive) for k in range(n)])
    nr = level_occupation(n, LEVEL_R)
    diag = np.zeros(3**n)
    for a in range(n):
        for b in range(a + 1, n):
            if v[a, b]:
                diag += v[a, b] * nr[a] * nr[b]
    mat = (mat + sp.diags(diag)).tocsr()
    mat.sort_indices()
    return HamiltonianTerm(mat, basis, TermLabel.RDB)


def build_h2_reduced(omega: float, delta: float, v: float) -> np.ndarray:
    """Two-atom Hamiltonian in {|11>, (|1r>+|r1>)/sqrt2, |rr>}."""
    c = omega / np.sqrt(2)
    return np.array([[0.0, c, 0.0], [c, delta, c], [0.0, c, 2 * delta + v]])


def mw_coupling_operator(n_atoms: int, dressed_coeffs, coupling: str = "dressed") -> sp.csr_matrix:
    """sum_n (|0><x| + |x><0|)_n with x = d (embedded) or x = 1 (``coupling="ground"``)."""
    c1, cr = dressed_coeffs
    target = np.zeros(3)
    if coupling == "dressed":
        target[LEVEL_1], target[LEVEL_R] = c1, cr
    elif coupling == "ground":
        target[LEVEL_1] = 1.0
    else:
        raise ValueError(f"unknown coupling {coupling!r}")
    zero = np.zeros(3)
    zero[LEVEL_0] = 1.0
    op = np.outer(zero, target) + np.outer(target, zero)
    return local_operator_sum(n_atoms, [(k, op) for k in range(n_atoms)])


def build_h_mw(
    params: PhysicalParams,
    drive: MicrowaveDrive,
    slice_index: int,
    u1: float,
    basis: BasisSet | None = None,
    coupling: str = "dressed",
) -> HamiltonianTerm:
    """sum_n [W_mw (|0><d| + |d><0|)_n + (U1 - delta_mw^n) |0><0|_n] for one slice."""
    from .dressed import dressed_angle

    n = params.n_atoms
    basis = _full_basis(n, basis)
    if drive.n_atoms != n:
        raise ValueError("drive is for a different number of atoms")
    shifts = drive.atom_shifts(slice_index)
    coeffs = dressed_angle(params.omega, params.delta).coeffs
    mat = drive.omega_mw[slice_index] * mw_coupling_operator(n, coeffs, coupling)
    diag = (u1 + shifts) @ level_occupation(n, LEVEL_0)
    mat = (mat + sp.diags(diag)).tocsr()
    mat.sort_indices()
    return HamiltonianTerm(mat, basis, TermLabel.MW)


def build_h_doppler(doppler_detunings, basis: BasisSet | None = None) -> HamiltonianTerm:
    """sum_n delta_n^D |r><r|_n."""
    dop = np.asarray(doppler_detunings, dtype=float)
    n = dop.shape[0]
    if basis is not None and basis.n_atoms != n:
        raise ValueError("doppler vector length does not match the basis")
    basis = _full_basis(n, basis)
    mat = sp.diags(dop @ level_occupation(n, LEVEL_R)).tocsr()
    return HamiltonianTerm(mat, basis, TermLabel.DOPPLER)


def restricted_flip_operator(basis: BasisSet) -> sp.csr_matrix:
    """sum_n (|0><d| + |d><0|)_n projected on the restricted space."""
    n = basis.n_atoms
    rows, cols = [], []
    for k in range(n):
        flipped = basis.codes ^ (1 << (n - 1 - k))
        pos = np.searchsorted(basis.codes, flipped)
        pos_c = np.minimum(pos, len(basis) - 1)
        ok = basis.codes[pos_c] == flipped
        cols.append(np.nonzero(ok)[0])
        rows.append(pos_c[ok])
    r, c = np.concatenate(rows), np.concatenate(cols)
    mat = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(basis), len(basis)))
    mat.sort_indices()
    return mat


def restricted_zero_occupation(basis: BasisSet) -> np.ndarray:
    """(n_atoms, dim) 0/1 array: atom k is in |0> for each restricted word."""
    n = basis.n_atoms
    return np.stack([1.0 - ((basis.codes >> (n - 1 - k)) & 1) for k in range(n)]).astype(float)


def build_effective_restricted(drive: MicrowaveDrive, slice_index: int, basis: BasisSet) -> HamiltonianTerm:
    """sum_n [W_mw (|0><d| + h.c.)_n - delta_mw^n |0><0|_n] inside S3.

    U1 is cancelled by construction; couplings into neighbouring dd are absent
    because those words are not in the basis.
    """
    if basis.kind is not SpaceKind.RESTRICTED:
        raise ValueError("basis must be RESTRICTED")
    if drive.n_atoms != basis.n_atoms:
        raise ValueError("drive is for a different number of atoms")
    shifts = drive.atom_shifts(slice_index)
    mat = drive.omega_mw[slice_index] * restricted_flip_operator(basis)
    mat = (mat + sp.diags(shifts @ restricted_zero_occupation(basis))).tocsr()
    mat.sort_indices()
    return HamiltonianTerm(mat, basis, TermLabel.MW)


def dump_coo(term: HamiltonianTerm | sp.spmatrix, fh) -> None:
    """Write a matrix as ``row col re im`` lines after a commented header."""
    mat = term.matrix if isinstance(term, HamiltonianTerm) else term
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    label = term.label.value if isinstance(term, HamiltonianTerm) else "matrix"
    fh.write(f"# rydsim coordinate list: label={label} shape={coo.shape[0]}x{coo.shape[1]} nnz={coo.nnz}\n")
    fh.write("# columns: row col re im (0-based indices, rad/us)\n")
    data = coo.data.astype(complex)
    for k in order:
        fh.write(f"{coo.row[k]} {coo.col[k]} {float(data[k].real)!r} {float(data[k].imag)!r}\n")


def load_coo(fh) -> sp.csr_matrix:
    shape = None
    rows, cols, vals = [], [], []
    for line in fh:
        if line.startswith("#"):
            if "shape=" in line:
                dims = line.split("shape=")[1].split()[0]
                shape = tuple(int(x) for x in dims.split("x"))
            continue
        r, c, re, im = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(complex(float(re), float(im)))
    return sp.csr_matrix((vals, (rows, cols)), shape=shape)
