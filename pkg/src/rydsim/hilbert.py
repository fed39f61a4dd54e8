"""Basis enumeration and index maps.

Three spaces are used:

* ``FULL3``: every atom in {0, 1, r}; dimension 3^N.
* ``TWO_LEVEL``: every atom in {0, d}; dimension 2^N.
* ``RESTRICTED``: two-level words with no two neighbouring ``d``.

Words are strings with atom 1 first. States are stored as integer codes
(base 3 or base 2, atom 1 most significant) so that numeric order equals
lexicographic word order (0 < 1 < r, 0 < d).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

LEVEL_0, LEVEL_1, LEVEL_R = 0, 1, 2


class SpaceKind(enum.Enum):
    FULL3 = "full3"
    TWO_LEVEL = "two_level"
    RESTRICTED = "restricted"


_SYMBOLS = {SpaceKind.FULL3: "01r", SpaceKind.TWO_LEVEL: "0d", SpaceKind.RESTRICTED: "0d"}


@dataclass(frozen=True, eq=False)
class BasisSet:
    n_atoms: int
    kind: SpaceKind
    codes: np.ndarray

    @property
    def base(self) -> int:
        return 3 if self.kind is SpaceKind.FULL3 else 2

    @property
    def symbols(self) -> str:
        return _SYMBOLS[self.kind]

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def dim(self) -> int:
        return len(self.codes)

    def word(self, i: int) -> str:
        return code_to_word(int(self.codes[i]), self.n_atoms, self.base, self.symbols)

    @property
    def states(self) -> list[str]:
        return [self.word(i) for i in range(len(self))]

    def index_of(self, word: str) -> int:
        """Position of `word` in the basis; KeyError if absent."""
        code = word_to_code(word, self.base, self.symbols)
        if len(word) != self.n_atoms:
            raise KeyError(word)
        i = int(np.searchsorted(self.codes, code))
        if i >= len(self.codes) or self.codes[i] != code:
            raise KeyError(word)
        return i

    def __contains__(self, word: str) -> bool:
        try:
            self.index_of(word)
        except (KeyError, ValueError):
            return False
        return True

    @cached_property
    def occupations(self) -> np.ndarray:
        """(n_atoms, dim) array of per-atom level indices (0/1/2 or 0/1 for d)."""
        return code_digits(self.codes, self.n_atoms, self.base)


def code_digits(codes: np.ndarray, n_atoms: int, base: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty((n_atoms, len(codes)), dtype=np.int8)
    rest = codes.copy()
    for k in range(n_atoms - 1, -1, -1):
        out[k] = rest % base
        rest //= base
    return out


def word_to_code(word: str, base: int, symbols: str) -> int:
    code = 0
    for ch in word:
        pos = symbols.find(ch)
        if pos < 0:
            raise ValueError(f"symbol {ch!r} not in {symbols!r}")
        code = code * base + pos
    return code


def code_to_word(code: int, n_atoms: int, base: int, symbols: str) -> str:
    chars = []
    for _ in range(n_atoms):
        code, r = divmod(code, base)
        chars.append(symbols[r])
    return "".join(reversed(chars))


def restricted_dimension(n_atoms: int) -> int:
    """Number of N-atom {0,d} words with no neighbouring d: sum_m C(N+1-m, m).

    m counts the d symbols; the sum runs to floor((N+1)/2), the largest m with
    a nonzero term (stopping at floor(N/2) would drop the odd-N term).
    """
    if n_atoms < 0:
        raise ValueError("n_atoms must be >= 0")
    return sum(comb(n_atoms + 1 - m, m) for m in range((n_atoms + 1) // 2 + 1))


def restricted_codes(n_atoms: int) -> np.ndarray:
    """Sorted codes of blockade-allowed words.

    Words starting with 0 are the (N-1)-atom words; words starting with d must
    continue with 0 and are followed by an (N-2)-atom word.
    """
    prev, cur = np.array([0], dtype=np.int64), np.array([0, 1], dtype=np.int64)
    if n_atoms == 0:
        return prev
    for n in range(2, n_atoms + 1):
        prev, cur = cur, np.concatenate([cur, (1 << (n - 1)) + prev])
    return cur


def enumerate_restricted(n_atoms: int) -> BasisSet:
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    return BasisSet(n_atoms, SpaceKind.RESTRICTED, restricted_codes(n_atoms))


def enumerate_two_level(n_atoms: int) -> BasisSet:
    return BasisSet(n_atoms, SpaceKind.TWO_LEVEL, np.arange(2**n_atoms, dtype=np.int64))


def enumerate_full(n_atoms: int) -> BasisSet:
    return BasisSet(n_atoms, SpaceKind.FULL3, np.arange(3**n_atoms, dtype=np.int64))


def _check_coeffs(dressed_coeffs) -> tuple[float, float]:
    c = np.asarray(dressed_coeffs, dtype=float).ravel()
    if c.size == 3:
        if abs(c[0]) > 1e-12:
            raise ValueError("dressed state must not contain |0>")
        c = c[1:]
    if c.size != 2:
        raise ValueError("dressed_coeffs must be (c1, cr) or a 3-vector over (0, 1, r)")
    norm = float(np.hypot(c[0], c[1]))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"dressed coefficients not normalized (norm {norm!r})")
    return float(c[0]), float(c[1])


def embed_restricted_in_full(word: str, dressed_coeffs) -> np.ndarray:
    """Full-space vector of a {0,d} word, each d replaced by c1|1> + cr|r>."""
    c1, cr = _check_coeffs(dressed_coeffs)
    zero = np.array([1.0, 0.0, 0.0])
    dressed = np.array([0.0, c1, cr])
    vec = np.ones(1)
    for ch in word:
        if ch == "0":
            vec = np.kron(vec, zero)
        elif ch == "d":
            vec = np.kron(vec, dressed)
        else:
            raise ValueError(f"symbol {ch!r} is not in {{0, d}}")
    return vec


def embedding_matrix(basis: BasisSet, dressed_coeffs) -> sp.csr_matrix:
    """Sparse isometry (3^N x dim) whose columns are the embedded basis words."""
    if basis.kind is SpaceKind.FULL3:
        raise ValueError("basis must be a {0,d} space")
    c1, cr = _check_coeffs(dressed_coeffs)
    n = basis.n_atoms
    cols = np.arange(len(basis))
    rows = np.zeros(len(basis), dtype=np.int64)
    amps = np.ones(len(basis))
    for k in range(n):
        place = 3 ** (n - 1 - k)
        is_d = ((basis.codes[cols] >> (n - 1 - k)) & 1).astype(bool)
        keep = ~is_d
        cols = np.concatenate([cols[keep], cols[is_d], cols[is_d]])
        rows = np.concatenate([rows[keep], rows[is_d] + LEVEL_1 * place, rows[is_d] + LEVEL_R * place])
        amps = np.concatenate([amps[keep], amps[is_d] * c1, amps[is_d] * cr])
    mat = sp.csr_matrix((amps, (rows, cols)), shape=(3**n, len(basis)))
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def projection_ratio(state, basis: BasisSet, dressed_coeffs) -> float:
    """Population of a full-space state inside the embedded restricted subspace.

    `state` is either a normalized vector or a density matrix (unit trace,
    Hermitian). The returned leakage is ``1 - projection_ratio``.
    """
    emb = embedding_matrix(basis, dressed_coeffs)
    state = np.asarray(state)
    if state.ndim == 1:
        if state.shape[0] != emb.shape[0]:
            raise ValueError("state dimension does not match the full space")
        amp = emb.conj().T @ state
        norm = float(np.vdot(state, state).real)
        return float(np.clip(np.vdot(amp, amp).real / norm, 0.0, 1.0))
    if state.shape != (emb.shape[0], emb.shape[0]):
        raise ValueError("density matrix dimension does not match the full space")
    scale = max(1.0, float(np.abs(state).max()))
    if np.abs(state - state.conj().T).max() > 1e-9 * scale:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(state)
    if abs(tr - 1.0) > 1e-9:
        raise ValueError(f"density matrix trace {tr!r} != 1")
    proj = emb.conj().T @ (emb.conj().T @ state.conj().T).conj().T
    return float(np.clip(np.trace(proj).real, 0.0, 1.0))


def dimension_table(n_max: int, n_min: int = 1) -> list[tuple[int, int, int, int]]:
    """Rows (N, 3^N, 2^N, restricted dimension)."""
    return [(n, 3**n, 2**n, restricted_dimension(n)) for n in range(n_min, n_max + 1)]
