import io
from functools import reduce

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from rydsim.dressed import dressed_angle, single_atom_shift
from rydsim.hamiltonian import (
    HamiltonianTerm,
    MicrowaveDrive,
    TermLabel,
    build_effective_restricted,
    build_h2_reduced,
    build_h_doppler,
    build_h_mw,
    build_h_rdb,
    dump_coo,
    hermiticity_defect,
    load_coo,
    nominal_v_matrix,
)
from rydsim.hilbert import enumerate_full, enumerate_restricted
from rydsim.model import PhysicalParams, mhz

OMEGA, DELTA, V = mhz(8), mhz(-4.5), mhz(21)

# single-atom operators in the (0, 1, r) basis
P0 = np.diag([1.0, 0, 0])
PR = np.diag([0, 0, 1.0])
X1R = np.array([[0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])


def site(op, k, n):
    mats = [np.eye(3)] * n
    mats[k] = op
    return reduce(np.kron, mats)


def rdb_oracle(n, omega, delta, v):
    h = sum(site(omega / 2 * X1R + delta * PR, k, n) for k in range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if v[i, j]:
                h = h + v[i, j] * site(PR, i, n) @ site(PR, j, n)
    return h


def params(n, **kw):
    p = PhysicalParams(n_atoms=n, omega=kw.get("omega", OMEGA), delta=kw.get("delta", DELTA))
    return p.with_v(kw.get("v", V))


def test_two_atoms_without_interaction_are_independent():
    h = build_h_rdb(PhysicalParams(2, OMEGA, DELTA), np.zeros((2, 2))).toarray()
    h1 = OMEGA / 2 * X1R + DELTA * PR
    assert np.allclose(h, np.kron(h1, np.eye(3)) + np.kron(np.eye(3), h1))


def test_two_atoms_no_drive_diagonal():
    h = build_h_rdb(params(2, omega=0.0)).toarray()
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    rr = enumerate_full(2).index_of("rr")
    assert h[rr, rr] == pytest.approx(2 * DELTA + V)


@pytest.mark.parametrize("n", [2, 4])
def test_rdb_matches_tensor_oracle(n):
    p = params(n)
    v = nominal_v_matrix(p)
    h = build_h_rdb(p).toarray()
    oracle = rdb_oracle(n, OMEGA, DELTA, v)
    assert np.allclose(h, oracle, atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(h), np.linalg.eigvalsh(oracle), atol=1e-9)


def test_h2_reduced_examples():
    assert np.allclose(build_h2_reduced(0.0, DELTA, V), np.diag([0, DELTA, 2 * DELTA + V]))
    # symmetric sector of the 4x4 block {11, 1r, r1, rr} of the full two-atom H_RDB
    h = rdb_oracle(2, OMEGA, DELTA, np.array([[0, V], [V, 0]]))
    full = enumerate_full(2)
    idx = [full.index_of(w) for w in ("11", "1r", "r1", "rr")]
    block = h[np.ix_(idx, idx)]
    s = np.array([[1, 0, 0], [0, 1 / np.sqrt(2), 0], [0, 1 / np.sqrt(2), 0], [0, 0, 1]])
    sym = s.T @ block @ s
    assert np.allclose(sym, build_h2_reduced(OMEGA, DELTA, V), atol=1e-12)
    anti = np.array([0, 1, -1, 0]) / np.sqrt(2)
    assert anti @ block @ anti == pytest.approx(DELTA)


def test_blockade_limit_in_full_two_atom_model():
    v_big = 1e4 * OMEGA
    h = build_h_rdb(params(2, v=v_big)).toarray()
    eig = np.linalg.eigvalsh(h)
    closest = eig[np.argmin(np.abs(eig))]
    blockade = (DELTA - np.sign(DELTA) * np.sqrt(2 * OMEGA**2 + DELTA**2)) / 2
    # the two-atom |11>-branch carries U2; |00>, |01>, |10>... sit at 0 and U1
    pair = np.linalg.eigvalsh(build_h2_reduced(OMEGA, DELTA, v_big))
    u2 = pair[np.argmin(np.abs(pair))]
    assert abs(u2 - blockade) / abs(blockade) < 1e-3
    assert np.any(np.isclose(eig, u2, atol=1e-9))
    assert abs(closest) < 1e-12  # |00> is an exact zero mode


def test_h_mw_cancels_for_zero_drive():
    p = params(2)
    u1 = float(single_atom_shift(OMEGA, DELTA))
    drive = MicrowaveDrive.from_detunings(np.zeros(3), u1, u1, 2)
    h = build_h_mw(p, drive, 1, u1)
    assert abs(h.matrix).max() == pytest.approx(0, abs=1e-12)


def test_h_mw_couples_in_dressed_ratio():
    p = params(2)
    drive = MicrowaveDrive(np.array([1.0]), np.zeros((1, 1)))
    h = build_h_mw(p, drive, 0, 0.0).toarray()
    full = enumerate_full(2)
    c1, cr = dressed_angle(OMEGA, DELTA).coeffs
    a1 = h[full.index_of("10"), full.index_of("00")]
    ar = h[full.index_of("r0"), full.index_of("00")]
    assert a1 / ar == pytest.approx(c1 / cr)
    assert abs(a1) ** 2 + abs(ar) ** 2 == pytest.approx(1.0)


def test_h_mw_ground_variant_only_touches_level_1():
    p = params(2)
    drive = MicrowaveDrive(np.array([1.0]), np.zeros((1, 1)))
    h = build_h_mw(p, drive, 0, 0.0, coupling="ground").toarray()
    full = enumerate_full(2)
    assert h[full.index_of("10"), full.index_of("00")] == 1.0
    assert h[full.index_of("r0"), full.index_of("00")] == 0.0


def test_h_mw_slice_out_of_range():
    drive = MicrowaveDrive(np.ones(3), np.zeros((1, 3)))
    with pytest.raises(IndexError):
        build_h_mw(params(2), drive, 3, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_builders_hermitian_for_random_drives(seed):
    rng = np.random.default_rng(seed)
    p = params(4, omega=rng.uniform(0.1, 60), delta=rng.uniform(-60, 60), v=rng.uniform(1, 200))
    drive = MicrowaveDrive(rng.normal(size=2), rng.normal(size=(2, 2)))
    terms = [
        build_h_rdb(p),
        build_h_mw(p, drive, 1, rng.normal()),
        build_h_doppler(rng.normal(size=4)),
        build_effective_restricted(drive, 0, enumerate_restricted(4)),
    ]
    for t in terms:
        assert hermiticity_defect(t.matrix) <= 1e-12


def test_doppler_term():
    assert build_h_doppler(np.zeros(3)).matrix.nnz == 0
    dop = np.array([0.0, 0.7, 0.0])
    h = build_h_doppler(dop).matrix.diagonal()
    full = enumerate_full(3)
    for i, w in enumerate(full.states):
        assert h[i] == (0.7 if w[1] == "r" else 0.0)
    dop = np.array([0.3, -1.1, 2.0, 0.25])
    assert build_h_doppler(dop).matrix.diagonal().sum() == pytest.approx(dop.sum() * 3**3)
    with pytest.raises(ValueError):
        build_h_doppler(np.zeros(2), enumerate_full(3))


def test_effective_restricted_examples():
    b2 = enumerate_restricted(2)
    drive = MicrowaveDrive(np.array([0.5]), np.array([[0.2]]))
    h = build_effective_restricted(drive, 0, b2).toarray()
    expected = np.array([[0.4, 0.5, 0.5], [0.5, 0.2, 0], [0.5, 0, 0.2]])
    assert np.allclose(h, expected)
    b4 = enumerate_restricted(4)
    f = np.array([[0.3], [-0.7]])
    h4 = build_effective_restricted(MicrowaveDrive(np.zeros(1), f), 0, b4).toarray()
    shifts = np.array([0.3, -0.7, -0.7, 0.3])  # -delta_mw per atom
    for i, w in enumerate(b4.states):
        assert h4[i, i] == pytest.approx(sum(s for s, c in zip(shifts, w) if c == "0"))
    assert np.count_nonzero(h4 - np.diag(np.diag(h4))) == 0


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_effective_restricted_matches_projected_two_level(n):
    rng = np.random.default_rng(n)
    drive = MicrowaveDrive(rng.normal(size=1), rng.normal(size=(n // 2, 1)))
    sx = np.array([[0, 1.0], [1.0, 0]])
    p0 = np.diag([1.0, 0])
    shifts = drive.atom_shifts(0)

    def site2(op, k):
        mats = [np.eye(2)] * n
        mats[k] = op
        return reduce(np.kron, mats)

    h2 = sum(drive.omega_mw[0] * site2(sx, k) + shifts[k] * site2(p0, k) for k in range(n))
    basis = enumerate_restricted(n)
    # code bit (n-1-k) set <=> atom k in d, i.e. two-level index digit 1
    sel = basis.codes
    oracle = h2[np.ix_(sel, sel)]
    assert np.allclose(build_effective_restricted(drive, 0, basis).toarray(), oracle, atol=1e-13)


def test_term_validation():
    b = enumerate_restricted(2)
    with pytest.raises(ValueError):
        HamiltonianTerm(sp.csr_matrix(np.array([[0, 1.0, 0], [0, 0, 0], [0, 0, 0]])), b, TermLabel.CONTROL)
    with pytest.raises(ValueError):
        HamiltonianTerm(sp.csr_matrix(np.eye(2)), b, TermLabel.CONTROL)
    p = params(4)
    v = nominal_v_matrix(p)
    v[0, 3] = v[3, 0] = 1.0
    with pytest.raises(ValueError):
        build_h_rdb(p, v)
    with pytest.raises(ValueError):
        build_h_rdb(p, np.triu(nominal_v_matrix(p)))


def test_coo_round_trip_is_deterministic():
    term = build_h_rdb(params(2))
    a, b = io.StringIO(), io.StringIO()
    dump_coo(term, a)
    dump_coo(build_h_rdb(params(2)), b)
    assert a.getvalue() == b.getvalue()
    assert a.getvalue().startswith("# rydsim coordinate list: label=rdb shape=9x9")
    back = load_coo(io.StringIO(a.getvalue()))
    assert abs(back - term.matrix).max() == 0
