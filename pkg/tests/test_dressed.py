import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydsim.dressed import (
    bandwidth,
    delta_for_rydberg_fraction,
    dressed_angle,
    dressed_energy,
    dressed_quantities,
    exact_pair_shift,
    performance_index,
    scan_landscape,
    single_atom_shift,
    stark_shifts,
)
from rydsim.hamiltonian import build_h2_reduced
from rydsim.model import mhz, to_mhz

OMEGA, DELTA, V = mhz(8), mhz(-4.5), mhz(21)


def test_operating_point_rydberg_fraction():
    ang = dressed_angle(OMEGA, DELTA)
    assert ang.p_r == pytest.approx(0.25, abs=0.005)
    # closed form (1 - |D|/sqrt(W^2+D^2)) / 2
    assert ang.p_r == pytest.approx((1 - 4.5 / math.hypot(8, 4.5)) / 2, rel=1e-12)
    c1, cr = ang.coeffs
    assert c1**2 + cr**2 == pytest.approx(1.0)
    assert c1 > 0 and cr > 0  # -sign(D) sin(theta/2) with D < 0


def test_angle_invariants():
    for om, de in [(OMEGA, DELTA), (OMEGA, -DELTA), (1.0, 50.0), (3.0, 0.0)]:
        ang = dressed_angle(om, de)
        rabi = math.hypot(om, de)
        assert 0 < ang.theta < math.pi
        assert math.sin(ang.theta) == pytest.approx(om / rabi)
        sgn = 1.0 if de >= 0 else -1.0
        assert math.cos(ang.theta) == pytest.approx(-sgn * de / rabi, abs=1e-15)
        assert ang.p_r == pytest.approx(math.cos(ang.theta / 2) ** 2)


def test_weak_dressing_limit():
    p = [dressed_angle(OMEGA, -mhz(x)).p_r for x in (10, 100, 1000, 1e5)]
    assert all(a > b for a, b in zip(p, p[1:]))
    assert p[-1] < 1e-8


@given(st.floats(0.01, 500), st.floats(0.01, 500))
def test_rydberg_fraction_sign_symmetric(om, de):
    assert dressed_angle(om, de).p_r == pytest.approx(dressed_angle(om, -de).p_r, rel=1e-12)


def test_angle_domain_error():
    with pytest.raises(ValueError):
        dressed_angle(0.0, 0.0)


def test_u1_vanishes_without_drive():
    assert stark_shifts(0.0, DELTA, V).u1 == 0.0


def test_blockade_limit_agreement():
    s = stark_shifts(OMEGA, DELTA, 1e4 * OMEGA)
    assert abs(s.u2_exact - s.u2_blockade) / abs(s.u2_blockade) < 1e-3


def test_blockade_convergence_is_first_order_in_one_over_v():
    vs = OMEGA * np.array([1e3, 2e3, 4e3, 8e3])
    err = np.array([abs(stark_shifts(OMEGA, DELTA, v).u2_exact - stark_shifts(OMEGA, DELTA, v).u2_blockade) for v in vs])
    slope = np.polyfit(np.log(vs), np.log(err), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.02)


def test_u2_exact_is_smallest_magnitude_eigenvalue():
    eig = np.linalg.eigvalsh(build_h2_reduced(OMEGA, DELTA, V))
    s = stark_shifts(OMEGA, DELTA, V)
    assert abs(s.u2_exact) == pytest.approx(np.abs(eig).min(), rel=1e-14)
    assert np.min(np.abs(np.abs(eig) - abs(s.u2_exact))) < 1e-12


def test_j_identity_and_signs():
    s = stark_shifts(OMEGA, DELTA, V)
    assert s.j == pytest.approx(abs(2 * s.u1 - s.u2_exact), rel=1e-15)
    assert to_mhz(s.j) > 0
    assert s.u1 >= 0 and s.u2_exact >= 0
    assert s.u1 == pytest.approx((DELTA + math.hypot(OMEGA, DELTA)) / 2)


def test_vectorized_matches_scalar():
    vs = np.linspace(mhz(1), mhz(60), 37)
    vec = exact_pair_shift(OMEGA, DELTA, vs)
    assert np.allclose(vec, [stark_shifts(OMEGA, DELTA, v).u2_exact for v in vs], rtol=0, atol=1e-12)
    assert np.allclose(single_atom_shift(OMEGA, np.array([DELTA, -DELTA])), [stark_shifts(OMEGA, d, V).u1 for d in (DELTA, -DELTA)])


def test_u2_continuous_in_v():
    vs = np.linspace(mhz(0.5), mhz(200), 4001)
    u2 = exact_pair_shift(OMEGA, DELTA, vs)
    assert np.all(np.isfinite(u2))
    assert np.max(np.abs(np.diff(u2))) < 0.05 * OMEGA


def test_landscape_ridge_follows_anti_blockade():
    om = mhz(1)
    deltas = np.linspace(mhz(-30), mhz(-5), 501)  # |D| >= 5 W: weak drive
    vs = mhz(np.array([12.0, 20.0, 30.0, 40.0]))
    land = scan_landscape(deltas, vs, om)
    step = deltas[1] - deltas[0]
    assert np.allclose(land.ridge(), -vs / 2, atol=1.5 * step)


def test_landscape_grid_matches_pointwise():
    deltas = np.linspace(mhz(-10), mhz(-1), 19)
    vs = np.linspace(mhz(5), mhz(40), 36)
    land = scan_landscape(deltas, vs, OMEGA)
    assert np.all(np.isfinite(land.j))
    i, k = int(np.argmin(abs(deltas - DELTA))), int(np.argmin(abs(vs - V)))
    assert deltas[i] == pytest.approx(DELTA) and vs[k] == pytest.approx(V)
    assert land.j[i, k] == pytest.approx(stark_shifts(OMEGA, DELTA, V).j, rel=1e-13)
    assert land.p_r[i] == pytest.approx(dressed_angle(OMEGA, DELTA).p_r)
    assert land.p_r_contour(0.25) == pytest.approx(delta_for_rydberg_fraction(OMEGA, 0.25), abs=deltas[1] - deltas[0])
    assert len(list(land.rows())) == deltas.size * vs.size


def test_landscape_rejects_bad_grids():
    with pytest.raises(ValueError):
        scan_landscape([], [1.0], OMEGA)
    with pytest.raises(ValueError):
        scan_landscape([2.0, 1.0], [1.0], OMEGA)


def test_bandwidth_saturates_in_blockade_regime():
    v0 = 1e4 * OMEGA
    window = (0.5 * v0, 2 * v0)
    assert bandwidth(OMEGA, DELTA, v0, 0.1, window) == pytest.approx(window[1] - window[0])


def test_bandwidth_shrinks_to_zero_at_a_peak():
    vs = np.linspace(mhz(1), mhz(60), 20001)
    v0 = vs[np.argmax(dressed_energy(OMEGA, DELTA, vs))]
    widths = [bandwidth(OMEGA, DELTA, v0, e) for e in (0.1, 1e-2, 1e-4, 1e-6)]
    assert all(a > b for a, b in zip(widths, widths[1:]))
    assert widths[-1] < 1e-3 * v0


def test_bandwidth_default_point_and_errors():
    bw = bandwidth(OMEGA, DELTA, V)
    assert 0 < bw < math.inf
    assert bandwidth(0.0, DELTA, V) == 0.0
    with pytest.raises(ValueError):
        bandwidth(OMEGA, DELTA, V, 1.5)


def test_performance_index_scale_invariant():
    grid = np.linspace(0.02, 0.48, 24)
    a = performance_index(grid, OMEGA, V, gamma_ref=1.0)
    b = performance_index(grid, OMEGA, V, gamma_ref=37.0)
    assert np.allclose(a.performance, b.performance, rtol=1e-13)
    assert a.performance.max() == pytest.approx(1.0)
    assert np.allclose(dressed_angle(OMEGA, a.delta[5]).p_r, grid[5])


@pytest.mark.xfail(strict=True, reason="J(P_r) has an anti-blockade resonance, so the curve has two maxima")
def test_performance_index_single_peaked():
    per = performance_index(np.linspace(0.01, 0.49, 49), OMEGA, V).performance
    peak = int(np.argmax(per))
    assert np.all(np.diff(per[: peak + 1]) >= 0) and np.all(np.diff(per[peak:]) <= 0)


@pytest.mark.xfail(strict=True, raises=ValueError, reason="the dressed branch has P_r <= 1/2")
def test_performance_index_vanishes_towards_full_rydberg_fraction():
    per = performance_index(np.array([0.25, 0.9, 0.99]), OMEGA, V).performance
    assert per[-1] < per[1] < per[0]


def test_dressed_quantities_bundle():
    q = dressed_quantities(OMEGA, DELTA, V)
    s = stark_shifts(OMEGA, DELTA, V)
    assert (q.u1, q.u2_exact, q.u2_blockade, q.j) == (s.u1, s.u2_exact, s.u2_blockade, s.j)
    assert q.j >= 0 and 0 <= q.p_r <= 1
