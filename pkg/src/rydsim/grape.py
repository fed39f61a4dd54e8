"""GRAPE pulse optimization in the restricted subspace, adiabatic baseline
pulses, gap scans and pulse spectra.

Controls: ``omega_mw`` multiplies the restricted flip operator X and
``f[h-1]`` multiplies H_h = |0><0|_h + |0><0|_{N+1-h}. The update is

    f_h(j) <- f_h(j) + epsilon_h * dPhi/df_h(j),

where dPhi/df_h(j) = dt * (-i) Tr{[H_h, rho(t)] lambda(t)} averaged over the
slice (``gradient="exact"``) or sampled at the slice start
(``gradient="first_order"``).
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .hamiltonian import MicrowaveDrive, restricted_flip_operator, restricted_zero_occupation
from .hilbert import BasisSet, SpaceKind, enumerate_restricted
from .model import mhz
from .propagator import TimeGrid

log = logging.getLogger(__name__)

DEFAULT_OMEGA_MW = mhz(0.14)
BASELINE_OMEGA_MW = mhz(0.2)
BASELINE_OFFSET = mhz(0.5)
# preparation times (us) used to reproduce the reference optimizations
TABLE_T_FINAL = {4: 2.1, 6: 3.1, 8: 4.2, 10: 5.3, 12: 5.9, 14: 7.6, 16: 8.3}
REALITY_TOL = 1e-10


class GrapeError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


def default_t_final(n_atoms: int, reference: bool = False) -> float:
    """Rule of thumb t_f = N/2 us, or the reference table value when asked."""
    if reference and n_atoms in TABLE_T_FINAL:
        return TABLE_T_FINAL[n_atoms]
    return n_atoms / 2


def _check_even(n_atoms: int) -> None:
    if n_atoms < 2 or n_atoms % 2:
        raise ValueError("n_atoms must be even and >= 2")


@dataclass(frozen=True)
class GrapeConfig:
    """Optimizer settings.

    ``epsilon_h=None`` selects ``omega_mw_cap / (2 dt)``, i.e. a per-step
    change of (omega_mw_cap / 2) * (-i Tr{...}) in every slice.
    """

    epsilon_h: float | None = None
    n_slices: int = 200
    t_final: float | None = None
    fidelity_target: float = 0.99
    max_iterations: int = 2000
    omega_mw_cap: float = DEFAULT_OMEGA_MW
    optimize_amplitude: bool = False
    safeguard: bool = False
    gradient: str = "exact"

    def __post_init__(self):
        if self.epsilon_h is not None and not self.epsilon_h > 0:
            raise ValueError("epsilon_h must be positive")
        if not 0 < self.fidelity_target <= 1:
            raise ValueError("fidelity_target must lie in (0, 1]")
        if not self.omega_mw_cap > 0:
            raise ValueError("omega_mw_cap must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.gradient not in ("exact", "first_order"):
            raise ValueError("gradient must be 'exact' or 'first_order'")
        if self.t_final is not None and not self.t_final > 0:
            raise ValueError("t_final must be positive")

    def resolved_t_final(self, n_atoms: int) -> float:
        return self.t_final if self.t_final is not None else default_t_final(n_atoms)

    def step(self, dt: float) -> float:
        return self.epsilon_h if self.epsilon_h is not None else self.omega_mw_cap / (2 * dt)


@dataclass(frozen=True)
class PulseSchedule:
    grid: TimeGrid
    omega_mw: np.ndarray  # (n_slices,)
    f: np.ndarray  # (n_atoms // 2, n_slices)
    cap: float | None = None

    def __post_init__(self):
        omega = np.array(self.omega_mw, dtype=float).reshape(-1)
        f = np.array(self.f, dtype=float, ndmin=2)
        m = self.grid.n_slices
        if omega.shape[0] != m or f.shape[1] != m:
            raise ValueError(f"pulse arrays must have {m} slices")
        if self.cap is not None and np.any(np.abs(omega) > self.cap * (1 + 1e-12)):
            raise ValueError("|omega_mw| exceeds the cap")
        omega.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "omega_mw", omega)
        object.__setattr__(self, "f", f)

    @property
    def n_atoms(self) -> int:
        return 2 * self.f.shape[0]

    @property
    def n_slices(self) -> int:
        return self.grid.n_slices

    def amplitudes(self) -> np.ndarray:
        """(1 + N/2, n_slices) array [omega_mw; f_1; ...]."""
        return np.vstack([self.omega_mw, self.f])

    def with_amplitudes(self, amps: np.ndarray) -> "PulseSchedule":
        return replace(self, omega_mw=amps[0], f=amps[1:])

    def to_drive(self) -> MicrowaveDrive:
        return MicrowaveDrive(self.omega_mw, self.f, self.cap)


@dataclass
class OptimizationTrace:
    fidelities: list[float] = field(default_factory=list)
    schedule: PulseSchedule | None = None
    converged: bool = False
    epsilons: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        """Number of pulse updates performed."""
        return max(0, len(self.fidelities) - 1)

    @property
    def final_fidelity(self) -> float:
        return self.fidelities[-1]


def ramp_value(t, t_final: float, omega_mw: float = DEFAULT_OMEGA_MW):
    """Linear initial guess 10 W t / t_f - 5 W for the non-edge controls."""
    return 10 * omega_mw * np.asarray(t, dtype=float) / t_final - 5 * omega_mw


def initial_pulses(n_atoms: int, config: GrapeConfig | None = None) -> PulseSchedule:
    """Linear ramp guess sampled at slice midpoints; the edge control is offset by -1.25 W."""
    _check_even(n_atoms)
    config = config or GrapeConfig()
    grid = TimeGrid(config.resolved_t_final(n_atoms), config.n_slices)
    om = config.omega_mw_cap
    ramp = ramp_value(grid.midpoints, grid.t_final, om)
    f = np.tile(ramp, (n_atoms // 2, 1))
    f[0] -= 1.25 * om
    return PulseSchedule(grid, np.full(grid.n_slices, om), f, config.omega_mw_cap)


def _restricted(n_atoms: int, basis: BasisSet | None) -> BasisSet:
    if basis is None:
        return enumerate_restricted(n_atoms)
    if basis.kind is not SpaceKind.RESTRICTED or basis.n_atoms != n_atoms:
        raise ValueError("expected the restricted basis for this atom count")
    return basis


def control_hamiltonians(n_atoms: int, basis: BasisSet | None = None) -> list[np.ndarray]:
    """Dense diagonal H_h (h = 1..N/2) counting |0> on the mirror pair (h, N+1-h)."""
    _check_even(n_atoms)
    basis = _restricted(n_atoms, basis)
    occ = restricted_zero_occupation(basis)
    return [np.diag(occ[h] + occ[n_atoms - 1 - h]) for h in range(n_atoms // 2)]


def ghz_words(n_atoms: int) -> tuple[str, str]:
    a = "".join("d" if k % 2 == 0 else "0" for k in range(n_atoms))
    return a, a.translate(str.maketrans("d0", "0d"))


def restricted_state(basis: BasisSet, words: Sequence[str]) -> np.ndarray:
    """Equal-weight superposition of the given words; ValueError if a word is not in S3."""
    vec = np.zeros(len(basis), dtype=complex)
    for w in words:
        try:
            vec[basis.index_of(w)] += 1.0
        except KeyError:
            raise ValueError(f"word {w!r} is not in the restricted basis") from None
    return vec / np.linalg.norm(vec)


def _problem(schedule: PulseSchedule, target, initial, basis):
    n = schedule.n_atoms
    basis = _restricted(n, basis)
    if target is None:
        target = ghz_words(n)
    if initial is None:
        initial = ("0" * n,)
    psi_f = restricted_state(basis, target) if isinstance(target[0], str) else np.asarray(target, dtype=complex)
    psi_0 = restricted_state(basis, initial) if isinstance(initial[0], str) else np.asarray(initial, dtype=complex)
    controls = np.stack([restricted_flip_operator(basis).toarray()] + control_hamiltonians(n, basis))
    return basis, controls, psi_0, psi_f


def grape_fidelity(schedule: PulseSchedule, target=None, initial=None, basis: BasisSet | None = None) -> float:
    """|<psi_f| U(t_f) |psi_0>|^2 in the restricted space (GHZ from |0...0> by default)."""
    _, controls, psi0, psif = _problem(schedule, target, initial, basis)
    amp, _ = kernels.grape_sweep(controls, schedule.amplitudes(), schedule.grid.dt, psi0, psif, False)
    return abs(amp) ** 2


def _first_order_gradient(controls, amps, dt, psi0, psif):
    """dt * (-i) Tr{[H_c, rho(t_j)] lambda(t_j)} at slice starts, with the reality check."""
    h = np.einsum("cj,ckl->jkl", amps, controls)
    w, v = np.linalg.eigh(h)
    m = amps.shape[1]
    us = [(v[j] * np.exp(-1j * w[j] * dt)) @ v[j].T for j in range(m)]
    fw = [psi0]
    for j in range(m):
        fw.append(us[j] @ fw[-1])
    bw = [None] * (m + 1)
    bw[m] = psif
    for j in range(m - 1, -1, -1):
        bw[j] = us[j].conj().T @ bw[j + 1]
    overlap = complex(np.vdot(psif, fw[m]))
    grad = np.empty_like(amps)
    for j in range(m):
        rho = np.outer(fw[j], fw[j].conj())
        lam = np.outer(bw[j], bw[j].conj())
        for c in range(controls.shape[0]):
            comm = controls[c] @ rho - rho @ controls[c]
            val = -1j * np.sum(comm * lam.T)
            if abs(val.imag) > REALITY_TOL * max(abs(val), 1e-300) and abs(val.imag) > 1e-14:
                raise GrapeError(f"trace expression not real at slice {j} (residue {val.imag:.3e})")
            grad[c, j] = dt * val.real
    return overlap, grad


def _sweep(config, controls, amps, dt, psi0, psif):
    if config.gradient == "exact":
        return kernels.grape_sweep(controls, amps, dt, psi0, psif, True)
    return _first_order_gradient(controls, amps, dt, psi0, psif)


def grape_optimize(
    initial: PulseSchedule,
    target=None,
    config: GrapeConfig | None = None,
    initial_state=None,
    basis: BasisSet | None = None,
    callback=None,
) -> OptimizationTrace:
    """Fixed-step gradient ascent on the restricted-space fidelity.

    `target` is a pair of words (default: the GHZ pair) or a state vector.
    The trace records fidelity before every update, so ``fidelities[0]`` is
    the fidelity of `initial`.
    """
    config = config or GrapeConfig()
    basis, controls, psi0, psif = _problem(initial, target, initial_state, basis)
    dt = initial.grid.dt
    eps = config.step(dt)
    cap = config.omega_mw_cap
    amps = initial.amplitudes().copy()
    trace = OptimizationTrace()
    drops = 0
    for it in range(config.max_iterations + 1):
        overlap, grad = _sweep(config, controls, amps, dt, psi0, psif)
        fid = abs(overlap) ** 2
        if not np.all(np.isfinite(grad)) or not math.isfinite(fid):
            raise GrapeError(f"non-finite gradient at iteration {it}", iteration=it)
        if trace.fidelities and fid < trace.fidelities[-1]:
            drops += 1
        else:
            drops = 0
        trace.fidelities.append(fid)
        trace.epsilons.append(eps)
        if callback is not None:
            callback(it, fid)
        if fid >= config.fidelity_target:
            trace.converged = True
            break
        if it == config.max_iterations:
            break
        if config.safeguard and drops >= 2:
            eps *= 0.5
            drops = 0
        amps[1:] += eps * grad[1:]
        if config.optimize_amplitude:
            amps[0] = np.clip(amps[0] + eps * grad[0], -cap, cap)
    trace.schedule = initial.with_amplitudes(amps)
    log.info("grape: %d updates, fidelity %.6f, converged=%s", trace.iterations, trace.final_fidelity, trace.converged)
    return trace


def adiabatic_baseline(
    n_atoms: int,
    delta_offset: float = BASELINE_OFFSET,
    ramp_range: tuple[float, float] | None = None,
    t_final: float = 20.0,
    omega_mw: float = BASELINE_OMEGA_MW,
    n_slices: int = 200,
) -> PulseSchedule:
    """Linear sweep of -delta_mw from ramp_range[0] to ramp_range[1]; edges shifted by -delta_offset.

    The default range is +-10 omega_mw.
    """
    _check_even(n_atoms)
    lo, hi = ramp_range if ramp_range is not None else (-10 * omega_mw, 10 * omega_mw)
    grid = TimeGrid(t_final, n_slices)
    ramp = lo + (hi - lo) * grid.midpoints / t_final
    f = np.tile(ramp, (n_atoms // 2, 1))
    f[0] -= delta_offset
    return PulseSchedule(grid, np.full(n_slices, omega_mw), f)


def mirror_symmetric_isometry(basis: BasisSet) -> np.ndarray:
    """Columns span the reflection-even subspace (word -> reversed word) of S3."""
    words = basis.states
    cols = []
    seen = set()
    for i, w in enumerate(words):
        if i in seen:
            continue
        k = basis.index_of(w[::-1])
        seen.update((i, k))
        col = np.zeros(len(basis))
        col[[i, k]] = 1.0
        cols.append(col / np.linalg.norm(col))
    return np.array(cols).T


@dataclass(frozen=True)
class GapScan:
    """Spectra along the sweep.

    ``energies`` covers all of S3; ``symmetric`` only the reflection-even
    sector, which contains |0...0> and is the only sector reachable by a
    mirror-symmetric drive.
    """

    minus_delta: np.ndarray  # (G,) values of -delta_mw on the non-edge atoms
    energies: np.ndarray  # (G, D) sorted eigenvalues
    symmetric: np.ndarray  # (G, D_sym)
    omega_mw: float
    delta_offset: float

    def _levels(self, sector: str) -> np.ndarray:
        if sector not in ("full", "symmetric"):
            raise ValueError("sector must be 'full' or 'symmetric'")
        return self.energies if sector == "full" else self.symmetric

    def gaps(self, sector: str = "symmetric") -> np.ndarray:
        e = self._levels(sector)
        return e[:, 1] - e[:, 0]

    def min_gap(self, sector: str = "symmetric") -> tuple[float, float]:
        """(size, location in -delta) of the smallest ground-state gap."""
        g = self.gaps(sector)
        k = int(np.argmin(g))
        return float(g[k]), float(self.minus_delta[k])

    def ground_multiplicity(self, index: int, tol: float | None = None, sector: str = "full") -> int:
        """Number of levels within `tol` (default omega_mw / 2) of the ground energy."""
        tol = 0.5 * self.omega_mw if tol is None else tol
        e = self._levels(sector)[index]
        return int(np.count_nonzero(e - e[0] <= tol))


def gap_scan(n_atoms: int, delta_grid, omega_mw: float = BASELINE_OMEGA_MW, delta_offset: float = BASELINE_OFFSET) -> GapScan:
    """Spectrum of the effective restricted Hamiltonian along the sweep of -delta_mw."""
    _check_even(n_atoms)
    basis = enumerate_restricted(n_atoms)
    grid = np.asarray(delta_grid, dtype=float)
    x = omega_mw * restricted_flip_operator(basis).toarray()
    occ = restricted_zero_occupation(basis)
    edge = occ[0] + occ[-1]
    total = occ.sum(axis=0)
    iso = mirror_symmetric_isometry(basis)
    full, sym = [], []
    for md in grid:
        h = x + np.diag(md * total - delta_offset * edge)
        full.append(np.linalg.eigvalsh(h))
        sym.append(np.linalg.eigvalsh(iso.T @ h @ iso))
    return GapScan(grid, np.array(full), np.array(sym), float(omega_mw), float(delta_offset))


@dataclass(frozen=True)
class PulseSpectrum:
    freq_mhz: np.ndarray  # two-sided, ascending
    magnitude: np.ndarray  # (n_controls, n_freq)
    widths_mhz: np.ndarray  # (n_controls,)
    labels: tuple[str, ...]


def _width_at_fraction(freq: np.ndarray, mag: np.ndarray, fraction: float) -> float:
    peak = int(np.argmax(mag))
    level = fraction * mag[peak]
    lo = peak
    while lo > 0 and mag[lo - 1] >= level:
        lo -= 1
    hi = peak
    while hi < len(mag) - 1 and mag[hi + 1] >= level:
        hi += 1
    df = freq[1] - freq[0]
    return float(freq[hi] - freq[lo] + df)


def pulse_spectrum(schedule: PulseSchedule, pad_factor: int = 8, fraction: float = 0.2) -> PulseSpectrum:
    """|DFT| of each control (in MHz, scaled by dt) and its full width at `fraction` of the peak.

    The width is that of the contiguous band around the highest peak.
    """
    if schedule.n_slices < 2:
        raise ValueError("need at least two slices")
    dt = schedule.grid.dt
    sig = schedule.amplitudes() / (2 * np.pi)
    n_fft = pad_factor * schedule.n_slices
    spec = np.abs(np.fft.fftshift(np.fft.fft(sig, n=n_fft, axis=1), axes=1)) * dt
    freq = np.fft.fftshift(np.fft.fftfreq(n_fft, dt))
    widths = np.array([_width_at_fraction(freq, row, fraction) for row in spec])
    labels = ("omega_mw",) + tuple(f"f_{h + 1}" for h in range(schedule.f.shape[0]))
    return PulseSpectrum(freq, spec, widths, labels)


def write_pulses(schedule: PulseSchedule, fh) -> None:
    """CSV with metadata lines; values divided by 2 pi (MHz), times at slice midpoints."""
    n = schedule.n_atoms
    fh.write(f"# n_atoms {n}\n# t_final_us {schedule.grid.t_final!r}\n# slices {schedule.n_slices}\n")
    cols = ["slice_index", "time_us", "omega_mw_mhz"] + [f"f_{h + 1}_mhz" for h in range(n // 2)]
    fh.write(",".join(cols) + "\n")
    mid = schedule.grid.midpoints
    amps = schedule.amplitudes() / (2 * np.pi)
    for j in range(schedule.n_slices):
        fh.write(",".join([str(j), repr(float(mid[j]))] + [repr(float(x)) for x in amps[:, j]]) + "\n")


def read_pulses(fh, cap: float | None = None) -> PulseSchedule:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    meta = {}
    header = None
    rows = []
    for lineno, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2:
                meta[parts[0]] = parts[1]
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise ValueError(f"pulse file line {lineno}: non-numeric entry") from None
    try:
        n = int(meta["n_atoms"])
        t_final = float(meta["t_final_us"])
        m = int(meta["slices"])
    except KeyError as exc:
        raise ValueError(f"pulse file lacks metadata line '# {exc.args[0]}'") from None
    if header is None or len(header) != 3 + n // 2:
        raise ValueError("pulse file header does not match n_atoms")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    if data.shape[0] != m or not np.array_equal(data[:, 0], np.arange(m)):
        raise ValueError("pulse file rows do not match the slice count")
    amps = data[:, 2:].T * 2 * np.pi
    return PulseSchedule(TimeGrid(t_final, m), amps[0], amps[1:], cap)
