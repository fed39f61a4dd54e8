"""Quasi-static thermal noise: per-shot sampling and ensemble execution of the
full-model protocol and of the coherence-decay experiment.

Every shot draws from its own generator, seeded by
``SeedSequence(master_seed, spawn_key=(shot_index,))``, so a shot's
realization depends only on (master_seed, shot_index) and ensembles are
bit-identical for any thread count.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .analysis import GhzTarget, fidelity_ghz, populations_and_coherence
from .dressed import dressed_angle, single_atom_shift
from .grape import PulseSchedule
from .hamiltonian import (
    build_h_doppler,
    build_h_rdb,
    level_occupation,
    local_operator_sum,
    mw_coupling_operator,
    pairwise_interaction,
)
from .hilbert import LEVEL_0, LEVEL_1, LEVEL_R, enumerate_restricted, projection_ratio
from .model import NoiseParams, PhysicalParams
from .propagator import DENSE_CAP, PropagationError, evolve, evolve_static

log = logging.getLogger(__name__)

DRIVE_MODES = ("dressing_on_mw_off", "all_off")


class ShotError(RuntimeError):
    def __init__(self, shot_index: int, message: str):
        super().__init__(f"shot {shot_index}: {message}")
        self.shot_index = shot_index


@dataclass(frozen=True)
class NoiseRealization:
    positions: np.ndarray  # um
    pairwise_v: np.ndarray  # rad/us
    doppler: np.ndarray  # rad/us
    shot_index: int
    seed: int  # 64-bit word derived from (master_seed, shot_index)


def shot_rng(master_seed: int, shot_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(shot_index,))))


def sample_realization(
    params: PhysicalParams, noise: NoiseParams, master_seed: int, shot_index: int
) -> NoiseRealization:
    """Positions x_n = n R0 + N(0, sigma^2), then Doppler detunings N(0, sigma_D^2)."""
    if shot_index < 0:
        raise ValueError("shot_index must be >= 0")
    n = params.n_atoms
    ss = np.random.SeedSequence(master_seed, spawn_key=(shot_index,))
    rng = np.random.Generator(np.random.Philox(ss))
    positions = np.arange(n) * params.r0 + rng.normal(0.0, noise.sigma_pos, n)
    doppler = rng.normal(0.0, noise.sigma_doppler, n)
    v = pairwise_interaction(positions, params.c6, params.interaction_range)
    seed = int(ss.generate_state(1, np.uint64)[0])
    return NoiseRealization(positions, v, doppler, shot_index, seed)


def nominal_realization(params: PhysicalParams) -> NoiseRealization:
    pos = np.arange(params.n_atoms) * params.r0
    v = pairwise_interaction(pos, params.c6, params.interaction_range)
    return NoiseRealization(pos, v, np.zeros(params.n_atoms), -1, 0)


class ProtocolHamiltonian:
    """Slice Hamiltonians H_RDB + H_mw(j) + H_D of one realization.

    The static part is assembled once; each slice adds omega_mw(j) times the
    microwave coupling and a diagonal (U1 + f_h(j)) |0><0| term.
    """

    def __init__(self, params: PhysicalParams, realization: NoiseRealization, pulses: PulseSchedule | None):
        n = params.n_atoms
        if pulses is not None and pulses.n_atoms != n:
            raise ValueError("pulses are for a different number of atoms")
        self.u1 = float(single_atom_shift(params.omega, params.delta))
        self.coeffs = dressed_angle(params.omega, params.delta).coeffs
        static = build_h_rdb(params, realization.pairwise_v).matrix + build_h_doppler(realization.doppler).matrix
        self.static = static.tocsr()
        self.coupling = mw_coupling_operator(n, self.coeffs)
        self.occ0 = level_occupation(n, LEVEL_0)
        self.drive = pulses.to_drive() if pulses is not None else None

    def __call__(self, j: int) -> sp.csr_matrix:
        shifts = self.drive.atom_shifts(j)
        diag = (self.u1 + shifts) @ self.occ0
        mat = self.static + self.drive.omega_mw[j] * self.coupling + sp.diags(diag)
        return mat.tocsr()

    def idle(self, with_dressing: bool = True, params: PhysicalParams | None = None) -> sp.csr_matrix:
        """Microwave off: static part plus U1 |0><0|; optionally without the dressing drive."""
        mat = self.static + sp.diags(self.u1 * self.occ0.sum(axis=0))
        if not with_dressing:
            mat = mat - (params.omega / 2) * _dressing_flip(params.n_atoms)
        return mat.tocsr()


def _dressing_flip(n_atoms: int) -> sp.csr_matrix:
    op = np.zeros((3, 3))
    op[LEVEL_1, LEVEL_R] = op[LEVEL_R, LEVEL_1] = 1.0
    return local_operator_sum(n_atoms, [(k, op) for k in range(n_atoms)])


@dataclass
class ShotResult:
    shot_index: int
    fidelity: float = math.nan
    projection: float = math.nan
    error: str | None = None
    state: np.ndarray | None = None


def run_protocol_shot(
    realization: NoiseRealization,
    pulses: PulseSchedule,
    params: PhysicalParams,
    keep_state: bool = False,
    dense_cap: int = DENSE_CAP,
) -> ShotResult:
    """Evolve |0...0> through the full model and score it against the embedded GHZ state."""
    n = params.n_atoms
    ham = ProtocolHamiltonian(params, realization, pulses)
    psi0 = np.zeros(3**n, dtype=complex)
    psi0[0] = 1.0
    try:
        res = evolve(ham, psi0, pulses.grid, dense_cap=dense_cap, check_hermitian=False)
    except PropagationError as exc:
        raise ShotError(realization.shot_index, str(exc)) from exc
    psi = res.final
    target = GhzTarget(n, ham.coeffs)
    fid = fidelity_ghz(psi, target)
    proj = projection_ratio(psi, enumerate_restricted(n), ham.coeffs)
    return ShotResult(realization.shot_index, float(fid), float(proj), None, psi if keep_state else None)


@dataclass
class EnsembleResult:
    shot_indices: np.ndarray
    fidelities: np.ndarray  # nan for failed shots
    projections: np.ndarray
    failures: dict[int, str] = field(default_factory=dict)
    coherence_curves: np.ndarray | None = None

    @property
    def ok(self) -> np.ndarray:
        return np.isfinite(self.fidelities)

    @property
    def n_ok(self) -> int:
        return int(self.ok.sum())

    @property
    def mean(self) -> float:
        return float(np.mean(self.fidelities[self.ok])) if self.n_ok else math.nan

    @property
    def std(self) -> float | None:
        """Sample standard deviation (ddof=1); None with fewer than two shots."""
        return float(np.std(self.fidelities[self.ok], ddof=1)) if self.n_ok > 1 else None

    @property
    def stderr(self) -> float | None:
        s = self.std
        return None if s is None else s / math.sqrt(self.n_ok)

    @property
    def mean_projection(self) -> float:
        return float(np.mean(self.projections[self.ok])) if self.n_ok else math.nan


def _map_shots(fn, indices, threads: int | None):
    """Run `fn` on every index and return results in index order."""
    indices = list(indices)
    if not threads or threads <= 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {i: pool.submit(fn, i) for i in indices}
        return [futures[i].result() for i in indices]


def run_ensemble(
    params: PhysicalParams,
    noise: NoiseParams,
    pulses: PulseSchedule,
    n_shots: int = 200,
    master_seed: int = 0,
    threads: int | None = None,
    dense_cap: int = DENSE_CAP,
) -> EnsembleResult:
    """Independent noisy shots of the protocol; failed shots are recorded, not fatal."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")

    def one(i: int) -> ShotResult:
        try:
            real = sample_realization(params, noise, master_seed, i)
            return run_protocol_shot(real, pulses, params, dense_cap=dense_cap)
        except (ShotError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("shot %d failed: %s", i, exc)
            return ShotResult(i, error=str(exc))

    shots = _map_shots(one, range(n_shots), threads)
    return EnsembleResult(
        np.array([s.shot_index for s in shots]),
        np.array([s.fidelity for s in shots]),
        np.array([s.projection for s in shots]),
        {s.shot_index: s.error for s in shots if s.error is not None},
    )


@dataclass(frozen=True)
class CoherenceScan:
    tau: np.ndarray
    off_diagonals: np.ndarray  # (n_shots, n_tau) complex <Abar|psi><psi|A>
    drive_mode: str

    @property
    def mean_coherence(self) -> np.ndarray:
        """2 |<Abar| rho_avg |A>| of the shot-averaged density matrix."""
        return 2 * np.abs(self.off_diagonals.mean(axis=0))

    @property
    def shot_coherence(self) -> np.ndarray:
        return 2 * np.abs(self.off_diagonals)


def coherence_decay_scan(
    params: PhysicalParams,
    noise: NoiseParams,
    n_shots: int,
    tau_grid,
    drive_mode: str = "dressing_on_mw_off",
    master_seed: int = 0,
    threads: int | None = None,
    dense_cap: int = DENSE_CAP,
) -> CoherenceScan:
    """Free evolution of the embedded GHZ state with the microwave off.

    ``dressing_on_mw_off`` keeps H_RDB + H_D; ``all_off`` also removes the
    dressing Rabi coupling (rotating-frame detuning, interactions and
    Doppler shifts remain).
    """
    if drive_mode not in DRIVE_MODES:
        raise ValueError(f"drive_mode must be one of {DRIVE_MODES}")
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    tau = np.asarray(tau_grid, dtype=float)
    n = params.n_atoms
    target = GhzTarget(n, dressed_angle(params.omega, params.delta).coeffs)

    def one(i: int) -> np.ndarray:
        real = sample_realization(params, noise, master_seed, i)
        ham = ProtocolHamiltonian(params, real, None)
        h = ham.idle(drive_mode == "dressing_on_mw_off", params)
        states = evolve_static(h, target.ghz, tau, dense_cap=dense_cap)
        return np.array([populations_and_coherence(s, target)[2] for s in states])

    rows = _map_shots(one, range(n_shots), threads)
    return CoherenceScan(tau, np.array(rows), drive_mode)
