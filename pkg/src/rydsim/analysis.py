"""GHZ fidelity and coherence, T2 extraction and scaling-law regressions."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .hilbert import embed_restricted_in_full, enumerate_restricted


class GhzTarget:
    """The pair |A> = |d0d0...>, |Abar> = |0d0d...> and GHZ = (|A> + |Abar>)/sqrt(2).

    ``space="full"`` embeds the words in the 3^N space with the given dressed
    coefficients (c1, cr); ``space="restricted"`` uses the S3 basis.
    """

    def __init__(self, n_atoms: int, dressed_coeffs=None, space: str = "full"):
        if n_atoms < 2 or n_atoms % 2:
            raise ValueError("n_atoms must be even and >= 2")
        self.n_atoms = n_atoms
        self.space = space
        self.word_a = "".join("d" if k % 2 == 0 else "0" for k in range(n_atoms))
        self.word_abar = self.word_a.translate(str.maketrans("d0", "0d"))
        if space == "full":
            if dressed_coeffs is None:
                raise ValueError("the full-space target needs the dressed coefficients")
            self.vec_a = embed_restricted_in_full(self.word_a, dressed_coeffs).astype(complex)
            self.vec_abar = embed_restricted_in_full(self.word_abar, dressed_coeffs).astype(complex)
        elif space == "restricted":
            basis = enumerate_restricted(n_atoms)
            self.vec_a = np.zeros(len(basis), dtype=complex)
            self.vec_abar = np.zeros(len(basis), dtype=complex)
            self.vec_a[basis.index_of(self.word_a)] = 1
            self.vec_abar[basis.index_of(self.word_abar)] = 1
        else:
            raise ValueError(f"unknown space {space!r}")

    @property
    def dim(self) -> int:
        return self.vec_a.shape[0]

    @property
    def ghz(self) -> np.ndarray:
        return (self.vec_a + self.vec_abar) / math.sqrt(2)


def _check_dim(state: np.ndarray, target: GhzTarget) -> np.ndarray:
    state = np.asarray(state)
    if state.shape[0] != target.dim or (state.ndim == 2 and state.shape[1] != target.dim) or state.ndim > 2:
        raise ValueError(f"state shape {state.shape} does not match target dimension {target.dim}")
    return state


def populations_and_coherence(state, target: GhzTarget) -> tuple[float, float, complex]:
    """(p_A, p_Abar, <Abar|rho|A>) for a state vector or density matrix."""
    state = _check_dim(state, target)
    a, b = target.vec_a, target.vec_abar
    if state.ndim == 1:
        oa, ob = np.vdot(a, state), np.vdot(b, state)
        return float(abs(oa) ** 2), float(abs(ob) ** 2), complex(ob * np.conj(oa))
    ra = state @ a
    return float(np.vdot(a, ra).real), float(np.vdot(b, state @ b).real), complex(np.vdot(b, ra))


def fidelity_ghz(state, target: GhzTarget) -> float:
    """F = (p_A + p_Abar + c + c*) / 2 with c = <Abar|rho|A>."""
    pa, pb, c = populations_and_coherence(state, target)
    return (pa + pb + 2 * c.real) / 2


def coherence(state, target: GhzTarget) -> float:
    """2 |<Abar|rho|A>|."""
    return 2 * abs(populations_and_coherence(state, target)[2])


@dataclass(frozen=True)
class T2Estimate:
    t2_fit: float  # inf if the fitted curve does not decay
    t2_crossing: float | None
    amplitude: float
    residual: float  # rms deviation of the fitted Gaussian on the fitted points
    extrapolated: bool
    n_points: int


def t2_from_curve(tau_grid, curve, floor: float = 0.05) -> T2Estimate:
    """Gaussian T2 from a coherence curve C(tau).

    The fit is a weighted least-squares line through the origin of
    ln(C/C0) against tau^2 (weights C^2, points with C > floor and tau > 0),
    with C0 the value at tau = 0 (or 1 if the grid does not start at 0). The
    crossing estimate interpolates the first drop below 1/e linearly in the
    (tau^2, ln C) plane, which is exact for a Gaussian.
    """
    tau = np.asarray(tau_grid, dtype=float)
    c = np.asarray(curve, dtype=float)
    if tau.shape != c.shape or tau.ndim != 1 or len(tau) < 2:
        raise ValueError("tau_grid and curve must be equal-length 1-D arrays")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be strictly increasing")
    c0 = float(c[0]) if tau[0] == 0 else 1.0
    use = (c > floor) & (tau > 0)
    x = tau[use] ** 2
    y = np.log(c[use] / c0)
    w = c[use] ** 2
    if use.sum() >= 1 and np.sum(w * x * x) > 0:
        slope = float(np.sum(w * x * y) / np.sum(w * x * x))
    else:
        slope = 0.0
    t2_fit = 1 / math.sqrt(-slope) if slope < 0 else math.inf
    model = c0 * np.exp(-x * (-slope))
    residual = float(np.sqrt(np.mean((c[use] - model) ** 2))) if use.any() else 0.0

    level = math.exp(-1)
    below = np.nonzero(c < level)[0]
    crossing = None
    if len(below) and below[0] > 0:
        k = int(below[0])
        x0, x1 = tau[k - 1] ** 2, tau[k] ** 2
        y0, y1 = math.log(max(c[k - 1], 1e-300)), math.log(max(c[k], 1e-300))
        crossing = math.sqrt(x0 + (-1 - y0) * (x1 - x0) / (y1 - y0))
    extrapolated = crossing is None or t2_fit > tau[-1]
    return T2Estimate(t2_fit, crossing, c0, residual, bool(extrapolated), int(use.sum()))


class Transform(str, enum.Enum):
    SQRT_N = "sqrtN"  # ln(F - 1/2) against sqrt(N)
    SQRT_T = "sqrtT"  # ln(F - 1/2) against sqrt(T)
    INV_SQRT_N = "inv_sqrtN"  # y against 1/sqrt(N)
    LINEAR = "linear"

    @property
    def is_log(self) -> bool:
        return self in (Transform.SQRT_N, Transform.SQRT_T)


@dataclass(frozen=True)
class FitResult:
    transform: Transform
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    intercept_stderr: float
    xs: np.ndarray
    ys: np.ndarray
    excluded: tuple[float, ...] = field(default=())

    def predict(self, x):
        """Fitted law evaluated at `x` in the original coordinates."""
        x = np.asarray(x, dtype=float)
        t = self.transform
        if t.is_log:
            return 0.5 + np.exp(self.intercept + self.slope * np.sqrt(x))
        if t is Transform.INV_SQRT_N:
            return self.intercept + self.slope / np.sqrt(x)
        return self.intercept + self.slope * x


def _coords(transform: Transform, xs: np.ndarray, ys: np.ndarray):
    if transform.is_log:
        return np.sqrt(xs), np.log(ys - 0.5)
    if transform is Transform.INV_SQRT_N:
        return 1 / np.sqrt(xs), ys
    return xs, ys


def fit_scaling(xs, ys, transform="sqrtN") -> FitResult:
    """Ordinary least squares in the transformed coordinates.

    For the logarithmic laws, points with F <= 1/2 are dropped with a warning.
    """
    transform = Transform(transform)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-D arrays")
    excluded: tuple[float, ...] = ()
    if transform.is_log:
        bad = ys <= 0.5
        if bad.any():
            excluded = tuple(float(x) for x in xs[bad])
            warnings.warn(f"excluding points with F <= 1/2 at x = {list(excluded)}", RuntimeWarning, stacklevel=2)
            xs, ys = xs[~bad], ys[~bad]
    if transform is not Transform.LINEAR and np.any(xs <= 0):
        raise ValueError("x must be positive for square-root transforms")
    if len(xs) < 2:
        raise ValueError("need at least two valid points")
    u, v = _coords(transform, xs, ys)
    if np.ptp(u) == 0:
        raise ValueError("x values are all identical")
    reg = stats.linregress(u, v)
    r2 = float(reg.rvalue**2) if np.ptp(v) > 0 else 1.0
    return FitResult(
        transform, float(reg.slope), float(reg.intercept), min(max(r2, 0.0), 1.0),
        float(reg.stderr), float(reg.intercept_stderr), xs, ys, excluded,
    )
