"""Pure-numpy GRAPE sweep (fallback for the compiled kernel).

Both implementations share one contract:

``grape_sweep(controls, amps, dt, psi0, target, want_grad)``

* ``controls``: (C, D, D) real symmetric matrices
* ``amps``: (C, M) piecewise-constant amplitudes, H_j = sum_c amps[c, j] controls[c]
* returns ``(overlap, grad)`` with overlap = <target| U_M ... U_1 |psi0> and
  grad[c, j] = d|overlap|^2 / d amps[c, j] (``None`` if not requested).

The gradient is exact for the discretized problem: the slice derivative of
exp(-i H dt) is taken in the slice eigenbasis, which equals the slice
average of the commutator expression -i Tr{lambda(t) [H_c, rho(t)]}.
"""
from __future__ import annotations

import numpy as np


def slice_eigensystems(controls: np.ndarray, amps: np.ndarray):
    h = np.einsum("cj,ckl->jkl", amps, controls)
    return np.linalg.eigh(h)


def divided_differences(w: np.ndarray, dt: float) -> np.ndarray:
    """G_ab = (e^{-i w_a dt} - e^{-i w_b dt}) / (w_a - w_b), written as a sinc."""
    half_sum = 0.5 * (w[..., :, None] + w[..., None, :]) * dt
    half_diff = 0.5 * (w[..., :, None] - w[..., None, :]) * dt
    return -1j * dt * np.exp(-1j * half_sum) * np.sinc(half_diff / np.pi)


def grape_sweep(controls, amps, dt, psi0, target, want_grad=True):
    controls = np.ascontiguousarray(controls, dtype=float)
    amps = np.ascontiguousarray(amps, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    target = np.asarray(target, dtype=complex)
    n_slices = amps.shape[1]
    dim = psi0.shape[0]
    w, v = slice_eigensystems(controls, amps)
    phase = np.exp(-1j * w * dt)
    vt = np.swapaxes(v, 1, 2)

    fw = np.empty((n_slices + 1, dim), dtype=complex)
    fw[0] = psi0
    for j in range(n_slices):
        fw[j + 1] = v[j] @ (phase[j] * (vt[j] @ fw[j]))
    overlap = complex(np.vdot(target, fw[-1]))
    if not want_grad:
        return overlap, None

    bw = np.empty((n_slices + 1, dim), dtype=complex)
    bw[-1] = target
    for j in range(n_slices - 1, -1, -1):
        bw[j] = v[j] @ (phase[j].conj() * (vt[j] @ bw[j + 1]))

    p_eig = np.einsum("jkl,jk->jl", v, fw[:-1])
    c_eig = np.einsum("jkl,jk->jl", v, bw[1:])
    weights = c_eig.conj()[:, :, None] * divided_differences(w, dt) * p_eig[:, None, :]
    y = v @ weights @ vt
    d_overlap = np.einsum("jkl,ckl->cj", y, controls)
    grad = 2.0 * np.real(np.conj(overlap) * d_overlap)
    return overlap, grad
