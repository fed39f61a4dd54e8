# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRAPE sweep; same contract as :mod:`rydsim._kernels_py`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, fabs
from scipy.linalg.cython_lapack cimport dsyevd
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def grape_sweep(controls, amps, double dt, psi0, target, bint want_grad=True):
    cdef double[:, :, ::1] ctrl = np.ascontiguousarray(controls, dtype=np.float64)
    cdef double[:, ::1] amp = np.ascontiguousarray(amps, dtype=np.float64)
    cdef double complex[::1] p0 = np.ascontiguousarray(psi0, dtype=np.complex128)
    cdef double complex[::1] tg = np.ascontiguousarray(target, dtype=np.complex128)
    cdef int n_ctrl = ctrl.shape[0]
    cdef int dim = ctrl.shape[1]
    cdef int n_slices = amp.shape[1]
    if amp.shape[0] != n_ctrl or ctrl.shape[2] != dim or p0.shape[0] != dim or tg.shape[0] != dim:
        raise ValueError("inconsistent kernel argument shapes")

    # eigvecs[j, k, i] = component i of eigenvector k (LAPACK column-major output)
    evecs_arr = np.empty((n_slices, dim, dim), dtype=np.float64)
    evals_arr = np.empty((n_slices, dim), dtype=np.float64)
    cdef double[:, :, ::1] vt = evecs_arr
    cdef double[:, ::1] w = evals_arr
    fw_arr = np.empty((n_slices + 1, dim), dtype=np.complex128)
    cdef double complex[:, ::1] fw = fw_arr
    cdef double complex[::1] tmp = np.empty(dim, dtype=np.complex128)

    cdef int j, c, k, i, a, b, info = 0, lwork = -1, liwork = -1, iwkopt = 0
    cdef char jobz = b'V'
    cdef char uplo = b'U'
    cdef double wkopt
    cdef double s, hs
    cdef double complex acc, ph
    dsyevd(&jobz, &uplo, &dim, &vt[0, 0, 0], &dim, &w[0, 0], &wkopt, &lwork, &iwkopt, &liwork, &info)
    lwork = max(1, <int>wkopt)
    liwork = max(1, iwkopt)
    cdef double[::1] work = np.empty(lwork, dtype=np.float64)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)

    with nogil:
        for j in range(n_slices):
            for i in range(dim):
                for k in range(dim):
                    s = 0.0
                    for c in range(n_ctrl):
                        s = s + amp[c, j] * ctrl[c, i, k]
                    vt[j, i, k] = s
            dsyevd(&jobz, &uplo, &dim, &vt[j, 0, 0], &dim, &w[j, 0], &work[0], &lwork, &iwork[0], &liwork, &info)
            if info != 0:
                break
    if info != 0:
        raise np.linalg.LinAlgError(f"dsyevd failed with info={info}")

    with nogil:
        for i in range(dim):
            fw[0, i] = p0[i]
        for j in range(n_slices):
            for k in range(dim):
                acc = 0.0
                for i in range(dim):
                    acc = acc + vt[j, k, i] * fw[j, i]
                tmp[k] = acc * (cos(w[j, k] * dt) - 1j * sin(w[j, k] * dt))
            for i in range(dim):
                acc = 0.0
                for k in range(dim):
                    acc = acc + vt[j, k, i] * tmp[k]
                fw[j + 1, i] = acc
    cdef double complex overlap = 0.0
    for i in range(dim):
        overlap = overlap + tg[i].conjugate() * fw[n_slices, i]
    if not want_grad:
        return complex(overlap), None

    grad_arr = np.zeros((n_ctrl, n_slices), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double complex[::1] bw = np.ascontiguousarray(target, dtype=np.complex128).copy()
    cdef double complex[::1] pe = np.empty(dim, dtype=np.complex128)
    cdef double complex[::1] ce = np.empty(dim, dtype=np.complex128)
    cdef double[:, ::1] wr = np.empty((dim, dim), dtype=np.float64)
    cdef double[:, ::1] wi = np.empty((dim, dim), dtype=np.float64)
    cdef double[:, ::1] t1 = np.empty((dim, dim), dtype=np.float64)
    cdef double[:, ::1] yr = np.empty((dim, dim), dtype=np.float64)
    cdef double[:, ::1] yi = np.empty((dim, dim), dtype=np.float64)
    cdef double complex g, cw
    cdef double complex[::1] half = np.empty(dim, dtype=np.complex128)
    cdef double complex[::1] full = np.empty(dim, dtype=np.complex128)
    cdef double hd, one = 1.0, zero = 0.0, dr, di
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef double complex conj_ov = overlap.conjugate()

    with nogil:
        for j in range(n_slices - 1, -1, -1):
            # eigenbasis components of psi_{j} (slice start) and chi_{j+1} (slice end)
            for k in range(dim):
                acc = 0.0
                cw = 0.0
                for i in range(dim):
                    acc = acc + vt[j, k, i] * fw[j, i]
                    cw = cw + vt[j, k, i] * bw[i]
                pe[k] = acc
                ce[k] = cw
            for k in range(dim):
                hs = 0.5 * w[j, k] * dt
                half[k] = cos(hs) - 1j * sin(hs)
                full[k] = half[k] * half[k]
            for a in range(dim):
                for b in range(dim):
                    hd = 0.5 * (w[j, a] - w[j, b]) * dt
                    if fabs(hd) < 1e-3:
                        # series of the divided difference for (near-)degenerate pairs
                        g = -1j * dt * half[a] * half[b] * (1.0 - hd * hd / 6.0 + hd * hd * hd * hd / 120.0)
                    else:
                        g = (full[a] - full[b]) / (w[j, a] - w[j, b])
                    cw = ce[a].conjugate() * g * pe[b]
                    wr[a, b] = cw.real
                    wi[a, b] = cw.imag
            # row-major Y = Vt^T W Vt, done as column-major BLAS calls
            dgemm(&tn, &tn, &dim, &dim, &dim, &one, &vt[j, 0, 0], &dim, &wr[0, 0], &dim, &zero, &t1[0, 0], &dim)
            dgemm(&tn, &tt, &dim, &dim, &dim, &one, &t1[0, 0], &dim, &vt[j, 0, 0], &dim, &zero, &yr[0, 0], &dim)
            dgemm(&tn, &tn, &dim, &dim, &dim, &one, &vt[j, 0, 0], &dim, &wi[0, 0], &dim, &zero, &t1[0, 0], &dim)
            dgemm(&tn, &tt, &dim, &dim, &dim, &one, &t1[0, 0], &dim, &vt[j, 0, 0], &dim, &zero, &yi[0, 0], &dim)
            for c in range(n_ctrl):
                dr = 0.0
                di = 0.0
                for i in range(dim):
                    for k in range(dim):
                        if ctrl[c, i, k] != 0.0:
                            dr = dr + yr[i, k] * ctrl[c, i, k]
                            di = di + yi[i, k] * ctrl[c, i, k]
                grad[c, j] = 2.0 * (conj_ov * (dr + 1j * di)).real
            # chi_j = U_j^dagger chi_{j+1}
            for k in range(dim):
                ph = cos(w[j, k] * dt) + 1j * sin(w[j, k] * dt)
                tmp[k] = ce[k] * ph
            for i in range(dim):
                acc = 0.0
                for k in range(dim):
                    acc = acc + vt[j, k, i] * tmp[k]
                bw[i] = acc
    return complex(overlap), grad_arr
