# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled step engine for the per-path gated student (hot inner loop).

Mirrors _kernel_py.advance for scalar gates; per-neuron mode stays on the
NumPy path. BLAS handles the two batch matmuls, everything else is plain C
loops over the small parameter arrays.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, isfinite, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NORM_NONE, NORM_L1, NORM_L2 = 0, 1, 2


cdef void _matmul(double[:, ::1] A, double[:, ::1] B, double[:, ::1] C) noexcept nogil:
    # C (m x n) = A (m x k) @ B (k x n), all row-major: compute C^T = B^T A^T
    # in Fortran terms, where each row-major array is the Fortran transpose.
    cdef int m = A.shape[0], k = A.shape[1], n = B.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'n'
    dgemm(&nt, &nt, &n, &m, &k, &one, &B[0, 0], &n, &A[0, 0], &k, &zero, &C[0, 0], &n)


def advance(
    cnp.ndarray[cnp.float64_t, ndim=3] W not None,
    cnp.ndarray[cnp.float64_t, ndim=1] c not None,
    cnp.ndarray[cnp.float64_t, ndim=2] teacher not None,
    int n_steps,
    double dt,
    double tau_w,
    double tau_c,
    double lam_nonneg,
    double lam_norm,
    int norm_kind,
    double lam_w,
    int B,
    object rng,
    object xbuf,
):
    """Integrate n_steps in place; returns (loss0, reg0, dw_norms0, dc_norm0, ok)."""
    cdef int P = W.shape[0], d_out = W.shape[1], d_in = W.shape[2]
    cdef double[:, :, ::1] Wv = W
    cdef double[::1] cv = c
    cdef double[:, ::1] Tv = teacher

    cdef cnp.ndarray[cnp.float64_t, ndim=2] R_arr = np.empty((d_out, d_in))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] G_arr = np.empty((d_out, d_in))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] E_arr
    cdef double[:, ::1] R = R_arr, G = G_arr
    cdef double[:, ::1] E
    cdef double[:, ::1] X

    cdef cnp.ndarray[cnp.float64_t, ndim=1] dwn0 = np.zeros(P)
    cdef double[::1] dwn0v = dwn0
    cdef double[::1] gc = np.empty(P)
    cdef double loss0 = 0.0, reg0 = 0.0, dcn0 = 0.0

    if B > 0:
        E_arr = np.empty((d_out, B))
        E = E_arr
        X = xbuf

    cdef int step, p, i, j
    cdef double nb, scale, loss, rloss, dev, cn, acc, g, wdecay, dw, dcp, val
    cdef bint ok = True, per_step_sample = B > 0

    for step in range(n_steps):
        # R = teacher - sum_p c_p W_p
        for i in range(d_out):
            for j in range(d_in):
                acc = 0.0
                for p in range(P):
                    acc += cv[p] * Wv[p, i, j]
                R[i, j] = Tv[i, j] - acc
        if per_step_sample:
            rng.standard_normal(out=xbuf)
            _matmul(R, X, E)            # E = R @ X
            with nogil:
                acc = 0.0
                for i in range(d_out):
                    for j in range(B):
                        acc += E[i, j] * E[i, j]
            nb = <double> B
            loss = acc / (2.0 * nb * d_out)
            # G = E @ X^T via C-order identity: G^T = X E^T
            _gemm_nt(E, X, G)
        else:
            nb = 1.0
            acc = 0.0
            for i in range(d_out):
                for j in range(d_in):
                    G[i, j] = R[i, j]
                    acc += R[i, j] * R[i, j]
            loss = acc / (2.0 * d_out)

        scale = 1.0 / (nb * d_out)

        # gate gradient: task part + regularizers
        rloss = 0.0
        for p in range(P):
            acc = 0.0
            for i in range(d_out):
                for j in range(d_in):
                    acc += Wv[p, i, j] * G[i, j]
            gc[p] = -scale * acc
            if cv[p] < 0.0:
                gc[p] -= lam_nonneg
                rloss += lam_nonneg * (-cv[p])
        if norm_kind == 1:
            dev = 0.0
            for p in range(P):
                dev += fabs(cv[p])
            dev -= 1.0
            rloss += lam_norm * 0.5 * dev * dev
            for p in range(P):
                if cv[p] > 0.0:
                    gc[p] += lam_norm * dev
                elif cv[p] < 0.0:
                    gc[p] -= lam_norm * dev
        elif norm_kind == 2:
            cn = 0.0
            for p in range(P):
                cn += cv[p] * cv[p]
            cn = sqrt(cn)
            rloss += lam_norm * 0.5 * (cn - 1.0) * (cn - 1.0)
            if cn > 0.0:
                for p in range(P):
                    gc[p] += lam_norm * (cn - 1.0) * cv[p] / cn
        if lam_w > 0.0:
            acc = 0.0
            for p in range(P):
                for i in range(d_out):
                    for j in range(d_in):
                        acc += Wv[p, i, j] * Wv[p, i, j]
            rloss += lam_w / (2.0 * P * d_in) * acc

        # simultaneous Euler update; record first-substep magnitudes
        wdecay = lam_w / (P * d_in)
        if step == 0:
            loss0 = loss
            reg0 = rloss
            dcn0 = 0.0
            for p in range(P):
                dcn0 += (dt / tau_c) * gc[p] * (dt / tau_c) * gc[p]
            dcn0 = sqrt(dcn0)
        for p in range(P):
            acc = 0.0
            for i in range(d_out):
                for j in range(d_in):
                    g = -cv[p] * scale * G[i, j]
                    if lam_w > 0.0:
                        g += wdecay * Wv[p, i, j]
                    dw = (dt / tau_w) * g
                    if step == 0:
                        acc += dw * dw
                    val = Wv[p, i, j] - dw
                    Wv[p, i, j] = val
                    if not isfinite(val):
                        ok = False
            if step == 0:
                dwn0v[p] = sqrt(acc)
        for p in range(P):
            dcp = cv[p] - (dt / tau_c) * gc[p]
            cv[p] = dcp
            if not isfinite(dcp):
                ok = False
        if not ok:
            return loss0, reg0, dwn0, dcn0, False
    return loss0, reg0, dwn0, dcn0, True


cdef void _gemm_nt(double[:, ::1] A, double[:, ::1] Bm, double[:, ::1] C) noexcept nogil:
    # C (m x n) = A (m x k) @ Bm^T where Bm is (n x k), all row-major.
    # Fortran view: C^T = Bm^F_T ... use dgemm with transa='t'.
    cdef int m = A.shape[0], k = A.shape[1], n = Bm.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char nt = b'n', tt = b't'
    # Row-major C = A @ Bm^T  <=>  Fortran C^T(n x m) = Bm^F(k x n)^T? Work it:
    # Fortran sees A as A^T (k x m), Bm as Bm^T (k x n), C as C^T (n x m).
    # C^T = (A @ Bm^T)^T = Bm @ A^T = (Bm^T)^T @ (A^T) -> transa='t' on Bm^T.
    dgemm(&tt, &nt, &n, &m, &k, &one, &Bm[0, 0], &k, &A[0, 0], &k, &zero, &C[0, 0], &n)
