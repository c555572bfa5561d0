# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled twin of the numpy moment-space affine step loop.

Same contract as _kernel_numpy.centered_affine_steps: runs `steps`
gradient updates in place on the centered parameters and returns -1,
or the 0-based index of the first step with non-finite gradients. The
matrices are d x d stage statistics, so explicit loops beat BLAS
dispatch overhead at the sizes this package runs at.
"""

import numpy as np

from libc.math cimport isfinite


cdef inline void mm_nn(double[:, ::1] a, double[:, ::1] b,
                       double[:, ::1] out, int d) noexcept:
    # out = a @ b
    cdef int i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


cdef inline void mm_nt(double[:, ::1] a, double[:, ::1] b,
                       double[:, ::1] out, int d) noexcept:
    # out = a @ b.T
    cdef int i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[i, k] * b[j, k]
            out[i, j] = acc


cdef inline void mm_tn(double[:, ::1] a, double[:, ::1] b,
                       double[:, ::1] out, int d) noexcept:
    # out = a.T @ b
    cdef int i, j, k
    cdef double acc
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for k in range(d):
                acc += a[k, i] * b[k, j]
            out[i, j] = acc


cdef inline void mv_n(double[:, ::1] a, double[::1] x,
                      double[::1] out, int d) noexcept:
    # out = a @ x
    cdef int i, k
    cdef double acc
    for i in range(d):
        acc = 0.0
        for k in range(d):
            acc += a[i, k] * x[k]
        out[i] = acc


cdef inline void mv_t(double[:, ::1] a, double[::1] x,
                      double[::1] out, int d) noexcept:
    # out = a.T @ x
    cdef int i, k
    cdef double acc
    for i in range(d):
        acc = 0.0
        for k in range(d):
            acc += a[k, i] * x[k]
        out[i] = acc


def centered_affine_steps(int steps, double lr, double lam_cycle,
                          double lam_dist,
                          double[:, ::1] wf, double[::1] cfc,
                          double[:, ::1] wg, double[::1] cgc,
                          double[:, ::1] cx, double[:, ::1] cy):
    cdef int d = wf.shape[0]
    cdef double kc = 2.0 * lam_cycle / d
    cdef double ld2 = 2.0 * lam_dist
    cdef double ld4 = 4.0 * lam_dist

    scratch = [np.empty((d, d), dtype=np.float64) for _ in range(10)]
    cdef double[:, ::1] t1 = scratch[0]
    cdef double[:, ::1] t2 = scratch[1]
    cdef double[:, ::1] dcf = scratch[2]
    cdef double[:, ::1] dcb = scratch[3]
    cdef double[:, ::1] kfcx = scratch[4]
    cdef double[:, ::1] kbcy = scratch[5]
    cdef double[:, ::1] ma = scratch[6]
    cdef double[:, ::1] mb = scratch[7]
    cdef double[:, ::1] gwf = scratch[8]
    cdef double[:, ::1] gwg = scratch[9]
    vectors = [np.empty(d, dtype=np.float64) for _ in range(4)]
    cdef double[::1] r1 = vectors[0]
    cdef double[::1] r2 = vectors[1]
    cdef double[::1] gcf = vectors[2]
    cdef double[::1] gcg = vectors[3]

    cdef int s, i, j, k
    cdef double acc, total

    for s in range(steps):
        # t1 = wf @ cx; dcf = t1 @ wf.T - cy (and the backward twin)
        mm_nn(wf, cx, t1, d)
        mm_nt(t1, wf, dcf, d)
        mm_nn(wg, cy, t2, d)
        mm_nt(t2, wg, dcb, d)
        for i in range(d):
            for j in range(d):
                dcf[i, j] -= cy[i, j]
                dcb[i, j] -= cx[i, j]

        # kfcx = (wg @ wf - I) @ cx; kbcy = (wf @ wg - I) @ cy
        mm_nn(wg, wf, ma, d)
        mm_nn(wf, wg, mb, d)
        for i in range(d):
            ma[i, i] -= 1.0
            mb[i, i] -= 1.0
        mm_nn(ma, cx, kfcx, d)
        mm_nn(mb, cy, kbcy, d)

        # r1 = wg @ cfc + cgc; r2 = wf @ cgc + cfc
        mv_n(wg, cfc, r1, d)
        mv_n(wf, cgc, r2, d)
        for i in range(d):
            r1[i] += cgc[i]
            r2[i] += cfc[i]

        # gwf = 4 ld (dcf @ t1) + kc (wg.T @ kfcx + kbcy @ wg.T + outer(r2, cgc))
        mm_nn(dcf, t1, ma, d)
        mm_tn(wg, kfcx, mb, d)
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc += kbcy[i, k] * wg[j, k]
                gwf[i, j] = ld4 * ma[i, j] + kc * (mb[i, j] + acc
                                                   + r2[i] * cgc[j])

        # gwg = 4 ld (dcb @ t2) + kc (wf.T @ kbcy + kfcx @ wf.T + outer(r1, cfc))
        mm_nn(dcb, t2, ma, d)
        mm_tn(wf, kbcy, mb, d)
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc += kfcx[i, k] * wf[j, k]
                gwg[i, j] = ld4 * ma[i, j] + kc * (mb[i, j] + acc
                                                   + r1[i] * cfc[j])

        # gcf = 2 ld cfc + kc (wg.T @ r1 + r2); gcg symmetric
        mv_t(wg, r1, gcf, d)
        mv_t(wf, r2, gcg, d)
        for i in range(d):
            gcf[i] = ld2 * cfc[i] + kc * (gcf[i] + r2[i])
            gcg[i] = ld2 * cgc[i] + kc * (gcg[i] + r1[i])

        total = 0.0
        for i in range(d):
            total += gcf[i] + gcg[i]
            for j in range(d):
                total += gwf[i, j] + gwg[i, j]
        if not isfinite(total):
            return s

        for i in range(d):
            cfc[i] -= lr * gcf[i]
            cgc[i] -= lr * gcg[i]
            for j in range(d):
                wf[i, j] -= lr * gwf[i, j]
                wg[i, j] -= lr * gwg[i, j]
    return -1
