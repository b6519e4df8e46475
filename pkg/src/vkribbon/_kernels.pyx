# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled element gradient and Hessian of the scaled 2D energy.

Same contract as ``_kernels_py.element_grad_hess``. Loops exploit the block
sparsity of the residual Jacobian and the symmetry of the element Hessian.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()


def element_grad_hess(double[:, ::1] W, double[:, ::1] U1, double[:, ::1] U2,
                      double[:, :, ::1] T, double[::1] wq, double[:, ::1] wp,
                      double eps, double beta, bint want_hess=True):
    cdef Py_ssize_t ne = W.shape[0], nq = T.shape[2]
    cdef Py_ssize_t e, q, i, j
    cdef double a = pow(eps, -beta)
    cdef double ie = 1.0 / eps, ie2 = 1.0 / (eps * eps)
    cdef double k = a * sqrt(2.0) / (2.0 * eps)
    cdef double dw1, dw2, dw11, dw12, dw22, u11, u12, u21, u22, w2, c22
    cdef double B11, B12, B22, S11, S12, S22, w, m11, m12, m22
    cdef double s0, s1, s2, s3, s4, s5, t1i, t2i

    g_arr = np.zeros((ne, 48))
    cdef double[:, ::1] g = g_arr
    if want_hess:
        H_arr = np.zeros((ne, 48, 48))
    else:
        H_arr = np.zeros((1, 48, 48))
    cdef double[:, :, ::1] H = H_arr
    # Jacobian rows: r0,r1,r2 act on dw only; r3 on dw,u1; r4 on all; r5 on dw,u2
    cdef double[:, ::1] J = np.zeros((6, 48))

    for e in range(ne):
        for q in range(nq):
            dw1 = 0; dw2 = 0; dw11 = 0; dw12 = 0; dw22 = 0
            u11 = 0; u12 = 0; u21 = 0; u22 = 0
            for i in range(16):
                dw1 += W[e, i] * T[1, i, q]
                dw2 += W[e, i] * T[2, i, q]
                dw11 += W[e, i] * T[3, i, q]
                dw12 += W[e, i] * T[4, i, q]
                dw22 += W[e, i] * T[5, i, q]
                u11 += U1[e, i] * T[1, i, q]
                u12 += U1[e, i] * T[2, i, q]
                u21 += U2[e, i] * T[1, i, q]
                u22 += U2[e, i] * T[2, i, q]
            w2 = dw2 + eps * wp[e, q]
            B11 = dw11
            B12 = dw12 * ie
            B22 = dw22 * ie2
            S11 = a * (u11 + 0.5 * dw1 * dw1)
            S12 = a * 0.5 * (u12 + u21 + dw1 * w2) * ie
            S22 = a * (u22 * ie2 + wp[e, q] * dw2 * ie + 0.5 * dw2 * dw2 * ie2)
            c22 = a * (wp[e, q] * ie + dw2 * ie2)
            w = wq[q]
            for i in range(16):
                t1i = T[1, i, q]
                t2i = T[2, i, q]
                g[e, i] += w * (B11 * T[3, i, q] + 2.0 * B12 * ie * T[4, i, q] + B22 * ie2 * T[5, i, q]
                                + a * S11 * dw1 * t1i + a * S12 * ie * (w2 * t1i + dw1 * t2i)
                                + S22 * c22 * t2i)
                g[e, 16 + i] += w * (a * S11 * t1i + a * S12 * ie * t2i)
                g[e, 32 + i] += w * (a * S12 * ie * t1i + a * S22 * ie2 * t2i)
            if not want_hess:
                continue
            for i in range(16):
                t1i = T[1, i, q]
                t2i = T[2, i, q]
                J[0, i] = T[3, i, q]
                J[1, i] = sqrt(2.0) * ie * T[4, i, q]
                J[2, i] = T[5, i, q] * ie2
                J[3, i] = a * dw1 * t1i
                J[3, 16 + i] = a * t1i
                J[4, i] = k * (w2 * t1i + dw1 * t2i)
                J[4, 16 + i] = k * t2i
                J[4, 32 + i] = k * t1i
                J[5, i] = c22 * t2i
                J[5, 32 + i] = a * ie2 * t2i
            m11 = a * S11 * w
            m12 = a * S12 * ie * w
            m22 = a * S22 * ie2 * w
            # dw-dw block
            for i in range(16):
                s0 = w * J[0, i]; s1 = w * J[1, i]; s2 = w * J[2, i]
                s3 = w * J[3, i]; s4 = w * J[4, i]; s5 = w * J[5, i]
                t1i = T[1, i, q]
                t2i = T[2, i, q]
                for j in range(i, 16):
                    H[e, i, j] += (s0 * J[0, j] + s1 * J[1, j] + s2 * J[2, j] + s3 * J[3, j]
                                   + s4 * J[4, j] + s5 * J[5, j]
                                   + m11 * t1i * T[1, j, q] + m12 * (t1i * T[2, j, q] + t2i * T[1, j, q])
                                   + m22 * t2i * T[2, j, q])
                # dw-u1 and dw-u2 blocks
                for j in range(16, 32):
                    H[e, i, j] += s3 * J[3, j] + s4 * J[4, j]
                for j in range(32, 48):
                    H[e, i, j] += s4 * J[4, j] + s5 * J[5, j]
            for i in range(16, 32):
                s3 = w * J[3, i]; s4 = w * J[4, i]
                for j in range(i, 32):
                    H[e, i, j] += s3 * J[3, j] + s4 * J[4, j]
                for j in range(32, 48):
                    H[e, i, j] += s4 * J[4, j]
            for i in range(32, 48):
                s4 = w * J[4, i]; s5 = w * J[5, i]
                for j in range(i, 48):
                    H[e, i, j] += s4 * J[4, j] + s5 * J[5, j]
        if want_hess:
            for i in range(48):
                for j in range(i):
                    H[e, i, j] = H[e, j, i]
    if want_hess:
        return g_arr, H_arr
    return g_arr, None
