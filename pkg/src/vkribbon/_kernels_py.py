"""Element gradient and Hessian of the scaled 2D energy (numpy reference implementation).

Per element the local unknowns are 48 numbers: 16 bicubic Hermite DOFs for each
of dw = w - eps*profile, u1 and u2. ``T`` holds the basis derivative tables
(val, d1, d2, d11, d12, d22) at the quadrature points, shape (6, 16, nq).
``wq`` are the quadrature weights (nq,) and ``wp`` the profile slope at each
quadrature point (ne, nq).
"""

import numpy as np

SQRT2 = np.sqrt(2.0)


def element_grad_hess(W, U1, U2, T, wq, wp, eps, beta, want_hess=True):
    a = eps ** (-beta)
    dw1, dw2, dw11, dw12, dw22 = (W @ T[d] for d in (1, 2, 3, 4, 5))
    u11, u12 = U1 @ T[1], U1 @ T[2]
    u21, u22 = U2 @ T[1], U2 @ T[2]
    w2 = dw2 + eps * wp

    B11 = dw11
    B12 = dw12 / eps
    B22 = dw22 / eps**2
    S11 = a * (u11 + 0.5 * dw1**2)
    S12 = a * 0.5 * (u12 + u21 + dw1 * w2) / eps
    S22 = a * (u22 / eps**2 + wp * dw2 / eps + 0.5 * dw2**2 / eps**2)

    T1, T2, T11, T12, T22 = T[1], T[2], T[3], T[4], T[5]
    c22 = a * (wp / eps + dw2 / eps**2)

    # gradient: sum over q of wq * J^T rho (with the factor 2 on off-diagonals)
    gW = ((B11 * wq) @ T11.T + (2 * B12 / eps * wq) @ T12.T + (B22 / eps**2 * wq) @ T22.T
          + (a * S11 * dw1 * wq) @ T1.T
          + (a * S12 / eps * wq * w2) @ T1.T + (a * S12 / eps * wq * dw1) @ T2.T
          + (S22 * c22 * wq) @ T2.T)
    gU1 = (a * S11 * wq) @ T1.T + (a * S12 / eps * wq) @ T2.T
    gU2 = (a * S12 / eps * wq) @ T1.T + (a * S22 / eps**2 * wq) @ T2.T
    g = np.hstack([gW, gU1, gU2])
    if not want_hess:
        return g, None

    ne, nq = dw1.shape
    J = np.zeros((ne, nq, 6, 48))
    k = a * SQRT2 / (2 * eps)
    J[:, :, 0, :16] = T11.T
    J[:, :, 1, :16] = SQRT2 / eps * T12.T
    J[:, :, 2, :16] = T22.T / eps**2
    J[:, :, 3, :16] = (a * dw1)[..., None] * T1.T
    J[:, :, 3, 16:32] = a * T1.T
    J[:, :, 4, :16] = k * (w2[..., None] * T1.T + dw1[..., None] * T2.T)
    J[:, :, 4, 16:32] = k * T2.T
    J[:, :, 4, 32:] = k * T1.T
    J[:, :, 5, :16] = c22[..., None] * T2.T
    J[:, :, 5, 32:] = a / eps**2 * T2.T
    Jw = (J * np.sqrt(wq)[None, :, None, None]).reshape(ne, nq * 6, 48)
    H = np.matmul(Jw.transpose(0, 2, 1), Jw)
    # second derivatives of the membrane residuals live in the dw block only
    m11 = a * S11 * wq
    m12 = a * S12 / eps * wq
    m22 = a * S22 / eps**2 * wq
    A1 = m11[:, None, :] * T1[None] + m12[:, None, :] * T2[None]
    A2 = m12[:, None, :] * T1[None] + m22[:, None, :] * T2[None]
    H[:, :16, :16] += np.matmul(A1, T1.T) + np.matmul(A2, T2.T)
    return g, H
