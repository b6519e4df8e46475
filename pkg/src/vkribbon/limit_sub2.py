"""Relaxed one-dimensional limit for 0 < beta < 2.

The membrane density is the squared positive part of xi1' + r'^2/2, so
compression costs nothing. xi1, r, theta are piecewise linear; xi2 is a cubic
Hermite function. The compressive end jumps of xi1 are carried by two
nonnegative slacks that enter the energy only through the end values of xi1.
"""

from dataclasses import dataclass

import numpy as np
import scipy.optimize
from numpy.polynomial import Polynomial

from .cross_section import J1_EXACT
from .fe1d import Mesh1D, cubic_hermite_global, hermite_basis, linear_eval, hermite_eval
from .limit_beta2 import BC_TOL, AdmissibilityError, EnergyReport
from .optim import SolverOptions
from .quadrature import gauss_unit

TERMS_SUB2 = ("torsion", "inplane", "relaxed_membrane")
ROOT_TOL = 1e-12


# --- positive part of piecewise polynomials ----------------------------------

@dataclass
class PiecewisePolynomial:
    """One polynomial per element, in the local coordinate t in [0, 1]."""

    mesh: Mesh1D
    coeffs: np.ndarray   # (n_elems, degree + 1), power basis in t

    @classmethod
    def constant(cls, mesh, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (mesh.n_elems,):
            raise ValueError("need one value per element")
        return cls(mesh, v[:, None].copy())

    def __call__(self, x):
        e, t = self.mesh.locate(x)
        c = self.coeffs[e]
        out = np.zeros_like(t)
        for j in range(c.shape[1] - 1, -1, -1):
            out = out * t + c[:, j]
        return out


def _polish(p, dp, t):
    for _ in range(8):
        d = dp(t)
        if d == 0.0:
            break
        step = p(t) / d
        t -= step
        if abs(step) < ROOT_TOL:
            break
    return t


def _sign_changes(p):
    """Roots of p strictly inside (0, 1), sorted, refined by Newton."""
    if p.degree() < 1:
        return []
    dp = p.deriv()
    out = []
    for z in p.roots():
        if abs(z.imag) > 1e-8 or not (0.0 < z.real < 1.0):
            continue
        t = min(max(_polish(p, dp, float(z.real)), 0.0), 1.0)
        if 0.0 < t < 1.0 and (not out or t - out[-1] > ROOT_TOL):
            out.append(t)
    return sorted(out)


def positive_part_energy(f, mesh=None):
    """Integral of (f^+)^2 over I, exact for piecewise polynomials.

    Each element is split at the interior roots of its polynomial and only the
    positive sub-intervals are integrated (via the exact antiderivative).
    """
    mesh = mesh or f.mesh
    h = mesh.h
    total = 0.0
    for e in range(mesh.n_elems):
        p = Polynomial(f.coeffs[e]).trim()
        brk = [0.0] + _sign_changes(p) + [1.0]
        sq = (p * p).integ()
        for a, b in zip(brk[:-1], brk[1:]):
            if p(0.5 * (a + b)) > 0.0:
                total += h[e] * (sq(b) - sq(a))
    return float(total)


def relaxed_infimum_bruteforce(f, mesh, n_cells=400, iters=20000, tol=1e-13):
    """inf over lambda >= 0 of the integral of (f + lambda)^2, by projected gradient.

    Independent check of the positive-part formula: the optimal lambda is the
    pointwise negative part of f, and the residual density is (f^+)^2.
    """
    per = -(-n_cells // mesh.n_elems)  # at least n_cells, aligned with the elements
    x = mesh.nodes
    edges = np.concatenate([np.linspace(a, b, per + 1)[:-1] for a, b in zip(x[:-1], x[1:])] + [x[-1:]])
    xm = 0.5 * (edges[:-1] + edges[1:])
    dx = np.diff(edges)
    fv = f(xm)
    lam = np.zeros_like(fv)
    step = 0.25  # gradient of the discrete objective is 2 (f + lam) dx; scaled below
    for _ in range(iters):
        new = np.maximum(lam - step * 2.0 * (fv + lam), 0.0)
        if np.max(np.abs(new - lam)) < tol:
            lam = new
            break
        lam = new
    return float(np.sum(dx * (fv + lam) ** 2))


# --- state and energy ------------------------------------------------------------

@dataclass
class SubState1D:
    mesh: Mesh1D
    xi1: np.ndarray     # n+1 nodal values
    xi2: np.ndarray     # 2(n+1) Hermite DOFs
    r: np.ndarray       # n+1
    theta: np.ndarray   # n+1
    s_a: float = 0.0
    s_b: float = 0.0

    @classmethod
    def zeros(cls, mesh):
        n = mesh.n_elems
        return cls(mesh, np.zeros(n + 1), np.zeros(2 * n + 2), np.zeros(n + 1), np.zeros(n + 1))

    def copy(self):
        return SubState1D(self.mesh, self.xi1.copy(), self.xi2.copy(), self.r.copy(),
                          self.theta.copy(), self.s_a, self.s_b)

    def eval(self, name, x, der=0):
        if name == "xi2":
            return hermite_eval(self.mesh, self.xi2, x, der)
        return linear_eval(self.mesh, getattr(self, name), x, der)

    def to_json(self):
        return {"model": "sub2", "mesh": self.mesh.to_json(), "xi1": self.xi1.tolist(),
                "xi2": self.xi2.tolist(), "r": self.r.tolist(), "theta": self.theta.tolist(),
                "s_a": float(self.s_a), "s_b": float(self.s_b)}

    @classmethod
    def from_json(cls, obj):
        mesh = Mesh1D.from_json(obj["mesh"])
        arr = lambda k: np.array(obj[k], dtype=float)
        return cls(mesh, arr("xi1"), arr("xi2"), arr("r"), arr("theta"), float(obj["s_a"]), float(obj["s_b"]))


def check_admissible_sub2(s, bc, tol=BC_TOL):
    if s.s_a < 0 or s.s_b < 0:
        raise AdmissibilityError("end slacks must be nonnegative")
    rows = [
        s.xi1[0] + s.s_a, s.xi1[-1] - bc.Lambda1 - s.s_b,
        s.xi2[0], s.xi2[1], s.xi2[-2] - bc.Lambda2, s.xi2[-1] - bc.Phi3,
        s.r[0], s.r[-1] - bc.Lambda3, s.theta[0], s.theta[-1] - bc.Phi1,
    ]
    err = max(abs(v) for v in rows)
    if err > tol:
        raise AdmissibilityError(f"state violates the essential boundary conditions by {err:.3e}")


def membrane_density(mesh, xi1, r):
    """Per-element constant xi1' + r'^2/2 for piecewise-linear xi1, r."""
    h = mesh.h
    return np.diff(xi1) / h + 0.5 * (np.diff(r) / h) ** 2


def _inplane_matrix(mesh):
    """Stiffness matrix of the integral of xi2''^2 for Hermite DOFs."""
    n = mesh.n_elems
    t, w = gauss_unit(3)
    K = np.zeros((2 * n + 2, 2 * n + 2))
    for e, h in enumerate(mesh.h):
        B = hermite_basis(t, h)[2]          # (4, q)
        Ke = (B * (h * w)) @ B.T
        K[2 * e:2 * e + 4, 2 * e:2 * e + 4] += Ke
    return K


def energy_kernel_sub2(mesh, xi1, xi2, r, theta):
    """Term values of the relaxed energy; no boundary checks (used by property tests)."""
    h = mesh.h
    f = membrane_density(mesh, xi1, r)
    K = _inplane_matrix(mesh)
    return {
        "torsion": float(np.sum((np.diff(theta) / h) ** 2 * h)),
        "inplane": float(0.5 * J1_EXACT * xi2 @ K @ xi2),
        "relaxed_membrane": 0.5 * positive_part_energy(PiecewisePolynomial.constant(mesh, f)),
    }


def energy_sub2(s, mesh=None, bc=None):
    if s.s_a < 0 or s.s_b < 0:
        raise AdmissibilityError("end slacks must be nonnegative")
    if bc is not None:
        check_admissible_sub2(s, bc)
    terms = energy_kernel_sub2(s.mesh, s.xi1, s.xi2, s.r, s.theta)
    return EnergyReport(total=float(sum(terms.values())), terms=terms)


# --- minimisation ------------------------------------------------------------------

def _closed_form_quadratics(mesh, bc):
    """theta and xi2 decouple and enter quadratically: solve them directly."""
    x = mesh.nodes
    ell = mesh.ell
    theta = bc.Phi1 * (x + ell / 2) / ell
    K = _inplane_matrix(mesh)
    N = K.shape[0]
    fixed = np.array([0, 1, N - 2, N - 1])
    vals = np.array([0.0, 0.0, bc.Lambda2, bc.Phi3])
    free = np.setdiff1d(np.arange(N), fixed)
    xi2 = np.zeros(N)
    xi2[fixed] = vals
    xi2[free] = np.linalg.solve(K[np.ix_(free, free)], -K[np.ix_(free, fixed)] @ vals)
    return theta, xi2


def _membrane_fg(z, mesh, bc):
    """Relaxed membrane energy and gradient in (xi1 all nodes, r interior nodes)."""
    n = mesh.n_elems
    h = mesh.h
    xi1 = z[: n + 1]
    r = np.concatenate([[0.0], z[n + 1:], [bc.Lambda3]])
    f = membrane_density(mesh, xi1, r)
    fp = np.maximum(f, 0.0)
    val = 0.5 * np.sum(h * fp**2)
    gx = np.zeros(n + 1)
    gx[:-1] -= fp
    gx[1:] += fp
    rp = np.diff(r) / h
    gr = np.zeros(n + 1)
    gr[:-1] -= fp * rp
    gr[1:] += fp * rp
    return val, np.concatenate([gx, gr[1:-1]])


def _projected_gradient(z, g, lo, hi):
    pg = g.copy()
    at_lo = (z <= lo) & (g > 0)
    at_hi = (z >= hi) & (g < 0)
    pg[at_lo | at_hi] = 0.0
    return pg


def minimize_sub2(bc, mesh, opts=None):
    """Minimise the relaxed energy over the admissible set; returns (state, report).

    xi1's end values are bounded (left <= 0, right >= Lambda1) and the slacks are
    read off them. The membrane part is solved by L-BFGS-B.
    """
    opts = opts or SolverOptions()
    n = mesh.n_elems
    theta, xi2 = _closed_form_quadratics(mesh, bc)
    x = mesh.nodes
    ell = mesh.ell
    lo = np.full(2 * n, -np.inf)
    hi = np.full(2 * n, np.inf)
    hi[0] = 0.0
    lo[n] = bc.Lambda1
    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))
    z0 = np.concatenate([bc.Lambda1 * (x + ell / 2) / ell, bc.Lambda3 * (x[1:-1] + ell / 2) / ell])
    tol = opts.tol * (np.sqrt(z0.size) if opts.scale_tol_by_dofs else 1.0)

    rng = np.random.default_rng(opts.seed)
    starts = [z0]
    for _ in range(max(opts.multistart, 1) - 1):
        starts.append(np.clip(z0 + 0.1 * (abs(bc.Lambda1) + abs(bc.Lambda3) + 1e-2) * rng.standard_normal(z0.size), lo, hi))
    runs = []
    for zs in starts:
        res = scipy.optimize.minimize(_membrane_fg, zs, args=(mesh, bc), jac=True, method="L-BFGS-B",
                                      bounds=bounds,
                                      options={"maxiter": max(opts.max_iter, 50) * 50, "ftol": 0.0,
                                               "gtol": 0.1 * tol, "maxcor": 30})
        f, g = _membrane_fg(res.x, mesh, bc)
        gn = float(np.linalg.norm(_projected_gradient(res.x, g, lo, hi)))
        runs.append((f, gn, res))
    f, gn, res = min(runs, key=lambda t: (t[1] > tol, t[0]))
    z = res.x
    xi1 = z[: n + 1].copy()
    r = np.concatenate([[0.0], z[n + 1:], [bc.Lambda3]])
    state = SubState1D(mesh, xi1, xi2, r, theta, s_a=float(-xi1[0]), s_b=float(xi1[-1] - bc.Lambda1))
    rep = energy_sub2(state, bc=bc)
    _, g = _membrane_fg(z, mesh, bc)
    # complementarity: a positive slack must carry no force and vice versa
    comp = max(abs(state.s_a * g[0]), abs(state.s_b * g[n]))
    converged = gn <= tol and comp <= tol
    rep.solver = {"converged": bool(converged), "iterations": int(res.nit), "grad_norm": gn,
                  "complementarity": float(comp), "tol": float(tol), "message": str(res.message)}
    if len(runs) > 1:
        rep.solver["local_minima"] = sorted({round(float(t[0]), 14) for t in runs if t[1] <= tol})
    return state, rep


def initial_state_sub2(mesh, bc):
    """Linear interpolants of the data; xi2 is the single matching cubic."""
    x = mesh.nodes
    ell = mesh.ell
    lin = lambda v: v * (x + ell / 2) / ell
    v, d = cubic_hermite_global(x, ell, 0.0, 0.0, bc.Lambda2, bc.Phi3)
    xi2 = np.empty(2 * len(x))
    xi2[0::2] = v
    xi2[1::2] = d
    return SubState1D(mesh, lin(bc.Lambda1), xi2, lin(bc.Lambda3), lin(bc.Phi1))
