"""Scaled two-dimensional von Karman ribbon energy on Omega = I x W.

All three unknowns use bicubic Hermite elements (value, d1, d2, d12 per node).
The out-of-plane field is stored as dw = w - eps*profile(x2), so the natural
state is the zero vector for every profile and the large curvature terms cancel
analytically instead of numerically.
"""

from dataclasses import dataclass
import csv
import logging

import numpy as np
import scipy.sparse

from . import kernels
from .fe1d import hermite_basis
from .fields import AnalyticField2D, Fn1D, SeparableField, X1
from .limit_beta2 import EnergyReport
from .optim import ConvergenceError, SolverOptions, newton_minimize
from .quadrature import gauss_unit

log = logging.getLogger(__name__)

QUAD_1D = 4
FIELDS = ("dw", "u1", "u2")
# derivative orders (in x1, x2) of the basis tables
DERIVS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
# node DOF kinds: value, d1, d2, d12 as (order in x1, order in x2)
KINDS = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class ScaledParams:
    eps: float
    beta: float = 2.0
    ell: float = 1.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.eps > 1:
            raise ValueError("eps must not exceed 1")
        if not 0 < self.beta <= 2:
            raise ValueError("beta must lie in (0, 2]")
        if not self.ell > 0:
            raise ValueError("ell must be positive")


@dataclass(frozen=True)
class Grid2D:
    """Uniform n1 x n2 tensor grid of I x W."""

    n1: int
    n2: int
    ell: float = 1.0

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("grid needs at least 2 x 2 elements")
        if not self.ell > 0:
            raise ValueError("ell must be positive")

    @property
    def x1(self):
        return np.linspace(-self.ell / 2, self.ell / 2, self.n1 + 1)

    @property
    def x2(self):
        return np.linspace(-0.5, 0.5, self.n2 + 1)

    @property
    def h1(self):
        return self.ell / self.n1

    @property
    def h2(self):
        return 1.0 / self.n2

    @property
    def n_nodes(self):
        return (self.n1 + 1) * (self.n2 + 1)

    @property
    def n_elems(self):
        return self.n1 * self.n2

    @property
    def n_dofs(self):
        return 12 * self.n_nodes

    def node_coords(self):
        X1g, X2g = np.meshgrid(self.x1, self.x2, indexing="ij")
        return X1g.ravel(), X2g.ravel()

    def edge_nodes(self, side):
        i1 = 0 if side == "left" else self.n1
        return i1 * (self.n2 + 1) + np.arange(self.n2 + 1)

    def dof_map(self):
        """(n_elems, 48) global DOF indices, blocks [dw | u1 | u2] of 16 each."""
        e1, e2 = np.divmod(np.arange(self.n_elems), self.n2)
        local = []
        for L in range(4):
            a, b = divmod(L, 2)
            local.append((e1 + a) * (self.n2 + 1) + (e2 + b))
        nodes = np.stack(local, axis=1)                        # (ne, 4)
        out = np.empty((self.n_elems, 48), dtype=np.int64)
        for f in range(3):
            for L in range(4):
                for k in range(4):
                    out[:, 16 * f + 4 * L + k] = 12 * nodes[:, L] + 4 * f + k
        return out

    def to_json(self):
        return {"n1": self.n1, "n2": self.n2, "ell": self.ell}


class _Tables:
    def __init__(self, grid, nq):
        t, w = gauss_unit(nq)
        H1 = hermite_basis(t, grid.h1)   # (4, 4, nq)
        H2 = hermite_basis(t, grid.h2)
        T = np.empty((6, 16, nq * nq))
        for d, (i, j) in enumerate(DERIVS):
            for L in range(4):
                a, b = divmod(L, 2)
                for k, (p, q) in enumerate(KINDS):
                    T[d, 4 * L + k] = np.outer(H1[i, 2 * a + p], H2[j, 2 * b + q]).ravel()
        self.T = T
        self.wq = grid.h1 * grid.h2 * np.outer(w, w).ravel()
        e1, e2 = np.divmod(np.arange(grid.n_elems), grid.n2)
        T1, T2 = np.meshgrid(t, t, indexing="ij")
        self.x1 = grid.x1[e1][:, None] + grid.h1 * T1.ravel()[None, :]
        self.x2 = grid.x2[e2][:, None] + grid.h2 * T2.ravel()[None, :]
        self.dof_map = grid.dof_map()


_TABLES = {}


def tables(grid, nq=QUAD_1D):
    key = (grid, nq)
    if key not in _TABLES:
        _TABLES[key] = _Tables(grid, nq)
    return _TABLES[key]


@dataclass
class Field2D:
    """Nodal Hermite DOFs, each array (n_nodes, 4) ordered (value, d1, d2, d12)."""

    grid: Grid2D
    eps: float
    dw: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    @classmethod
    def zeros(cls, grid, eps):
        z = lambda: np.zeros((grid.n_nodes, 4))
        return cls(grid, float(eps), z(), z(), z())

    natural = zeros

    @property
    def vector(self):
        return np.hstack([self.dw, self.u1, self.u2]).ravel()

    @classmethod
    def from_vector(cls, grid, eps, v):
        a = np.asarray(v, dtype=float).reshape(grid.n_nodes, 12)
        return cls(grid, float(eps), a[:, 0:4].copy(), a[:, 4:8].copy(), a[:, 8:12].copy())

    def copy(self):
        return Field2D.from_vector(self.grid, self.eps, self.vector)

    @classmethod
    def interpolate(cls, analytic, grid):
        """Hermite interpolant of an analytic field at the grid nodes."""
        x1, x2 = grid.node_coords()
        nod = analytic.nodal(x1, x2)
        return cls(grid, analytic.eps, nod["dw"], nod["u1"], nod["u2"])

    def w_nodal(self, prof):
        _, x2 = self.grid.node_coords()
        return self.dw[:, 0] + self.eps * prof(x2)

    def local(self):
        tab = tables(self.grid)
        v = self.vector[tab.dof_map]
        return v[:, :16], v[:, 16:32], v[:, 32:]

    def derivs(self, x1=None, x2=None, nq=QUAD_1D):
        """Derivatives at the quadrature points of every element (x1, x2 ignored)."""
        tab = tables(self.grid, nq)
        v = self.vector[tab.dof_map]
        W, U1, U2 = v[:, :16], v[:, 16:32], v[:, 32:]
        T = tab.T
        return {
            "dw1": W @ T[1], "dw2": W @ T[2], "dw11": W @ T[3], "dw12": W @ T[4], "dw22": W @ T[5],
            "u11": U1 @ T[1], "u12": U1 @ T[2], "u21": U2 @ T[1], "u22": U2 @ T[2],
        }

    def to_csv(self, path, prof):
        x1, x2 = self.grid.node_coords()
        w = self.w_nodal(prof)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x1", "x2", "u1", "u2", "w"])
            for row in zip(x1, x2, self.u1[:, 0], self.u2[:, 0], w):
                wr.writerow([f"{v:.17g}" for v in row])

    def to_json(self):
        return {"model": "vk2d", "grid": self.grid.to_json(), "eps": self.eps,
                "dw": self.dw.tolist(), "u1": self.u1.tolist(), "u2": self.u2.tolist()}

    @classmethod
    def from_json(cls, obj):
        g = Grid2D(**obj["grid"])
        arr = lambda k: np.array(obj[k], dtype=float).reshape(g.n_nodes, 4)
        return cls(g, float(obj["eps"]), arr("dw"), arr("u1"), arr("u2"))


# --- scaled operators and densities ------------------------------------------------

def scaled_gradient(d1, d2, eps):
    return d1, d2 / eps


def scaled_hessian(d11, d12, d22, eps):
    """Entries (11, 12, 22) of the scaled Hessian."""
    return d11, d12 / eps, d22 / eps**2


def scaled_strain(u11, u12, u21, u22, eps):
    return u11, 0.5 * (u12 + u21) / eps, u22 / eps**2


def densities(D, wp, p):
    """Bending matrix and membrane tensor entries from derivatives of (dw, u1, u2)."""
    eps, a = p.eps, p.eps ** (-p.beta)
    B11, B12, B22 = scaled_hessian(D["dw11"], D["dw12"], D["dw22"], eps)
    E11, E12, E22 = scaled_strain(D["u11"], D["u12"], D["u21"], D["u22"], eps)
    g1 = D["dw1"]
    w2 = D["dw2"] + eps * wp
    S11 = a * (E11 + 0.5 * g1**2)
    S12 = a * (E12 + 0.5 * g1 * w2 / eps)
    # (w2/eps)^2/2 - profile'^2/2 expanded so the natural state gives exactly zero
    S22 = a * (E22 + wp * D["dw2"] / eps + 0.5 * D["dw2"] ** 2 / eps**2)
    return (B11, B12, B22), (S11, S12, S22)


def quadrature_points(grid, nq):
    tab = tables(grid, nq)
    return tab.x1, tab.x2, tab.wq


def _evaluate(field, p, prof, grid, nq):
    x1, x2, wq = quadrature_points(grid, nq)
    if isinstance(field, Field2D):
        D = field.derivs(nq=nq)
    else:
        D = field.derivs(x1, x2)
    wp = prof(x2, 1)
    B, S = densities(D, wp, p)
    return B, S, wq


def membrane_components(field, p, prof, grid=None, nq=QUAD_1D):
    """S11, S12, S22 at all quadrature points, plus the points and weights."""
    grid = grid or field.grid
    _, S, wq = _evaluate(field, p, prof, grid, nq)
    x1, x2, _ = quadrature_points(grid, nq)
    return {"S11": S[0], "S12": S[1], "S22": S[2], "x1": x1, "x2": x2, "weights": wq}


def energy_eps(field, p, prof, grid=None, nq=QUAD_1D):
    """Bending and membrane energy of a discrete or analytic field.

    Analytic fields (anything with ``derivs(x1, x2)``) need ``grid`` for the
    quadrature cells; ``nq`` points per direction per element.
    """
    if not p.eps > 0:
        raise ValueError("eps must be positive")
    grid = grid or field.grid
    (B11, B12, B22), (S11, S12, S22), wq = _evaluate(field, p, prof, grid, nq)
    bending = 0.5 * float(np.sum(wq * (B11**2 + 2 * B12**2 + B22**2)))
    membrane = 0.5 * float(np.sum(wq * (S11**2 + 2 * S12**2 + S22**2)))
    extra = {
        "S11_L2": float(np.sqrt(np.sum(wq * S11**2))),
        "S12_L2": float(np.sqrt(np.sum(wq * S12**2))),
        "S22_L2": float(np.sqrt(np.sum(wq * S22**2))),
    }
    return EnergyReport(total=bending + membrane, terms={"bending": bending, "membrane": membrane}, extra=extra)


def _energy_value(field, p, prof):
    (B11, B12, B22), (S11, S12, S22), wq = _evaluate(field, p, prof, field.grid, QUAD_1D)
    return 0.5 * float(np.sum(wq * (B11**2 + 2 * B12**2 + B22**2 + S11**2 + 2 * S12**2 + S22**2)))


# --- gradient and Hessian ------------------------------------------------------------

def _element_arrays(field, p, prof, want_hess):
    tab = tables(field.grid)
    W, U1, U2 = field.local()
    wp = prof(tab.x2, 1)
    return tab, kernels.element_grad_hess(W, U1, U2, tab.T, tab.wq, wp, p.eps, p.beta, want_hess)


def gradient_eps(field, p, prof):
    """Gradient of the discrete energy over all DOFs (compiled kernel when available)."""
    tab, (ge, _) = _element_arrays(field, p, prof, False)
    g = np.zeros(field.grid.n_dofs)
    np.add.at(g, tab.dof_map.ravel(), ge.ravel())
    return g


def hessian_eps(field, p, prof):
    tab, (ge, He) = _element_arrays(field, p, prof, True)
    dm = tab.dof_map
    rows = np.repeat(dm, 48, axis=1).ravel()
    cols = np.tile(dm, (1, 48)).ravel()
    n = field.grid.n_dofs
    return scipy.sparse.coo_matrix((He.ravel(), (rows, cols)), shape=(n, n)).tocsc()


# --- boundary conditions ---------------------------------------------------------------

def edge_traces(bc, p, prof, x2):
    """Right-edge traces of (dw, d1 dw, u1, d2 u1, u2, d2 u2) at the given x2."""
    e, b = p.eps, p.beta
    wv, wd = prof(x2), prof(x2, 1)
    dw = e ** (b / 2) * bc.Lambda3 + e * x2 * bc.Phi1
    dw1 = np.full_like(x2, e ** (b / 2) * bc.Phi2)
    u1 = e**b * bc.Lambda1 - e ** (1 + b / 2) * bc.Phi2 * wv - (e ** (1 + b / 2) * bc.Phi2 * bc.Phi1 + e**b * bc.Phi3) * x2
    u1_2 = -e ** (1 + b / 2) * bc.Phi2 * wd - (e ** (1 + b / 2) * bc.Phi2 * bc.Phi1 + e**b * bc.Phi3)
    u2 = e**b * bc.Lambda2 - e**2 * bc.Phi1 * wv - e**2 * bc.Phi1**2 * x2 / 2
    u2_2 = -e**2 * bc.Phi1 * wd - e**2 * bc.Phi1**2 / 2
    return dw, dw1, u1, u1_2, u2, u2_2


def fixed_dofs_eps(grid, bc, p, prof):
    """Indices and values of all edge DOFs fixed by the clamping conditions."""
    if abs(grid.x1[0] + p.ell / 2) > 1e-14 or abs(grid.x1[-1] - p.ell / 2) > 1e-14 or grid.ell != p.ell:
        raise ValueError("grid edges do not coincide with the ends of I")
    x2 = grid.x2
    idx, vals = [], []
    zero = np.zeros_like(x2)
    for side in ("left", "right"):
        nodes = grid.edge_nodes(side)
        if side == "left":
            dw, dw1, u1, u1_2, u2, u2_2 = zero, zero, zero, zero, zero, zero
            dw2 = zero
        else:
            dw, dw1, u1, u1_2, u2, u2_2 = edge_traces(bc, p, prof, x2)
            dw2 = np.full_like(x2, p.eps * bc.Phi1)
        base = 12 * nodes
        for off, v in ((0, dw), (1, dw1), (2, dw2), (3, zero),
                       (4, u1), (6, u1_2), (8, u2), (10, u2_2)):
            idx.append(base + off)
            vals.append(np.broadcast_to(v, x2.shape))
    return np.concatenate(idx), np.concatenate(vals)


def apply_bc_eps(field, bc, p, prof):
    """Copy of ``field`` with the edge DOFs set to the prescribed traces."""
    idx, vals = fixed_dofs_eps(field.grid, bc, p, prof)
    v = field.vector
    v[idx] = vals
    return Field2D.from_vector(field.grid, p.eps, v)


def initial_field(bc, p, prof, grid):
    """Smooth blend of the edge data: cubic in x1 for dw, linear in x1 for u."""
    e, b, ell = p.eps, p.beta, p.ell
    s = (X1 + ell / 2) * (1.0 / ell)
    hv = s * s * (3.0 - 2.0 * s)                 # value 0 -> 1, zero end slopes
    hd = s * s * (s - 1.0) * ell                 # zero values, slope 0 -> 1
    x2 = Fn1D.poly(np.polynomial.Polynomial([0.0, 1.0]))
    wfun = Fn1D(lambda x, d: prof(x, d), max_der=99)
    dw = SeparableField([(hv * (e ** (b / 2) * bc.Lambda3) + hd * (e ** (b / 2) * bc.Phi2), 1.0),
                         (hv * (e * bc.Phi1), x2)])
    u1 = SeparableField([(s * (e**b * bc.Lambda1), 1.0), (s * (-e ** (1 + b / 2) * bc.Phi2), wfun),
                         (s * (-(e ** (1 + b / 2) * bc.Phi2 * bc.Phi1 + e**b * bc.Phi3)), x2)])
    u2 = SeparableField([(s * (e**b * bc.Lambda2), 1.0), (s * (-e**2 * bc.Phi1), wfun),
                         (s * (-e**2 * bc.Phi1**2 / 2), x2)])
    f = Field2D.interpolate(AnalyticField2D(dw, u1, u2, e), grid)
    return apply_bc_eps(f, bc, p, prof)


def rescale_field(field, p_from, p_to):
    """Transfer a state between eps values using the scaling of the boundary data."""
    r = p_to.eps / p_from.eps
    b = p_to.beta
    return Field2D(field.grid, p_to.eps, field.dw * r ** (b / 2), field.u1 * r**b, field.u2 * r**b)


# --- minimisation -------------------------------------------------------------------------

def _solve_one(bc, p, prof, grid, opts, x0):
    idx, vals = fixed_dofs_eps(grid, bc, p, prof)
    mask = np.ones(grid.n_dofs, dtype=bool)
    mask[idx] = False
    base = apply_bc_eps(x0, bc, p, prof).vector

    def expand(z):
        v = base.copy()
        v[mask] = z
        return Field2D.from_vector(grid, p.eps, v)

    fun = lambda z: _energy_value(expand(z), p, prof)
    grad = lambda z: gradient_eps(expand(z), p, prof)[mask]
    hess = lambda z: hessian_eps(expand(z), p, prof)[mask][:, mask]
    res = newton_minimize(fun, grad, hess, base[mask], opts)
    return expand(res.x), res


def buckled_field(bc, p, prof, grid):
    """Blend start plus the first clamped Euler mode in w, sized to take up the end shortening."""
    f = initial_field(bc, p, prof, grid)
    x1, _ = grid.node_coords()
    L = p.ell
    k = 2 * np.pi / L
    amp = p.eps ** (p.beta / 2) * 2 * np.sqrt(abs(bc.Lambda1) / L) / k
    s = x1 + L / 2
    f.dw[:, 0] += amp * (1 - np.cos(k * s)) / 2
    f.dw[:, 1] += amp * k * np.sin(k * s) / 2
    return f


def continuation_schedule(target, start=0.2):
    """eps values halving from ``start`` down to (and ending at) ``target``."""
    sched = []
    e = start
    while e > target * (1 + 1e-12):
        sched.append(e)
        e /= 2
    sched.append(target)
    return sched


def minimize_eps(bc, p, prof, grid, opts=None, x0=None, continuation=False, raise_on_failure=False):
    """Minimise the discrete 2D energy; returns (field, report).

    Starts: ``x0`` if given (e.g. a recovery field) and the smooth blend of the
    edge data; the lower converged energy wins. With ``continuation`` the blend
    start is first relaxed along a halving eps schedule from 0.2.
    """
    opts = opts or SolverOptions()
    starts = []
    if x0 is not None:
        starts.append(("warm", x0))
    if continuation and p.eps < 0.2:
        sched = continuation if isinstance(continuation, (list, tuple)) else continuation_schedule(p.eps)
        prev_p = ScaledParams(sched[0], p.beta, p.ell)
        f = initial_field(bc, prev_p, prof, grid)
        for e in sched[:-1]:
            q = ScaledParams(e, p.beta, p.ell)
            f = rescale_field(f, prev_p, q)
            f, _ = _solve_one(bc, q, prof, grid, opts, f)
            prev_p = q
        starts.append(("continuation", rescale_field(f, prev_p, p)))
    starts.append(("blend", initial_field(bc, p, prof, grid)))

    if bc.Lambda1 < 0:
        starts.append(("buckled", buckled_field(bc, p, prof, grid)))

    rng = np.random.default_rng(opts.seed)
    for i in range(max(opts.multistart, 1) - 1):
        f0 = initial_field(bc, p, prof, grid)
        v = f0.vector
        v += 1e-2 * p.eps * rng.standard_normal(v.size)
        starts.append((f"random{i + 1}", Field2D.from_vector(grid, p.eps, v)))

    runs = []
    for name, f0 in starts:
        f, res = _solve_one(bc, p, prof, grid, opts, f0)
        runs.append((name, f, res))
        log.info("vk2d start %s: E=%.10g converged=%s", name, res.f, res.converged)
    name, field, res = min(runs, key=lambda t: (not t[2].converged, t[2].f))
    rep = energy_eps(field, p, prof)
    rep.solver = res.summary()
    rep.solver["start"] = name
    rep.solver["history"] = [float(v) for v in res.history]
    rep.solver["starts"] = {n: {"energy": float(r.f), "converged": bool(r.converged)} for n, _, r in runs}
    if raise_on_failure and not res.converged:
        raise ConvergenceError(f"2D minimisation did not converge: {res.message}, |g|={res.gnorm:.3e}", res)
    return field, rep


def natural_field(grid, eps):
    return Field2D.zeros(grid, eps)
