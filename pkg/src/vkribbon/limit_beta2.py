"""Discretisation and minimisation of the critical (beta = 2) one-dimensional limit energy.

Unknowns: xi1 (continuous P2), and xi2, r, theta (cubic Hermite). The energy
density is a weighted sum of squares of residuals that are at most quadratic in
the unknowns, which makes exact gradients and Hessians cheap to assemble.
"""

from dataclasses import dataclass, field

import numpy as np

from .fe1d import (Mesh1D, cubic_hermite_global, hermite_basis, hermite_eval, hermite_interpolate,
                   quadratic_basis, quadratic_eval, quadratic_interpolate)
from .optim import SolverOptions, newton_minimize
from .quadrature import gauss_unit

QUAD_POINTS = 5
BC_TOL = 1e-12

TERMS_BETA2 = ("torsion", "membrane", "inplane", "coupling", "flexural", "warping")

# local slot layout within an element: xi1 (3), xi2 (4), r (4), theta (4)
S_XI1 = slice(0, 3)
S_XI2 = slice(3, 7)
S_R = slice(7, 11)
S_TH = slice(11, 15)
N_LOCAL = 15


class AdmissibilityError(ValueError):
    """A state violates the essential boundary conditions or subspace restriction."""


@dataclass(frozen=True)
class BoundaryData:
    Lambda1: float = 0.0
    Lambda2: float = 0.0
    Lambda3: float = 0.0
    Phi1: float = 0.0
    Phi2: float = 0.0
    Phi3: float = 0.0

    def __post_init__(self):
        for k, v in self.to_json().items():
            if not np.isfinite(v):
                raise ValueError(f"boundary datum {k} must be finite")

    def to_json(self):
        return {k: float(getattr(self, k)) for k in ("Lambda1", "Lambda2", "Lambda3", "Phi1", "Phi2", "Phi3")}

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: float(v) for k, v in obj.items()})

    def is_zero(self):
        return all(v == 0.0 for v in self.to_json().values())


@dataclass
class EnergyReport:
    total: float
    terms: dict
    solver: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self):
        out = {"total": float(self.total), "terms": {k: float(v) for k, v in self.terms.items()}}
        if self.extra:
            out["extra"] = {k: float(v) for k, v in self.extra.items()}
        if self.solver:
            out["solver"] = self.solver
        return out


@dataclass
class LimitState1D:
    mesh: Mesh1D
    xi1: np.ndarray
    xi2: np.ndarray
    r: np.ndarray
    theta: np.ndarray

    @classmethod
    def zeros(cls, mesh):
        n = mesh.n_elems
        return cls(mesh, np.zeros(2 * n + 1), np.zeros(2 * n + 2), np.zeros(2 * n + 2), np.zeros(2 * n + 2))

    @property
    def vector(self):
        return np.concatenate([self.xi1, self.xi2, self.r, self.theta])

    @classmethod
    def from_vector(cls, mesh, v):
        o = _offsets(mesh)
        v = np.asarray(v, dtype=float)
        return cls(mesh, v[o[0]:o[1]].copy(), v[o[1]:o[2]].copy(), v[o[2]:o[3]].copy(), v[o[3]:o[4]].copy())

    def copy(self):
        return LimitState1D.from_vector(self.mesh, self.vector)

    # callables used by recovery constructions
    def eval(self, name, x, der=0):
        if name == "xi1":
            return quadratic_eval(self.mesh, self.xi1, x, der)
        return hermite_eval(self.mesh, getattr(self, name), x, der)

    @classmethod
    def from_polynomials(cls, mesh, xi1, xi2, r, theta):
        """Interpolate numpy Polynomials (exact for deg xi1 <= 2, others <= 3)."""
        herm = lambda p: hermite_interpolate(mesh, p, p.deriv())
        return cls(mesh, quadratic_interpolate(mesh, xi1), herm(xi2), herm(r), herm(theta))

    def to_json(self):
        return {"model": "beta2", "mesh": self.mesh.to_json(),
                "xi1": self.xi1.tolist(), "xi2": self.xi2.tolist(),
                "r": self.r.tolist(), "theta": self.theta.tolist()}

    @classmethod
    def from_json(cls, obj):
        mesh = Mesh1D.from_json(obj["mesh"])
        return cls(mesh, *(np.array(obj[k], dtype=float) for k in ("xi1", "xi2", "r", "theta")))


def _offsets(mesh):
    n = mesh.n_elems
    a = 2 * n + 1
    b = a + 2 * n + 2
    c = b + 2 * n + 2
    d = c + 2 * n + 2
    return (0, a, b, c, d)


def n_dofs(mesh):
    return _offsets(mesh)[-1]


def local_to_global(mesh):
    n = mesh.n_elems
    o = _offsets(mesh)
    e = np.arange(n)[:, None]
    xi1 = 2 * e + np.arange(3)
    herm = 2 * e + np.arange(4)
    return np.hstack([o[0] + xi1, o[1] + herm, o[2] + herm, o[3] + herm])


def fixed_dofs(mesh, bc, subspace=None):
    """Indices and values of the essential conditions; ``subspace`` freezes whole fields."""
    o = _offsets(mesh)
    idx = {
        o[0]: 0.0, o[1] - 1: bc.Lambda1,
        o[1]: 0.0, o[1] + 1: 0.0, o[2] - 2: bc.Lambda2, o[2] - 1: bc.Phi3,
        o[2]: 0.0, o[2] + 1: 0.0, o[3] - 2: bc.Lambda3, o[3] - 1: bc.Phi2,
        o[3]: 0.0, o[3] + 1: 0.0, o[4] - 2: bc.Phi1, o[4] - 1: 0.0,
    }
    frozen = {"torsion": (0, 1, 2), "flexure": (0, 1, 3)}.get(subspace, ())
    for f in frozen:
        for i in range(o[f], o[f + 1]):
            idx[i] = 0.0
    keys = np.array(sorted(idx))
    return keys, np.array([idx[k] for k in keys])


def check_subspace_data(bc, subspace):
    if subspace == "torsion":
        bad = [bc.Lambda1, bc.Lambda2, bc.Lambda3, bc.Phi2, bc.Phi3]
    elif subspace == "flexure":
        bad = [bc.Lambda1, bc.Lambda2, bc.Phi1, bc.Phi3]
    else:
        return
    if any(v != 0.0 for v in bad):
        raise AdmissibilityError(f"boundary data incompatible with the {subspace} subspace")


class _Tables:
    """Basis values at Gauss points, per element."""

    def __init__(self, mesh, nq=QUAD_POINTS):
        t, w = gauss_unit(nq)
        h = mesh.h[:, None]
        self.weights = h * w[None, :]
        self.x = mesh.nodes[:-1, None] + h * t[None, :]
        Hb = hermite_basis(t[None, :], h)          # (4, 4, e, q)
        Pb = quadratic_basis(t[None, :], h)         # (3, 3, e, q)
        self.H = np.moveaxis(Hb[0], 0, -1)          # (e, q, 4)
        self.Hp = np.moveaxis(Hb[1], 0, -1)
        self.Hpp = np.moveaxis(Hb[2], 0, -1)
        self.Pp = np.moveaxis(Pb[1], 0, -1)
        self.l2g = local_to_global(mesh)


_TABLE_CACHE = {}


def tables(mesh):
    key = (mesh.ell, tuple(mesh.nodes))
    tab = _TABLE_CACHE.get(key)
    if tab is None:
        tab = _TABLE_CACHE[key] = _Tables(mesh)
    return tab


def _fields_at_qp(tab, loc):
    q = {}
    q["x1p"] = np.einsum("eqk,ek->eq", tab.Pp, loc[:, S_XI1])
    q["x2pp"] = np.einsum("eqk,ek->eq", tab.Hpp, loc[:, S_XI2])
    q["rp"] = np.einsum("eqk,ek->eq", tab.Hp, loc[:, S_R])
    q["rpp"] = np.einsum("eqk,ek->eq", tab.Hpp, loc[:, S_R])
    q["th"] = np.einsum("eqk,ek->eq", tab.H, loc[:, S_TH])
    q["t"] = np.einsum("eqk,ek->eq", tab.Hp, loc[:, S_TH])
    q["tt"] = np.einsum("eqk,ek->eq", tab.Hpp, loc[:, S_TH])
    return q


def _residuals(q, k):
    """Energy density = sum of coef/2 * rho^2 over the six terms."""
    return {
        "torsion": (2.0, q["t"]),
        "membrane": (1.0, q["x1p"] + 0.5 * q["rp"] ** 2 + q["t"] ** 2 / 24.0),
        "inplane": (k.J1, q["x2pp"] + q["rpp"] * q["th"] + k.c1 * q["tt"]),
        "coupling": (k.J2, k.c2 * q["rpp"] - q["t"] ** 2),
        "flexural": (k.J3, q["rpp"]),
        "warping": (k.J4, q["tt"]),
    }


def _residual_grads(tab, q, k):
    """Gradient (e, q, 15) and constant/affine Hessian parts of each residual."""
    e, nq = q["t"].shape
    Z = lambda: np.zeros((e, nq, N_LOCAL))
    out = {}

    g = Z(); g[..., S_TH] = tab.Hp
    out["torsion"] = (g, [])

    g = Z()
    g[..., S_XI1] = tab.Pp
    g[..., S_R] = q["rp"][..., None] * tab.Hp
    g[..., S_TH] = (q["t"] / 12.0)[..., None] * tab.Hp
    out["membrane"] = (g, [(1.0, S_R, tab.Hp, S_R, tab.Hp), (1.0 / 12.0, S_TH, tab.Hp, S_TH, tab.Hp)])

    g = Z()
    g[..., S_XI2] = tab.Hpp
    g[..., S_R] = q["th"][..., None] * tab.Hpp
    g[..., S_TH] = q["rpp"][..., None] * tab.H + k.c1 * tab.Hpp
    out["inplane"] = (g, [(1.0, S_R, tab.Hpp, S_TH, tab.H), (1.0, S_TH, tab.H, S_R, tab.Hpp)])

    g = Z()
    g[..., S_R] = k.c2 * tab.Hpp
    g[..., S_TH] = -2.0 * q["t"][..., None] * tab.Hp
    out["coupling"] = (g, [(-2.0, S_TH, tab.Hp, S_TH, tab.Hp)])

    g = Z(); g[..., S_R] = tab.Hpp
    out["flexural"] = (g, [])

    g = Z(); g[..., S_TH] = tab.Hpp
    out["warping"] = (g, [])
    return out


def _local(state):
    tab = tables(state.mesh)
    return tab, state.vector[tab.l2g]


def check_admissible(state, bc, subspace=None, tol=BC_TOL):
    idx, vals = fixed_dofs(state.mesh, bc, subspace)
    err = np.max(np.abs(state.vector[idx] - vals))
    if err > tol:
        raise AdmissibilityError(f"state violates the essential boundary conditions by {err:.3e}")


def energy_terms(state, k):
    tab, loc = _local(state)
    q = _fields_at_qp(tab, loc)
    res = _residuals(q, k)
    return {name: float(np.sum(tab.weights * 0.5 * c * rho**2)) for name, (c, rho) in res.items()}


def energy_beta2(state, k, mesh=None, bc=None, subspace=None):
    """Energy report of a discrete state. ``bc`` enables the admissibility check."""
    if bc is not None:
        check_admissible(state, bc, subspace)
    terms = energy_terms(state, k)
    return EnergyReport(total=float(sum(terms.values())), terms=terms)


def full_gradient(state, k):
    tab, loc = _local(state)
    q = _fields_at_qp(tab, loc)
    res = _residuals(q, k)
    grads = _residual_grads(tab, q, k)
    gl = np.zeros(loc.shape)
    for name, (c, rho) in res.items():
        G = grads[name][0]
        gl += np.einsum("eq,eqi->ei", tab.weights * c * rho, G)
    g = np.zeros(n_dofs(state.mesh))
    np.add.at(g, tab.l2g, gl)
    return g


def full_hessian(state, k):
    tab, loc = _local(state)
    q = _fields_at_qp(tab, loc)
    res = _residuals(q, k)
    grads = _residual_grads(tab, q, k)
    Hl = np.zeros(loc.shape + (N_LOCAL,))
    for name, (c, rho) in res.items():
        G, parts = grads[name]
        wc = tab.weights * c
        Hl += np.einsum("eq,eqi,eqj->eij", wc, G, G)
        for s, sa, A, sb, B in parts:
            Hl[:, sa, sb] += np.einsum("eq,eqi,eqj->eij", s * wc * rho, A, B)
    N = n_dofs(state.mesh)
    H = np.zeros((N, N))
    rows = np.repeat(tab.l2g[:, :, None], N_LOCAL, axis=2)
    cols = np.repeat(tab.l2g[:, None, :], N_LOCAL, axis=1)
    np.add.at(H, (rows.ravel(), cols.ravel()), Hl.ravel())
    return H


def free_mask(mesh, bc, subspace=None):
    idx, _ = fixed_dofs(mesh, bc, subspace)
    mask = np.ones(n_dofs(mesh), dtype=bool)
    mask[idx] = False
    return mask


def gradient_beta2(state, k, mesh=None, bc=None, subspace=None):
    """Gradient of the discrete energy with respect to the free DOFs."""
    if bc is None:
        bc = infer_bc(state)
    else:
        check_admissible(state, bc, subspace)
    return full_gradient(state, k)[free_mask(state.mesh, bc, subspace)]


def infer_bc(state):
    """Boundary data read off the end DOFs of a state."""
    return BoundaryData(Lambda1=state.xi1[-1], Lambda2=state.xi2[-2], Lambda3=state.r[-2],
                        Phi1=state.theta[-2], Phi2=state.r[-1], Phi3=state.xi2[-1])


def initial_guess(mesh, bc, subspace=None):
    """Linear xi1 and the single cubic matching each field's end conditions."""
    s = LimitState1D.zeros(mesh)
    x = mesh.nodes
    xm = np.empty(2 * len(x) - 1)
    xm[0::2] = x
    xm[1::2] = 0.5 * (x[:-1] + x[1:])
    ell = mesh.ell
    s.xi1 = bc.Lambda1 * (xm + ell / 2) / ell
    for name, (vb, db) in {"xi2": (bc.Lambda2, bc.Phi3), "r": (bc.Lambda3, bc.Phi2), "theta": (bc.Phi1, 0.0)}.items():
        v, d = cubic_hermite_global(x, ell, 0.0, 0.0, vb, db)
        arr = np.empty(2 * len(x))
        arr[0::2] = v
        arr[1::2] = d
        setattr(s, name, arr)
    idx, vals = fixed_dofs(mesh, bc, subspace)
    vec = s.vector
    vec[idx] = vals
    return LimitState1D.from_vector(mesh, vec)


def minimize_beta2(bc, k, mesh, opts=None, subspace=None, x0=None):
    """Minimise the discrete beta = 2 energy; returns (state, report).

    ``subspace`` in {None, "torsion", "flexure"} restricts the unknowns to the
    decoupled special cases. The report's ``solver`` entry records convergence;
    with ``opts.multistart > 1`` all local minima found are listed.
    """
    opts = opts or SolverOptions()
    check_subspace_data(bc, subspace)
    base = x0 if x0 is not None else initial_guess(mesh, bc, subspace)
    mask = free_mask(mesh, bc, subspace)
    full0 = base.vector
    idx, vals = fixed_dofs(mesh, bc, subspace)
    full0[idx] = vals

    def expand(z):
        v = full0.copy()
        v[mask] = z
        return LimitState1D.from_vector(mesh, v)

    fun = lambda z: sum(energy_terms(expand(z), k).values())
    grad = lambda z: full_gradient(expand(z), k)[mask]
    hess = lambda z: full_hessian(expand(z), k)[np.ix_(mask, mask)]

    rng = np.random.default_rng(opts.seed)
    starts = [full0[mask]]
    for _ in range(max(opts.multistart, 1) - 1):
        amp = 0.1 * (np.max(np.abs(full0)) + 1e-3)
        starts.append(full0[mask] + amp * rng.standard_normal(mask.sum()))
    results = [newton_minimize(fun, grad, hess, z0, opts) for z0 in starts]
    best = min(results, key=lambda r: (not r.converged, r.f))
    state = expand(best.x)
    rep = energy_beta2(state, k)
    rep.solver = best.summary()
    rep.solver["history"] = [float(v) for v in best.history]
    if len(results) > 1:
        rep.solver["local_minima"] = sorted({round(float(r.f), 14) for r in results if r.converged})
    return state, rep


# --- Euler-Lagrange residuals of the decoupled special cases -------------------

def _subspace_of(state, tol=0.0):
    z = lambda a: np.max(np.abs(a)) <= tol
    if z(state.xi1) and z(state.xi2) and z(state.r):
        return "torsion"
    if z(state.xi1) and z(state.xi2) and z(state.theta):
        return "flexure"
    return None


def _weak_residual(mesh, dofs, flux1, stiff2):
    """Vector of int flux1(v') phi' + stiff2 v'' phi'' over interior Hermite test functions."""
    tab = tables(mesh)
    loc = dofs[2 * np.arange(mesh.n_elems)[:, None] + np.arange(4)]
    vp = np.einsum("eqk,ek->eq", tab.Hp, loc)
    vpp = np.einsum("eqk,ek->eq", tab.Hpp, loc)
    rl = np.einsum("eq,eqi->ei", tab.weights * flux1(vp), tab.Hp)
    rl += np.einsum("eq,eqi->ei", tab.weights * stiff2 * vpp, tab.Hpp)
    R = np.zeros(2 * (mesh.n_elems + 1))
    np.add.at(R, 2 * np.arange(mesh.n_elems)[:, None] + np.arange(4), rl)
    return R[2:-2]


def el_residuals(state, k, mesh=None):
    """Discrete weak-form residual norms of the torsion and flexure equations."""
    kind = _subspace_of(state)
    if kind is None:
        raise AdmissibilityError("Euler-Lagrange residuals need a pure torsion or pure flexure state")
    out = {"torsion_residual": 0.0, "flexure_residual": 0.0}
    if np.any(state.theta != 0) or kind == "torsion":
        R = _weak_residual(state.mesh, state.theta, lambda t: 2.0 * t + t**3 / 160.0, k.warping_stiffness)
        out["torsion_residual"] = float(np.linalg.norm(R))
    if np.any(state.r != 0) or kind == "flexure":
        R = _weak_residual(state.mesh, state.r, lambda s: 0.5 * s**3,
                           (720.0 * k.J3 + k.c2**2) / 720.0)
        out["flexure_residual"] = float(np.linalg.norm(R))
    return out


def torsion_reduced_energy(mesh, theta_dofs, k):
    """The decoupled torsion energy, integrated directly (independent of the six-term assembly)."""
    x, w = _gauss_points(mesh)
    tp = hermite_eval(mesh, theta_dofs, x, 1)
    tpp = hermite_eval(mesh, theta_dofs, x, 2)
    return float(np.sum(w * (tp**2 + tp**4 / 640.0 + (k.c1**2 + 12 * k.J4) / 24.0 * tpp**2)))


def flexure_reduced_energy(mesh, r_dofs, k):
    x, w = _gauss_points(mesh)
    rp = hermite_eval(mesh, r_dofs, x, 1)
    rpp = hermite_eval(mesh, r_dofs, x, 2)
    return float(np.sum(w * (rp**4 / 8.0 + k.flexural_stiffness * rpp**2)))


def _gauss_points(mesh, nq=QUAD_POINTS):
    t, w = gauss_unit(nq)
    h = mesh.h[:, None]
    return (mesh.nodes[:-1, None] + h * t).ravel(), (h * w).ravel()
