"""Recovery fields for both limit regimes and eps-sweeps comparing 2D and 1D minima."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import json
import logging
import math

import numpy as np

from .cross_section import derived_functions, section_constants
from .fe1d import Mesh1D, hermite_eval, quadratic_eval
from .fields import AnalyticField2D, Fn1D, SeparableField, X1
from .limit_beta2 import LimitState1D, minimize_beta2
from .limit_sub2 import SubState1D, minimize_sub2
from .optim import SolverOptions
from .quadrature import gauss_on_breaks
from .vk2d import Field2D, Grid2D, ScaledParams, minimize_eps
from .waves import (PiecewiseLinear, SimpleFunction, MollifiedPL, boundary_corrector,
                    mollify_1d, wave_count, zeta_wave)

log = logging.getLogger(__name__)

# constant-density cells used by the warm start of relaxed sweeps
SWEEP_CELLS = 1

__all__ = [
    "SmoothState", "SimpleFunction", "ConvergenceReport", "recovery_beta2", "recovery_sub2",
    "select_m_n", "random_polynomial_state", "zeta_wave", "boundary_corrector", "mollify_1d", "gamma_sweep",
]


@dataclass
class SmoothState:
    """Limit descriptors as exact-derivative callables on I."""

    xi1: Fn1D
    xi2: Fn1D
    r: Fn1D
    theta: Fn1D
    ell: float = 1.0
    breaks: tuple = ()

    @classmethod
    def from_beta2(cls, s):
        m = s.mesh
        herm = lambda dofs: Fn1D(lambda x, d: hermite_eval(m, dofs, x, d), max_der=3)
        quad = Fn1D(lambda x, d: quadratic_eval(m, s.xi1, x, d), max_der=2)
        return cls(quad, herm(s.xi2), herm(s.r), herm(s.theta), m.ell, tuple(m.nodes))

    @classmethod
    def from_sub2(cls, s, delta):
        """Mollify the piecewise-linear fields (linear continuation past the ends).

        Values at the ends are unchanged when ``delta`` is below the end element size.
        """
        m = s.mesh
        if delta >= min(m.h[0], m.h[-1]):
            raise ValueError("mollification radius must be below the end element size")
        x = m.nodes
        moll = lambda v: MollifiedPL(PiecewiseLinear(x, v), delta).as_fn()
        xi2 = Fn1D(lambda t, d: hermite_eval(m, s.xi2, t, d), max_der=3)
        return cls(moll(s.xi1), xi2, moll(s.r), moll(s.theta), m.ell, tuple(m.nodes))


def _profile_fn(prof):
    return Fn1D(lambda x, d: prof(x, d), max_der=99)


X2 = Fn1D.poly(np.polynomial.Polynomial([0.0, 1.0]))


def recovery_beta2_analytic(s, p, prof, c1=None):
    """Exact recovery displacement for beta = 2 built from a limit state."""
    if p.beta != 2:
        raise ValueError("the beta = 2 recovery needs beta == 2")
    st = s if isinstance(s, SmoothState) else SmoothState.from_beta2(s)
    d = derived_functions(prof)
    c1 = d.c1 if c1 is None else c1
    e = p.eps
    wf = _profile_fn(prof)
    rr0 = Fn1D.poly(d.ringring_w0)
    r, th, x1f, x2f = st.r, st.theta, st.xi1, st.xi2
    dw = SeparableField([(r * e, 1.0), (th * e, X2)])
    u1 = SeparableField([(x1f, 1.0), (-(x2f.deriv() + r.deriv() * th + th.deriv() * c1), X2),
                         (-r.deriv(), wf), (-th.deriv(), rr0)]).scaled(e**2)
    u2 = SeparableField([(x2f, 1.0), (th * th * (-0.5), X2), (-th, wf)]).scaled(e**2)
    return AnalyticField2D(dw, u1, u2, e)


def recovery_beta2(s, p, prof, grid, analytic=False):
    """Recovery field for beta = 2: its grid interpolant, or the analytic field itself."""
    an = recovery_beta2_analytic(s, p, prof)
    return an if analytic else Field2D.interpolate(an, grid)


def random_polynomial_state(mesh, rng, scale=0.5):
    """Random admissible limit state: xi1 quadratic, xi2 and r cubic, theta cubic with theta' = 0 at both ends."""
    from numpy.polynomial import Polynomial as P
    ell = mesh.ell
    t = P([ell / 2, 1.0])
    c = lambda: scale * rng.uniform(-1, 1, 2)
    cub = lambda: t * t * P(c()) / ell
    theta = t * t * (1.0 - t * (2.0 / (3 * ell))) * (scale * rng.uniform(-1, 1))
    return LimitState1D.from_polynomials(mesh, t * P(c()), cub(), cub(), theta)


def bending_gap_beta2(s, p, prof=None, nq=6):
    """(eps^2 / 2) * integral over Omega of (r'' + x2 theta'')^2 = (eps^2/2) int (r''^2 + theta''^2 / 12)."""
    st = s if isinstance(s, SmoothState) else SmoothState.from_beta2(s)
    br = st.breaks or tuple(np.linspace(-st.ell / 2, st.ell / 2, 2))
    x, w = gauss_on_breaks(np.asarray(br), nq)
    return 0.5 * p.eps**2 * float(np.sum(w * (st.r(x, 2) ** 2 + st.theta(x, 2) ** 2 / 12.0)))


# --- beta < 2 -------------------------------------------------------------------------

def select_m_n(s, n, nq=8):
    """Per-cell wrinkling density: max(0, -cell average of xi1' + r'^2 / 2) on n equal cells.

    Returns the simple function and the measured constant n * (excess energy)
    in the cell-wise estimate against the positive-part energy.
    """
    ell = s.ell
    cells = np.linspace(-ell / 2, ell / 2, n + 1)
    br = np.unique(np.concatenate([cells, np.asarray(s.breaks, dtype=float)])) if s.breaks else cells
    x, w = gauss_on_breaks(br, nq)
    f = s.xi1(x, 1) + 0.5 * s.r(x, 1) ** 2
    cell = np.clip(np.searchsorted(cells, x, side="right") - 1, 0, n - 1)
    avg = np.bincount(cell, weights=w * f, minlength=n) / np.bincount(cell, weights=w, minlength=n)
    m = SimpleFunction(cells, np.maximum(0.0, -avg))
    excess = float(np.sum(w * (f + m(x)) ** 2) - np.sum(w * np.maximum(f, 0.0) ** 2))
    return m, n * excess


@dataclass
class Sub2Recovery:
    field: AnalyticField2D
    zeta: object
    g: object
    h: object
    m: SimpleFunction
    target: SimpleFunction
    p2: float
    n: int
    constant_Cn: float
    gamma: float

    def s11_formula(self, s, prof, p, x1, x2):
        """S11 predicted by the construction (the exact expansion of the membrane term)."""
        return _s11_formula(self, s, prof, p, x1, x2)


def _xi1n(s, p2, n):
    """xi1 shifted to vanish at the left end, ramped down by p2 on the last cell."""
    ell = s.ell
    a0 = float(s.xi1(np.array(-ell / 2)))
    start = ell / 2 - ell / n
    slope = n * p2 / ell

    def f(x, d):
        ramp = x > start
        if d == 0:
            return s.xi1(x) - a0 - slope * np.where(ramp, x - start, 0.0)
        if d == 1:
            return s.xi1(x, 1) - slope * ramp
        return s.xi1(x, d)
    return Fn1D(f, max_der=min(s.xi1.max_der, 3))


class _Primitive(Fn1D):
    """x -> int_{-ell/2}^{x} f, tabulated with Gauss rules on fine panels."""

    def __init__(self, f, ell, breaks, nq=8):
        br = np.asarray(sorted(set(np.round(breaks, 15))), dtype=float)
        x, w = gauss_on_breaks(br, nq)
        panel = np.repeat(np.arange(len(br) - 1), nq)
        cum = np.concatenate([[0.0], np.cumsum(np.bincount(panel, weights=w * f(x), minlength=len(br) - 1))])
        t, tw = np.polynomial.legendre.leggauss(nq)

        def F(xx, d):
            xx = np.asarray(xx, dtype=float)
            if d > 0:
                return f(xx, d - 1)
            i = np.clip(np.searchsorted(br, xx, side="right") - 1, 0, len(br) - 2)
            half = 0.5 * (xx - br[i])
            pts = br[i][..., None] + half[..., None] * (t + 1.0)
            return cum[i] + half * np.sum(tw * f(pts), axis=-1)
        super().__init__(F, max_der=f.max_der + 1)
        self.total = float(cum[-1])


def recovery_wave_count(eps, gamma, cell):
    """Teeth per cell: the usual count, capped so each tooth spans at least 8 mollifier radii."""
    rho = eps ** (gamma / 2)
    return max(1, min(wave_count(eps), int(cell / (8 * rho))))


def recovery_sub2(s, bc, prof, p, n=8, m=None, gamma=None, n_waves=None, correctors=True,
                  p2_clip=True):
    """Recovery field for 0 < beta < 2 from a smooth limit state.

    ``m`` defaults to the per-cell choice of ``select_m_n``; the wrinkle density
    target adds the end-ramp compression on the last cell. Returns a
    ``Sub2Recovery`` whose ``field`` is analytic (interpolate with Field2D.interpolate).
    """
    if not 0 < p.beta < 2:
        raise ValueError("the relaxed recovery needs 0 < beta < 2")
    if isinstance(s, SubState1D):
        s = SmoothState.from_sub2(s, 0.25 * min(s.mesh.h))
    elif isinstance(s, LimitState1D):
        s = SmoothState.from_beta2(s)
    e, b, ell = p.eps, p.beta, s.ell
    gamma = min(b / 2, 1 - b / 2) if gamma is None else gamma
    a0 = float(s.xi1(np.array(-ell / 2)))
    p2 = float(s.xi1(np.array(ell / 2))) - a0 - bc.Lambda1
    if -1e-12 * (1 + abs(bc.Lambda1)) < p2 < 0:
        p2 = 0.0
    if p2 < 0:
        if not p2_clip:
            raise ValueError("state violates Lambda1 - xi1(ell/2) <= 0")
        log.warning("end ramp p^2 = %.3e < 0 clipped to zero: state is not admissible", p2)
        p2 = 0.0
    if m is None:
        m, Cn = select_m_n(s, n)
    else:
        Cn = float("nan")
    cells = np.linspace(-ell / 2, ell / 2, n + 1)
    tv = m(0.5 * (cells[:-1] + cells[1:])).copy()
    tv[-1] += n * p2 / ell
    target = SimpleFunction(cells, tv)

    if correctors:
        if n_waves is None:
            n_waves = recovery_wave_count(e, gamma, ell / n)
        zw = zeta_wave(target, e, gamma, n=n_waves) if np.any(tv > 0) else None
        r1a, r1b = float(s.r(np.array(-ell / 2), 1)), float(s.r(np.array(ell / 2), 1))
        t1a, t1b = float(s.theta(np.array(-ell / 2), 1)), float(s.theta(np.array(ell / 2), 1))
        g = boundary_corrector(-r1a, bc.Phi2 - r1b, e, gamma, (-ell / 2, ell / 2))
        h = boundary_corrector(-t1a, -t1b, e, gamma, (-ell / 2, ell / 2))
        zeta = zw.fn if zw is not None else Fn1D.const(0.0)
        gf, hf = g.fn, h.fn
    else:
        zw, g, h = None, None, None
        zeta, gf, hf = Fn1D.const(0.0), Fn1D.const(0.0), Fn1D.const(0.0)

    xi1n = _xi1n(s, p2, n)
    R = s.r + gf + zeta
    Th = s.theta + hf
    slope = s.r.deriv() + gf.deriv()
    brk = list(np.linspace(-ell / 2, ell / 2, 64 * max(n, 1) + 1))
    if zw is not None:
        brk += list(np.linspace(-ell / 2, ell / 2, 16 * zw.n * n + 1))
    if g is not None:
        brk += [-ell / 2 + g.eta, ell / 2 - g.eta, -ell / 2 + h.eta, ell / 2 - h.eta]
    brk += list(s.breaks)
    brk = [v for v in brk if -ell / 2 <= v <= ell / 2]
    A = _Primitive(zeta.deriv() * slope, ell, brk)
    avg = A.total / ell

    wf = _profile_fn(prof)
    rr = Fn1D.poly(derived_functions(prof).ringring_w)
    Rp = R.deriv()
    dw = SeparableField([(R * e ** (b / 2), 1.0), (Th * e, X2)])
    u1 = SeparableField([
        (xi1n * e**b, 1.0), (s.xi2.deriv() * (-e**b), X2),
        (Rp * (-e ** (1 + b / 2)), wf), (Rp * Th * (-e ** (1 + b / 2)), X2),
        (Th.deriv() * (-e**2), rr),
        (A * (-e**b) + (X1 + ell / 2) * (e**b * avg), 1.0),
    ])
    u2 = SeparableField([(s.xi2 * e**b, 1.0), (Th * Th * (-0.5 * e**2), X2), (Th * (-e**2), wf)])
    rec = Sub2Recovery(AnalyticField2D(dw, u1, u2, e), zw, g, h, m, target, p2, n, Cn, gamma)
    rec._parts = dict(xi1n=xi1n, R=R, Th=Th, slope=slope, zeta=zeta, avg=avg, rr=rr, wf=wf)
    return rec


def _s11_formula(rec, s, prof, p, x1, x2):
    e, b = p.eps, p.beta
    P = rec._parts
    R, Th, zeta = P["R"], P["Th"], P["zeta"]
    return (P["xi1n"](x1, 1) - x2 * s.xi2(x1, 2)
            - e ** (1 - b / 2) * R(x1, 2) * (prof(x2) + x2 * Th(x1))
            - e ** (2 - b) * P["rr"](x2) * Th(x1, 2)
            + P["avg"] + 0.5 * P["slope"](x1) ** 2 + 0.5 * zeta(x1, 1) ** 2
            + 0.5 * e ** (2 - b) * x2**2 * Th(x1, 1) ** 2)


# --- sweeps ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("eps", "energy_2d", "energy_limit", "gap", "relative_gap", "gap_ratio_vs_previous",
               "converged", "grid", "start", "error")

    def column(self, name):
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            for r in self.rows:
                wr.writerow([_fmt(r.get(k, "")) for k in self.COLUMNS])

    def to_json(self):
        return {"metadata": self.metadata, "rows": self.rows}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @property
    def ok(self):
        return all(not r.get("error") for r in self.rows)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return "" if v is None else str(v)


def default_grid(eps, beta, ell=1.0, n2=None, c=16, cells=1):
    """n1 = ceil(c / sqrt(eps)) for beta = 2; four elements per wrinkle tooth otherwise."""
    if beta == 2:
        return Grid2D(int(math.ceil(c / math.sqrt(eps))), n2 or 8, ell)
    gamma = min(beta / 2, 1 - beta / 2)
    teeth = cells * recovery_wave_count(eps, gamma, ell / cells)
    return Grid2D(max(32, 4 * 2 * teeth), n2 or 4, ell)


def _limit_minimum(bc, beta, prof, ell, n1d, opts):
    if beta == 2:
        k = section_constants(prof, ell)
        st, rep = minimize_beta2(bc, k, Mesh1D(ell, n1d), opts)
    else:
        st, rep = minimize_sub2(bc, Mesh1D(ell, n1d), opts)
    return st, rep


def _sweep_row(args):
    bc, beta, prof, eps, grid, opts, limit_state, limit_energy, warm, ell = args
    row = {"eps": float(eps), "grid": f"{grid.n1}x{grid.n2}", "energy_limit": float(limit_energy)}
    try:
        p = ScaledParams(eps, beta, ell)
        x0 = None
        if warm and limit_state is not None:
            if beta == 2:
                x0 = recovery_beta2(limit_state, p, prof, grid)
            else:
                rec = recovery_sub2(limit_state, bc, prof, p, n=SWEEP_CELLS)
                x0 = Field2D.interpolate(rec.field, grid)
        f, rep = minimize_eps(bc, p, prof, grid, opts, x0=x0)
        row.update(energy_2d=float(rep.total), converged=bool(rep.solver["converged"]),
                   start=rep.solver.get("start", ""), error="")
        if not rep.solver["converged"]:
            row["error"] = f"not converged: {rep.solver['message']}"
    except Exception as exc:  # recorded per row; the sweep continues
        row.update(energy_2d=float("nan"), converged=False, error=f"{type(exc).__name__}: {exc}")
    return row


def gamma_sweep(bc, beta, prof, eps_list, grids=None, opts=None, ell=1.0, n1d=256, warm=True, workers=1):
    """Minimise the 2D energy along a decreasing eps list and compare with the limit minimum."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    opts = opts or SolverOptions()
    grids = grids or [default_grid(e, beta, ell) for e in eps_list]
    if len(grids) != len(eps_list):
        raise ValueError("need one grid per eps value")
    limit_state, lrep = _limit_minimum(bc, beta, prof, ell, n1d, opts)
    jobs = [(bc, beta, prof, e, g, opts, limit_state, lrep.total, warm, ell) for e, g in zip(eps_list, grids)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    prev = None
    for r in rows:
        r["gap"] = r["energy_2d"] - r["energy_limit"]
        denom = abs(r["energy_limit"])
        r["relative_gap"] = r["gap"] / denom if denom > 0 else (0.0 if abs(r["gap"]) < 1e-300 else float("inf"))
        r["gap_ratio_vs_previous"] = (r["gap"] / prev if prev not in (None, 0.0) else float("nan"))
        prev = r["gap"]
    meta = {"beta": beta, "bc": bc.to_json(), "profile": prof.to_json(), "ell": ell,
            "limit_energy": lrep.total, "limit_solver": lrep.solver,
            "grids": [g.to_json() for g in grids],
            "note": "gap thresholds are engineering choices; no convergence rate is known"}
    return ConvergenceReport(rows, meta)
