"""Damped Newton with Armijo backtracking for smooth nonconvex energies."""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    multistart: int = 1
    seed: int = 0
    armijo: float = 1e-4
    min_step: float = 1e-12
    scale_tol_by_dofs: bool = True


@dataclass
class NewtonResult:
    x: np.ndarray
    f: float
    gnorm: float
    tol: float
    n_iter: int
    converged: bool
    message: str
    history: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def summary(self):
        return {
            "converged": bool(self.converged),
            "iterations": int(self.n_iter),
            "grad_norm": float(self.gnorm),
            "tol": float(self.tol),
            "message": self.message,
        }


class ConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _solve(H, rhs):
    if scipy.sparse.issparse(H):
        lu = scipy.sparse.linalg.splu(H.tocsc())
        p = lu.solve(rhs)
    else:
        p = scipy.linalg.solve(H, rhs, assume_a="sym")
    if not np.all(np.isfinite(p)):
        raise np.linalg.LinAlgError("non-finite Newton step")
    return p


def _shift(H, tau):
    if scipy.sparse.issparse(H):
        return (H + tau * scipy.sparse.identity(H.shape[0], format="csc")).tocsc()
    return H + tau * np.eye(H.shape[0])


def _diag_scale(H):
    d = H.diagonal() if scipy.sparse.issparse(H) else np.diag(H)
    return float(np.max(np.abs(d))) if d.size else 1.0


def descent_direction(H, g):
    """Newton direction, regularised when the Hessian is indefinite; -g as last resort."""
    gn = np.linalg.norm(g)
    try:
        p = _solve(H, -g)
        if g @ p < -1e-14 * gn * np.linalg.norm(p):
            return p, "newton"
    except (np.linalg.LinAlgError, RuntimeError, ValueError):
        pass
    scale = _diag_scale(H)
    for k in range(-10, 2):
        tau = scale * 10.0**k
        try:
            p = _solve(_shift(H, tau), -g)
        except (np.linalg.LinAlgError, RuntimeError, ValueError):
            continue
        if g @ p < -1e-14 * gn * np.linalg.norm(p):
            return p, "shifted"
    return -g / max(scale, 1.0), "gradient"


# relative size below which energy differences are treated as rounding noise
ROUNDOFF = 64 * np.finfo(float).eps


def _gradient_floor(H, x):
    """Size of the gradient change caused by rounding x: ~ eps * || |H| |x| ||."""
    Ha = abs(H)
    return ROUNDOFF * float(np.linalg.norm(Ha @ np.abs(x)))


def newton_minimize(fun, grad, hess, x0, opts=None, tol=None):
    """Minimise ``fun`` from ``x0``; iterates never increase the energy."""
    opts = opts or SolverOptions()
    x = np.array(x0, dtype=float)
    n = x.size
    if tol is None:
        tol = opts.tol * (np.sqrt(max(n, 1)) if opts.scale_tol_by_dofs else 1.0)
    f = fun(x)
    g = grad(x)
    gn = float(np.linalg.norm(g))
    history = [f]
    steps = []
    message = "max_iter reached"
    converged = gn <= tol
    it = 0
    if converged:
        message = "initial point stationary"
    while not converged and it < opts.max_iter:
        it += 1
        H = hess(x)
        p, kind = descent_direction(H, g)
        slope = float(g @ p)
        alpha = 1.0
        accepted = False
        floor = ROUNDOFF * max(abs(f), np.finfo(float).tiny)
        while alpha >= opts.min_step and -opts.armijo * alpha * slope > floor:
            xt = x + alpha * p
            ft = fun(xt)
            if np.isfinite(ft) and ft <= f + opts.armijo * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # decrease below roundoff of f: backtrack on |g| instead, never raising f beyond roundoff
            alpha = 1.0
            while alpha >= opts.min_step:
                xt = x + alpha * p
                ft = fun(xt)
                gt = grad(xt)
                if np.isfinite(ft) and ft <= f + floor and np.linalg.norm(gt) < gn:
                    break
                alpha *= 0.5
            else:
                message = "line search failed"
                if gn <= _gradient_floor(H, x):
                    converged = True
                    message = "converged at rounding floor"
                break
            x, f, g = xt, ft, gt
            gn = float(np.linalg.norm(g))
            history.append(f)
            steps.append(("roundoff", alpha))
            converged = gn <= tol
            continue
        x, f = xt, ft
        g = grad(x)
        gn = float(np.linalg.norm(g))
        history.append(f)
        steps.append((kind, alpha))
        converged = gn <= tol
    if converged and message != "converged at rounding floor":
        message = "converged"
    log.debug("newton: %s after %d iterations, |g|=%.3e", message, it, gn)
    return NewtonResult(x=x, f=f, gnorm=gn, tol=tol, n_iter=it, converged=converged,
                        message=message, history=history, steps=steps)
