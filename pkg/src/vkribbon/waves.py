"""Mollified triangle waves, boundary-layer correctors and 1D mollification.

Piecewise-linear functions are mollified in closed form: a slope change ds at
k contributes ds * rho * Psi((x - k)/rho), where Psi is the second antiderivative
of the normalised bump. Jumps contribute J * Phi((x - k)/rho).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import Fn1D
from .quadrature import composite_gauss, gauss_on_breaks

_GL_NODES = 48


def bump(z):
    """Unnormalised standard mollifier exp(-1/(1 - z^2)) on (-1, 1)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


_TABLE_N = 4096


@lru_cache(maxsize=None)
def _tables():
    """Cumulative integrals of the bump and of s*bump on a fine grid of [-1, 0]."""
    z = np.linspace(-1.0, 0.0, _TABLE_N + 1)
    t, w = np.polynomial.legendre.leggauss(12)
    h = z[1] - z[0]
    s = z[:-1, None] + 0.5 * h * (t + 1.0)
    c0 = np.concatenate([[0.0], np.cumsum(0.5 * h * np.sum(w * bump(s), axis=1))])
    c1 = np.concatenate([[0.0], np.cumsum(0.5 * h * np.sum(w * s * bump(s), axis=1))])
    mass = 2.0 * c0[-1]
    return z, c0 / mass, c1 / mass, mass


def _bump_mass():
    return _tables()[3]


def kernel(z):
    """Normalised bump: integrates to one over (-1, 1)."""
    return bump(z) / _bump_mass()


def kernel_deriv(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi**2)) * (-2.0 * zi / (1.0 - zi**2) ** 2)
    return out / _bump_mass()


def _hermite_lookup(zq, grid, vals, dvals):
    """Cubic Hermite interpolation of tabulated values with exact derivatives."""
    h = grid[1] - grid[0]
    i = np.clip(((zq - grid[0]) / h).astype(int), 0, len(grid) - 2)
    t = (zq - grid[i]) / h
    h00 = 1 - 3 * t**2 + 2 * t**3
    h10 = t - 2 * t**2 + t**3
    h01 = 3 * t**2 - 2 * t**3
    h11 = -t**2 + t**3
    return h00 * vals[i] + h * h10 * dvals[i] + h01 * vals[i + 1] + h * h11 * dvals[i + 1]


def _left_integrals(z):
    """(int_{-1}^{z} kernel, int_{-1}^{z} s kernel) for z in [-1, 0]."""
    grid, c0, c1, _ = _tables()
    z = np.clip(np.asarray(z, dtype=float), -1.0, 0.0)
    k = kernel(grid)
    return _hermite_lookup(z, grid, c0, k), _hermite_lookup(z, grid, c1, grid * k)


def kernel_cdf(z):
    """Phi(z) = int_{-1}^{z} kernel; Phi(z) + Phi(-z) = 1 holds exactly."""
    z = np.asarray(z, dtype=float)
    left, _ = _left_integrals(-np.abs(z))
    out = np.where(z <= 0, left, 1.0 - left)
    return np.where(z >= 1.0, 1.0, np.where(z <= -1.0, 0.0, out))


def kernel_ramp(z):
    """Psi(z) = int_{-1}^{z} Phi = z Phi(z) - int_{-1}^{z} s kernel(s) ds.

    The first-moment integral is even in z, so Psi(z) - Psi(-z) = z exactly.
    """
    z = np.asarray(z, dtype=float)
    _, m1 = _left_integrals(-np.abs(z))
    out = z * kernel_cdf(z) - m1
    return np.where(z >= 1.0, z, np.where(z <= -1.0, 0.0, out))


@dataclass
class PiecewiseLinear:
    """Continuous piecewise-linear function through (knots, values), extended linearly."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("knots must be strictly increasing")

    @property
    def slopes(self):
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, x, der=0):
        x = np.asarray(x, dtype=float)
        if der == 0:
            s = self.slopes
            left = self.values[0] + s[0] * (x - self.knots[0])
            right = self.values[-1] + s[-1] * (x - self.knots[-1])
            return np.where(x < self.knots[0], left,
                            np.where(x > self.knots[-1], right, np.interp(x, self.knots, self.values)))
        if der == 1:
            s = self.slopes
            i = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, len(s) - 1)
            return s[i]
        return np.zeros_like(x)


class MollifiedPL:
    """Closed-form mollification of a piecewise-linear function with radius rho."""

    def __init__(self, pl, rho):
        if not rho > 0:
            raise ValueError("mollification radius must be positive")
        s = pl.slopes
        self.rho = float(rho)
        self.x0 = pl.knots[0]
        self.y0 = pl.values[0]
        self.s0 = s[0]
        self.k = pl.knots[1:-1]
        self.ds = np.diff(s)
        self.c0 = np.concatenate([[0.0], np.cumsum(self.ds)])
        self.c1 = np.concatenate([[0.0], np.cumsum(self.ds * self.k)])

    def _window(self, x):
        lo = np.searchsorted(self.k, x - self.rho, side="right")
        hi = np.searchsorted(self.k, x + self.rho, side="left")
        return lo, hi

    def __call__(self, x, der=0):
        x = np.asarray(x, dtype=float)
        lo, hi = self._window(x)
        rho = self.rho
        if der == 0:
            out = self.y0 + self.s0 * (x - self.x0) + x * self.c0[lo] - self.c1[lo]
        elif der == 1:
            out = self.s0 + self.c0[lo]
        else:
            out = np.zeros_like(x)
        width = int(np.max(hi - lo)) if x.size else 0
        for j in range(width):
            idx = lo + j
            act = idx < hi
            kk = self.k[np.minimum(idx, len(self.k) - 1)]
            d = np.where(act, self.ds[np.minimum(idx, len(self.ds) - 1)], 0.0)
            z = (x - kk) / rho
            if der == 0:
                out = out + d * rho * kernel_ramp(z)
            elif der == 1:
                out = out + d * kernel_cdf(z)
            elif der == 2:
                out = out + d * kernel(z) / rho
            elif der == 3:
                out = out + d * kernel_deriv(z) / rho**2
            else:
                raise ValueError("derivative order above 3 not available")
        return out

    def as_fn(self):
        return Fn1D(self, max_der=3)


def mollify_1d(f, delta, nodes=64):
    """Convolution with the standard mollifier of radius ``delta``.

    Piecewise-linear input is handled exactly; for a ``PiecewiseConstant`` the
    jumps are smoothed in closed form; any other callable is integrated with a
    composite Gauss rule in the kernel variable.
    """
    if not delta > 0:
        raise ValueError("mollification radius must be positive")
    if isinstance(f, PiecewiseLinear):
        return MollifiedPL(f, delta)
    if isinstance(f, PiecewiseConstant):
        return MollifiedSteps(f, delta)
    z, wz = composite_gauss(8, -1.0, 1.0, panels=nodes // 8)
    kz = kernel(z) * wz

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.sum(kz * f(x[..., None] - delta * z), axis=-1)
    return g


@dataclass
class PiecewiseConstant:
    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.breaks) - 1:
            raise ValueError("need one value per interval")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.values) - 1)
        return self.values[i]


class MollifiedSteps:
    def __init__(self, f, rho):
        self.rho = float(rho)
        self.v0 = f.values[0]
        self.k = f.breaks[1:-1]
        self.jumps = np.diff(f.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.v0)
        for k, J in zip(self.k, self.jumps):
            out = out + J * kernel_cdf((x - k) / self.rho)
        return out


# --- simple functions and the oscillating wave ---------------------------------------

@dataclass
class SimpleFunction:
    """Nonnegative function, constant on the cells of ``breaks``."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.breaks) - 1 or len(self.values) == 0:
            raise ValueError("need one value per cell")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("simple function values must be finite and nonnegative")

    @classmethod
    def constant(cls, value, a, b):
        return cls(np.array([a, b]), np.array([float(value)]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, len(self.values) - 1)
        return self.values[i]


def wave_count(eps):
    """Periods per constant piece: grows by one per halving of eps."""
    return max(1, int(np.floor(np.log2(1.0 / eps) + 1e-12)) - 3)


def _triangle_knots(m, n):
    """Knots and values of the unmollified wave: n teeth of slope +-sqrt(2 m_j) per cell."""
    xs = [m.breaks[0]]
    ys = [0.0]
    for (a, b), mj in zip(zip(m.breaks[:-1], m.breaks[1:]), m.values):
        P = (b - a) / n
        s = np.sqrt(2.0 * mj)
        for i in range(n):
            xs += [a + (i + 0.5) * P, a + (i + 1) * P]
            ys += [s * P / 2, 0.0]
    return np.array(xs), np.array(ys)


@dataclass
class ZetaWave:
    fn: Fn1D
    n: int
    rho: float
    metrics: dict

    def __call__(self, x, der=0):
        return self.fn(x, der)


def zeta_wave(m, eps, gamma=1.0, n=None, nq=8):
    """Oscillating H^2_0 function with (zeta')^2 / 2 close to m (mollified triangle wave).

    The wave is reflected evenly across both ends before mollifying, which makes
    zeta'(a) = zeta'(b) = 0; the end values are then removed with a cubic of zero
    end slopes. ``eps`` may be a ScaledParams or a number.
    """
    eps = float(getattr(eps, "eps", eps))
    if np.any(m.values < 0):
        raise ValueError("simple function values must be nonnegative")
    a, b = m.breaks[0], m.breaks[-1]
    L = b - a
    n = wave_count(eps) if n is None else int(n)
    rho = eps ** (gamma / 2.0)
    if rho >= L:
        raise ValueError("mollification radius exceeds the interval")
    x, y = _triangle_knots(m, n)
    # even reflection across a and b
    xl = 2 * a - x[::-1][:-1]
    yl = y[::-1][:-1]
    xr = 2 * b - x[::-1][1:]
    yr = y[::-1][1:]
    pl = PiecewiseLinear(np.concatenate([xl, x, xr]), np.concatenate([yl, y, yr]))
    base = MollifiedPL(pl, rho)
    za = float(base(np.array(a)))
    zb = float(base(np.array(b)))

    def f(t, der):
        s = (t - a) / L
        corr = [za + (zb - za) * s * s * (3 - 2 * s),
                (zb - za) * 6 * s * (1 - s) / L,
                (zb - za) * (6 - 12 * s) / L**2,
                np.full_like(s, -12 * (zb - za) / L**3)][der]
        return base(t, der) - corr

    fn = Fn1D(f, max_der=3)
    # metrics on a composite rule aligned with the wave's kinks
    kn = np.unique(np.clip(np.concatenate([pl.knots, pl.knots - rho, pl.knots + rho]), a, b))
    t, w = gauss_on_breaks(np.unique(np.concatenate([[a, b], kn])), nq)
    zp = fn(t, 1)
    metrics = {
        "energy_deviation": float(np.sqrt(np.sum(w * (0.5 * zp**2 - m(t)) ** 2))),
        "sup_norm": float(np.max(np.abs(fn(np.linspace(a, b, 20 * n * len(m.values) + 1), 0)))),
        "curvature": float(eps**gamma * np.sqrt(np.sum(w * fn(t, 2) ** 2))),
    }
    # the sup over a dense sample can miss the peaks; include the knots
    metrics["sup_norm"] = max(metrics["sup_norm"], float(np.max(np.abs(fn(pl.knots[(pl.knots >= a) & (pl.knots <= b)], 0)))))
    return ZetaWave(fn=fn, n=n, rho=rho, metrics=metrics)


# --- boundary-layer corrector ----------------------------------------------------------------

def unit_corrector(alpha, eta):
    """Piecewise cubic on (0, 1): value 0 and slope alpha at 0, value and slope 0 at 1."""
    if not 0 < eta < 1:
        raise ValueError("layer width must lie in (0, 1)")
    c = eta / (1 - eta) ** 3

    def f(x, der):
        x = np.asarray(x, dtype=float)
        inner = x <= eta
        if der == 0:
            fi = x**3 / eta**2 * (alpha - 2) - x**2 / eta * (2 * alpha - 3) + alpha * x
            fo = c * (x - 1) ** 2 * (2 * x - 3 * eta + 1)
        elif der == 1:
            fi = 3 * x**2 / eta**2 * (alpha - 2) - 2 * x / eta * (2 * alpha - 3) + alpha
            fo = c * (2 * (x - 1) * (2 * x - 3 * eta + 1) + 2 * (x - 1) ** 2)
        elif der == 2:
            fi = 6 * x / eta**2 * (alpha - 2) - 2 / eta * (2 * alpha - 3)
            fo = c * (2 * (2 * x - 3 * eta + 1) + 8 * (x - 1))
        elif der == 3:
            fi = np.full_like(x, 6 / eta**2 * (alpha - 2))
            fo = np.full_like(x, 12 * c)
        else:
            return np.zeros_like(x)
        return np.where(inner, fi, fo)
    return f


@dataclass
class Corrector:
    fn: Fn1D
    eta: float
    metrics: dict

    def __call__(self, x, der=0):
        return self.fn(x, der)


def boundary_corrector(alpha_a, alpha_b, eps, gamma=1.0, interval=(-0.5, 0.5), nq=8):
    """H^2 function vanishing at both ends with prescribed end slopes and thin layers.

    The layers have width eta = eps**gamma; their sum of the two one-sided
    constructions is returned with its W^{1,4} norm and eps**gamma * ||g''||.
    A side with zero slope contributes nothing (the cubic would leave an O(eta) bump).
    """
    eps = float(getattr(eps, "eps", eps))
    a, b = map(float, interval)
    L = b - a
    eta = eps**gamma / L
    zero = lambda x, der: np.zeros_like(np.asarray(x, dtype=float))
    Ga = unit_corrector(float(alpha_a), eta) if alpha_a != 0 else zero
    Gb = unit_corrector(float(alpha_b), eta) if alpha_b != 0 else zero

    def f(x, der):
        x = np.asarray(x, dtype=float)
        u = (x - a) / L
        v = (b - x) / L
        # d/dx of L*G(u) is G'(u) L^{1-der}; of -L*G(v) is -(-1)^der G'(v) L^{1-der}
        return L ** (1 - der) * (Ga(u, der) - (-1) ** der * Gb(v, der))

    fn = Fn1D(f, max_der=3)
    brk = np.unique([a, a + eta * L, b - eta * L, b])
    t, w = gauss_on_breaks(brk, nq)
    g0, g1, g2 = fn(t, 0), fn(t, 1), fn(t, 2)
    metrics = {
        "w14_norm": float(np.sum(w * (g0**4 + g1**4)) ** 0.25),
        "curvature": float(eps**gamma * np.sqrt(np.sum(w * g2**2))),
    }
    return Corrector(fn=fn, eta=eta * L, metrics=metrics)
