"""Analytic 1D functions with derivatives and separable 2D fields built from them.

Recovery constructions are sums of products f(x1) g(x2); representing them this
way gives exact derivatives of every order needed by the 2D energy.
"""

import math

import numpy as np

MAX_DER = 4


class Fn1D:
    """A callable f(x, der) with algebra that tracks derivatives exactly."""

    def __init__(self, fun, max_der=MAX_DER):
        self._fun = fun
        self.max_der = max_der

    def __call__(self, x, der=0):
        if der > self.max_der:
            raise ValueError(f"derivative order {der} not available")
        return self._fun(np.asarray(x, dtype=float), der)

    @classmethod
    def const(cls, c):
        c = float(c)
        return cls(lambda x, d: np.full_like(x, c) if d == 0 else np.zeros_like(x), max_der=99)

    @classmethod
    def poly(cls, p):
        """From a numpy Polynomial."""
        return cls(lambda x, d: (p.deriv(d) if d else p)(x), max_der=99)

    @classmethod
    def from_derivs(cls, *funcs):
        """From callables for f, f', f'', ..."""
        return cls(lambda x, d: funcs[d](x), max_der=len(funcs) - 1)

    def __add__(self, other):
        other = _lift(other)
        return Fn1D(lambda x, d: self(x, d) + other(x, d), min(self.max_der, other.max_der))

    __radd__ = __add__

    def __neg__(self):
        return Fn1D(lambda x, d: -self(x, d), self.max_der)

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        if np.isscalar(other):
            c = float(other)
            return Fn1D(lambda x, d: c * self(x, d), self.max_der)
        other = _lift(other)

        def f(x, d):
            return sum(math.comb(d, k) * self(x, k) * other(x, d - k) for k in range(d + 1))
        return Fn1D(f, min(self.max_der, other.max_der))

    __rmul__ = __mul__

    def deriv(self):
        return Fn1D(lambda x, d: self(x, d + 1), self.max_der - 1)


def _lift(v):
    return v if isinstance(v, Fn1D) else Fn1D.const(v)


X1 = Fn1D.poly(np.polynomial.Polynomial([0.0, 1.0]))


class SeparableField:
    """Scalar field sum_k f_k(x1) g_k(x2)."""

    def __init__(self, terms=()):
        self.terms = [(_lift(f), _lift(g)) for f, g in terms]

    def __add__(self, other):
        return SeparableField(self.terms + other.terms)

    def scaled(self, c):
        return SeparableField([(f * c, g) for f, g in self.terms])

    def __call__(self, x1, x2, d1=0, d2=0):
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.broadcast(x1, np.asarray(x2)).shape)
        for f, g in self.terms:
            out = out + f(x1, d1) * g(x2, d2)
        return out


class AnalyticField2D:
    """Displacement triple (dw, u1, u2) given by separable fields; dw = w - eps*profile."""

    def __init__(self, dw, u1, u2, eps):
        self.dw = dw
        self.u1 = u1
        self.u2 = u2
        self.eps = float(eps)

    def derivs(self, x1, x2):
        dw, u1, u2 = self.dw, self.u1, self.u2
        return {
            "dw1": dw(x1, x2, 1, 0), "dw2": dw(x1, x2, 0, 1),
            "dw11": dw(x1, x2, 2, 0), "dw12": dw(x1, x2, 1, 1), "dw22": dw(x1, x2, 0, 2),
            "u11": u1(x1, x2, 1, 0), "u12": u1(x1, x2, 0, 1),
            "u21": u2(x1, x2, 1, 0), "u22": u2(x1, x2, 0, 1),
        }

    def nodal(self, x1, x2):
        """(value, d1, d2, d12) of each component at the given points."""
        out = {}
        for name in ("dw", "u1", "u2"):
            f = getattr(self, name)
            out[name] = np.stack([f(x1, x2, 0, 0), f(x1, x2, 1, 0), f(x1, x2, 0, 1), f(x1, x2, 1, 1)], axis=-1)
        return out
