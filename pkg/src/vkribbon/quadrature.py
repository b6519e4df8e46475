"""Gauss-Legendre rules on intervals."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_unit(n):
    """n-point rule on [0, 1] (nodes, weights)."""
    x, w = _leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def composite_gauss(n, a, b, panels=1):
    """n-point rule repeated on ``panels`` equal subintervals of [a, b]."""
    t, w = gauss_unit(n)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + h[:, None] * t[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights


def gauss_on_breaks(breaks, n):
    """n-point rule on every cell of a sorted break list."""
    breaks = np.asarray(breaks, dtype=float)
    t, w = gauss_unit(n)
    h = np.diff(breaks)
    nodes = (breaks[:-1, None] + h[:, None] * t[None, :]).ravel()
    weights = (h[:, None] * w[None, :]).ravel()
    return nodes, weights
