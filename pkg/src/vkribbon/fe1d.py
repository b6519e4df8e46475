"""One-dimensional meshes, element bases and FE function evaluators."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh1D:
    """Mesh of I = (-ell/2, ell/2). ``nodes`` may be given for graded meshes."""

    ell: float = 1.0
    n_elems: int = 16
    node_coords: tuple = None

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("mesh length must be positive")
        if self.node_coords is not None:
            x = np.asarray(self.node_coords, dtype=float)
            object.__setattr__(self, "n_elems", len(x) - 1)
            if not np.all(np.diff(x) > 0):
                raise ValueError("mesh nodes must be strictly increasing")
            if abs(x[0] + self.ell / 2) > 1e-14 or abs(x[-1] - self.ell / 2) > 1e-14:
                raise ValueError("mesh nodes must span (-ell/2, ell/2) exactly")
        if self.n_elems < 2:
            raise ValueError("mesh needs at least two elements")

    @property
    def nodes(self):
        if self.node_coords is not None:
            return np.asarray(self.node_coords, dtype=float)
        x = np.linspace(-self.ell / 2, self.ell / 2, self.n_elems + 1)
        return x

    @property
    def h(self):
        return np.diff(self.nodes)

    def refined(self, factor=2):
        x = self.nodes
        fine = np.concatenate([np.linspace(a, b, factor + 1)[:-1] for a, b in zip(x[:-1], x[1:])] + [x[-1:]])
        return Mesh1D(self.ell, len(fine) - 1, tuple(fine))

    def locate(self, x):
        """Element index and local coordinate t in [0, 1] for each point."""
        x = np.asarray(x, dtype=float)
        nodes = self.nodes
        e = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, self.n_elems - 1)
        t = (x - nodes[e]) / (nodes[e + 1] - nodes[e])
        return e, t

    def to_json(self):
        return {"ell": self.ell, "n_elems": self.n_elems, "nodes": [float(v) for v in self.nodes]}

    @classmethod
    def from_json(cls, obj):
        nodes = obj.get("nodes")
        m = cls(float(obj["ell"]), int(obj["n_elems"]))
        if nodes is not None and not np.allclose(nodes, m.nodes, rtol=0, atol=0):
            return cls(float(obj["ell"]), len(nodes) - 1, tuple(float(v) for v in nodes))
        return m


def _fill(row, entries):
    for i, v in enumerate(entries):
        row[i] = v


def hermite_basis(t, h):
    """Cubic Hermite shape functions on an element of length h.

    Returns array (4 derivative orders, 4 shape functions, *t.shape), derivatives
    taken with respect to the physical coordinate. Shape function order:
    left value, left slope, right value, right slope.
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    one = np.ones(np.broadcast(t, h).shape)
    B = np.empty((4, 4) + one.shape)
    _fill(B[0], [1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3), 3 * t**2 - 2 * t**3, h * (-t**2 + t**3)])
    _fill(B[1], [(-6 * t + 6 * t**2) / h, 1 - 4 * t + 3 * t**2, (6 * t - 6 * t**2) / h, -2 * t + 3 * t**2])
    _fill(B[2], [(-6 + 12 * t) / h**2, (-4 + 6 * t) / h, (6 - 12 * t) / h**2, (-2 + 6 * t) / h])
    _fill(B[3], [12 * one / h**3, 6 * one / h**2, -12 * one / h**3, 6 * one / h**2])
    return B


def quadratic_basis(t, h):
    """Continuous quadratic Lagrange functions: left node, midpoint, right node."""
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    one = np.ones(np.broadcast(t, h).shape)
    B = np.empty((3, 3) + one.shape)
    _fill(B[0], [(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)])
    _fill(B[1], [(-3 + 4 * t) / h, (4 - 8 * t) / h, (4 * t - 1) / h])
    _fill(B[2], [4 * one / h**2, -8 * one / h**2, 4 * one / h**2])
    return B


def linear_basis(t, h):
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    one = np.ones(np.broadcast(t, h).shape)
    B = np.empty((2, 2) + one.shape)
    _fill(B[0], [1 - t, t * one])
    _fill(B[1], [-one / h, one / h])
    return B


def hermite_eval(mesh, dofs, x, der=0):
    """Evaluate a Hermite cubic FE function (dofs = [v0, d0, v1, d1, ...])."""
    dofs = np.asarray(dofs, dtype=float)
    e, t = mesh.locate(x)
    h = mesh.h[e]
    B = hermite_basis(t, h)[der]
    loc = np.stack([dofs[2 * e], dofs[2 * e + 1], dofs[2 * e + 2], dofs[2 * e + 3]])
    return np.sum(B * loc, axis=0)


def quadratic_eval(mesh, dofs, x, der=0):
    """Evaluate a continuous P2 function (dofs = node/midpoint values interleaved)."""
    dofs = np.asarray(dofs, dtype=float)
    e, t = mesh.locate(x)
    h = mesh.h[e]
    if der > 2:
        return np.zeros_like(np.asarray(x, dtype=float))
    B = quadratic_basis(t, h)[der]
    loc = np.stack([dofs[2 * e], dofs[2 * e + 1], dofs[2 * e + 2]])
    return np.sum(B * loc, axis=0)


def linear_eval(mesh, dofs, x, der=0):
    dofs = np.asarray(dofs, dtype=float)
    e, t = mesh.locate(x)
    h = mesh.h[e]
    if der > 1:
        return np.zeros_like(np.asarray(x, dtype=float))
    B = linear_basis(t, h)[der]
    loc = np.stack([dofs[e], dofs[e + 1]])
    return np.sum(B * loc, axis=0)


def hermite_interpolate(mesh, f, df):
    """Hermite DOFs of a function given its value and derivative callables."""
    x = mesh.nodes
    out = np.empty(2 * len(x))
    out[0::2] = f(x)
    out[1::2] = df(x)
    return out


def quadratic_interpolate(mesh, f):
    x = mesh.nodes
    mid = 0.5 * (x[:-1] + x[1:])
    out = np.empty(2 * len(x) - 1)
    out[0::2] = f(x)
    out[1::2] = f(mid)
    return out


def cubic_hermite_global(x, ell, a_val, a_der, b_val, b_der):
    """The single cubic on (-ell/2, ell/2) with prescribed end values and slopes.

    Returns (value, derivative) at x.
    """
    t = (np.asarray(x, dtype=float) + ell / 2) / ell
    B = hermite_basis(t, ell)
    c = np.array([a_val, a_der, b_val, b_der])
    return np.tensordot(c, B[0], axes=1), np.tensordot(c, B[1], axes=1)
