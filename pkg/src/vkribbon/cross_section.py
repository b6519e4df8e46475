"""Cross-section profile and the geometric constants derived from it.

The profile is an even, mean-zero, non-affine polynomial on W = (-1/2, 1/2).
All section integrals are polynomial, so composite Gauss-Legendre quadrature
of sufficient order evaluates them exactly up to roundoff.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial import Polynomial

from .quadrature import composite_gauss

W_BOUNDS = (-0.5, 0.5)

# integrals of 1 and x2^2 over W, and of the squared Legendre mode
J1_EXACT = 1.0 / 12.0
J2_EXACT = 1.0 / 720.0

ROOT_DEDUP_TOL = 1e-12
# numpy's companion-matrix roots split a k-fold root by ~eps**(1/k)
_ROOT_CLUSTER_TOL = 1e-6


class ProfileError(ValueError):
    """Raised when a coefficient list does not describe an admissible profile."""


def legendre_mode(x):
    """x2^2/2 - 1/24, the mean-zero quadratic on W."""
    return 0.5 * np.asarray(x) ** 2 - 1.0 / 24.0


@dataclass(frozen=True)
class Profile:
    """Even, mean-zero polynomial cross-section; ``coeffs[k]`` multiplies x2**k."""

    coeffs: tuple

    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def poly(self):
        return Polynomial(self.coeffs)

    def __call__(self, x, der=0):
        p = self.poly
        if der:
            p = p.deriv(der)
        return p(np.asarray(x, dtype=float))

    def to_json(self):
        return {"coeffs": [float(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, obj):
        return make_profile(obj["coeffs"])


# x2^2/2 and (x2^2 - 1/16)^2, before centering
NAMED_PROFILES = {
    "parabola": (0.0, 0.0, 0.5),
    "quartic": (1.0 / 256.0, 0.0, -0.125, 0.0, 1.0),
}


def named_profile(name):
    try:
        return make_profile(NAMED_PROFILES[name])
    except KeyError:
        raise ProfileError(f"unknown profile name {name!r}; known: {sorted(NAMED_PROFILES)}")


def _mean_over_w(power):
    if power % 2:
        return 0.0
    return 2.0 * 0.5 ** (power + 1) / (power + 1)


def make_profile(coeffs):
    """Build a validated profile from coefficients (list by power, or dict power->coeff).

    The constant term is shifted so that the profile has zero mean on W.
    """
    if isinstance(coeffs, dict):
        if not coeffs:
            raise ProfileError("profile coefficient list is empty")
        deg = max(int(k) for k in coeffs)
        arr = np.zeros(deg + 1)
        for k, v in coeffs.items():
            arr[int(k)] = float(v)
    else:
        arr = np.array(list(coeffs), dtype=float)
    if arr.size == 0:
        raise ProfileError("profile coefficient list is empty")
    if not np.all(np.isfinite(arr)):
        raise ProfileError("profile coefficients must be finite")
    odd = arr[1::2]
    if np.any(odd != 0.0):
        if not np.any(arr[2:] != 0.0):
            raise ProfileError("profile is affine")
        raise ProfileError("profile is not even: odd-power coefficients must be zero")
    if not np.any(arr[2:] != 0.0):
        raise ProfileError("profile is affine")
    nz = np.nonzero(arr)[0]
    arr = arr[: nz[-1] + 1]
    mean = sum(c * _mean_over_w(k) for k, c in enumerate(arr))
    arr[0] -= mean
    if not np.any(arr != 0.0):
        raise ProfileError("profile vanishes after centering")
    return Profile(tuple(float(c) for c in arr))


@dataclass(frozen=True)
class DerivedFunctions:
    """The odd polynomials ringring_w (integral of t w' - w) and its c1-corrected version."""

    ringring_w: Polynomial
    ringring_w0: Polynomial
    c1: float


@dataclass(frozen=True)
class SectionConstants:
    c1: float
    c2: float
    J0: float
    J1: float
    J2: float
    J3: float
    J4: float
    warping_stiffness: float = field(init=False)
    torsion_quartic_coeff: float = field(init=False)
    flexural_stiffness: float = field(init=False)

    def __post_init__(self):
        # EL warping stiffness (c1^2 + 12 J4)/12; the reduced energy carries half of it
        object.__setattr__(self, "warping_stiffness", (self.c1**2 + 12.0 * self.J4) / 12.0)
        # membrane 1/1152 plus coupling 1/1440 of theta'^4
        object.__setattr__(self, "torsion_quartic_coeff", 0.5 / 576.0 + self.J2 / 2.0)
        object.__setattr__(self, "flexural_stiffness", (720.0 * self.J3 + self.c2**2) / 1440.0)

    def to_json(self):
        keys = ("c1", "c2", "J0", "J1", "J2", "J3", "J4",
                "warping_stiffness", "torsion_quartic_coeff", "flexural_stiffness")
        return {k: getattr(self, k) for k in keys}


def _quad_nodes(max_degree):
    npts = math.ceil((4 * max_degree + 2) / 2)
    return composite_gauss(npts, W_BOUNDS[0], W_BOUNDS[1], panels=4)


def derived_functions(p):
    w = p.poly
    x = Polynomial([0.0, 1.0])
    integrand = x * w.deriv() - w
    rr = integrand.integ(lbnd=0.0)
    t, wt = _quad_nodes(p.degree + 2)
    c1 = float(np.sum(wt * t * rr(t))) / J1_EXACT
    rr0 = rr - c1 * x
    return DerivedFunctions(ringring_w=rr, ringring_w0=rr0, c1=c1)


def section_constants(p, ell=1.0):
    """Geometric constants of the section; J1, J2 are the closed-form values."""
    d = derived_functions(p)
    t, wt = _quad_nodes(p.degree + 2)
    wv = p(t)
    lm = legendre_mode(t)
    c2 = float(np.sum(wt * lm * wv)) / J2_EXACT
    J3 = float(np.sum(wt * (wv - c2 * lm) ** 2))
    J4 = float(np.sum(wt * d.ringring_w0(t) ** 2))
    J0 = ell**3 / 12.0 + ell / 12.0
    return SectionConstants(c1=d.c1, c2=c2, J0=J0, J1=J1_EXACT, J2=J2_EXACT, J3=J3, J4=J4)


def orthogonality_family(p):
    d = derived_functions(p)
    c2 = section_constants(p).c2
    return [
        lambda t: np.ones_like(t),
        lambda t: t,
        legendre_mode,
        lambda t: p(t) - c2 * legendre_mode(t),
        d.ringring_w0,
    ]


def gram_matrix(funcs, degree):
    t, wt = _quad_nodes(degree)
    vals = np.array([f(t) for f in funcs])
    return (vals * wt) @ vals.T


def orthogonality_report(p):
    """Largest off-diagonal entry (in absolute value) of the L2(W) Gram matrix."""
    G = gram_matrix(orthogonality_family(p), p.degree + 2)
    off = G - np.diag(np.diag(G))
    return float(np.max(np.abs(off)))


def zero_curvature_set(p):
    """Sorted interior roots of the profile's second derivative."""
    wpp = p.poly.deriv(2)
    c = wpp.coef
    if c.size <= 1:
        return []
    roots = wpp.roots()
    scale = max(1.0, float(np.max(np.abs(roots)))) if roots.size else 1.0
    real = np.sort(roots[np.abs(roots.imag) <= _ROOT_CLUSTER_TOL * scale].real)
    clusters = []
    for r in real:
        if clusters and r - clusters[-1][-1] <= _ROOT_CLUSTER_TOL:
            clusters[-1].append(r)
        else:
            clusters.append([r])
    out = []
    for cl in clusters:
        r = float(np.mean(cl))
        if abs(r) < 1e-15:
            r = 0.0
        if W_BOUNDS[0] < r < W_BOUNDS[1]:
            if not out or r - out[-1] > ROOT_DEDUP_TOL:
                out.append(r)
    return out


# 2x2 symmetric matrix helpers used by the membrane algebra

def cof2(A):
    """Cofactor of a 2x2 matrix (last two axes)."""
    A = np.asarray(A)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 1, 0]
    out[..., 1, 0] = -A[..., 0, 1]
    return out


def det2(A):
    A = np.asarray(A)
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def frob(A, B):
    return np.sum(np.asarray(A) * np.asarray(B), axis=(-2, -1))
