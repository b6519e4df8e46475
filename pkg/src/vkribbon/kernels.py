"""Selects the compiled element kernel when available, else the numpy one.

Set VKRIBBON_PURE_PYTHON=1 to force the numpy implementation.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py.element_grad_hess

if os.environ.get("VKRIBBON_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        _impl = _compiled.element_grad_hess
        BACKEND = "compiled"


def _call(impl, W, U1, U2, T, wq, wp, eps, beta, want_hess=True):
    c = np.ascontiguousarray
    return impl(c(W, dtype=float), c(U1, dtype=float), c(U2, dtype=float), c(T, dtype=float),
                c(wq, dtype=float), c(wp, dtype=float), float(eps), float(beta), want_hess)


def element_grad_hess(*args, **kw):
    return _call(_impl, *args, **kw)


def python_element_grad_hess(*args, **kw):
    return _call(_kernels_py.element_grad_hess, *args, **kw)


def compiled_element_grad_hess(*args, **kw):
    from . import _kernels
    return _call(_kernels.element_grad_hess, *args, **kw)
