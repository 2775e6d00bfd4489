"""Hot kernels for the grid-ReLU KAN transform.

Two interchangeable backends compute the same contraction

    out[n, i] = sum_j sum_k coeffs[i, j, k] * max(0, h[n, j] - grid[k])

and its vector-Jacobian products: a numpy backend (always available) and a
compiled Cython backend (built by setup.py). The compiled backend is picked
at import time when present; set GCNKAN_DISABLE_EXT=1 to force numpy.

The two backends agree to float rounding (~1e-13 relative), not bitwise,
because they accumulate in different orders.
"""

import os

import numpy as np


def _as_c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def kan_forward_numpy(h, coeffs, grid):
    """h: (N, J), coeffs: (I, J, G), grid: (G,) -> (N, I)."""
    n = h.shape[0]
    i, j, g = coeffs.shape
    basis = np.maximum(h[:, :, None] - grid[None, None, :], 0.0)  # (N, J, G)
    flat = coeffs.transpose(1, 2, 0).reshape(j * g, i)
    return basis.reshape(n, j * g) @ flat


def kan_backward_numpy(h, coeffs, grid, grad_out):
    """Gradients of the contraction w.r.t. h and coeffs.

    Returns (grad_h: (N, J), grad_coeffs: (I, J, G)). The ReLU subgradient
    at exactly zero is taken as zero.
    """
    n = h.shape[0]
    i, j, g = coeffs.shape
    diff = h[:, :, None] - grid[None, None, :]
    basis = np.maximum(diff, 0.0)
    active = diff > 0.0
    grad_coeffs = (grad_out.T @ basis.reshape(n, j * g)).reshape(i, j, g)
    per_cell = (grad_out @ coeffs.reshape(i, j * g)).reshape(n, j, g)
    grad_h = np.einsum("njk,njk->nj", active, per_cell)
    return grad_h, grad_coeffs


try:
    from . import _grid_ext as _ext
except ImportError:
    _ext = None

HAVE_EXT = _ext is not None and os.environ.get("GCNKAN_DISABLE_EXT") != "1"

_BACKENDS = {"numpy": (kan_forward_numpy, kan_backward_numpy)}
if _ext is not None:

    def kan_forward_ext(h, coeffs, grid):
        return _ext.kan_forward(_as_c(h), _as_c(coeffs), _as_c(grid))

    def kan_backward_ext(h, coeffs, grid, grad_out):
        return _ext.kan_backward(_as_c(h), _as_c(coeffs), _as_c(grid), _as_c(grad_out))

    _BACKENDS["ext"] = (kan_forward_ext, kan_backward_ext)

active_backend = "ext" if HAVE_EXT else "numpy"
kan_forward, kan_backward = _BACKENDS[active_backend]


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Switch the active backend ("numpy" or "ext"). Used by tests and the
    kernel benchmark; normal code never calls this."""
    global kan_forward, kan_backward, active_backend
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    active_backend = name
    kan_forward, kan_backward = _BACKENDS[name]
