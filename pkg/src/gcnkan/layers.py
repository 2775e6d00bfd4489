"""Differentiable building blocks: graph convolution, grid-ReLU KAN layer
with its min-max input normalization, inverted dropout, global max-pool,
the linear classifier head, and the plain dense block used by the baseline
model.

Every function accepts either raw ndarrays or taped Tensors for the data
path; weights are whatever the layer dataclass holds (ndarrays normally,
Tensors when a training step has lifted them onto a tape).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError


@dataclass
class GcnLayer:
    """One graph convolution: ReLU(propagator @ h @ weight)."""

    weight: object  # (f_in, f_out)


@dataclass
class KanLayer:
    """Per-unit sums of shifted-ReLU basis functions on a fixed [0, 1) grid.

    coeffs[i, j, k] weights basis max(0, x_j - k/G) in output unit i.
    """

    coeffs: object  # (n_out, n_in, grid_size)
    grid_size: int
    epsilon: float = 1e-8
    grid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.grid_size < 1:
            raise ConfigError(f"grid_size must be >= 1, got {self.grid_size}")
        self.grid = np.arange(self.grid_size, dtype=np.float64) / self.grid_size


@dataclass
class DenseLayer:
    """Affine + ReLU hidden block (the non-KAN baseline)."""

    weight: object  # (f_in, f_out)
    bias: object  # (1, f_out)


@dataclass
class ClassifierHead:
    weight: object  # (hidden, n_classes)
    bias: object  # (1, n_classes)


def _ncols(x):
    return (x.data if isinstance(x, ad.Tensor) else x).shape[1]


def gcn_forward(layer, propagator, h):
    """ReLU(propagator @ h @ weight)."""
    n = propagator.shape[0]
    if propagator.shape != (n, n):
        raise ShapeError(f"propagator must be square, got {propagator.shape}")
    return ad.relu(ad.matmul(ad.matmul(propagator, h), layer.weight))


def kan_normalize(h, epsilon, stats=None):
    """Columnwise min-max scaling onto [0, 1): (h - min) / (max - min + eps).

    Statistics come from the values themselves unless `stats` (a previous
    (min, max) pair) is supplied; either way they are constants for
    differentiation, so the gradient is a fixed columnwise rescale.
    Constant columns map to exactly zero thanks to epsilon.
    """
    values = h.data if isinstance(h, ad.Tensor) else np.asarray(h)
    if stats is None:
        mins = values.min(axis=0, keepdims=True)
        maxs = values.max(axis=0, keepdims=True)
    else:
        mins, maxs = stats
    scaled = ad.shift_scale(h, mins, 1.0 / (maxs - mins + epsilon))
    return scaled, (mins, maxs)


def kan_forward(layer, h_normalized):
    """Apply the grid-ReLU transform row by row; (N, J) -> (N, I).

    Inputs are expected on the grid domain [0, 1]."""
    if _ncols(h_normalized) != layer.coeffs.shape[1]:
        raise ShapeError(
            f"kan_forward: input width {_ncols(h_normalized)} vs "
            f"coeff width {layer.coeffs.shape[1]}"
        )
    return ad.kan_combine(h_normalized, layer.coeffs, layer.grid)


def dropout(h, rate, training, rng):
    """Inverted dropout: zero with probability `rate`, scale survivors by
    1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return h
    shape = h.data.shape if isinstance(h, ad.Tensor) else h.shape
    mask = (rng.random(shape) >= rate) / (1.0 - rate)
    return ad.mul(h, mask)


def global_max_pool(h):
    """Columnwise max over nodes as a (1, F) row; gradient goes to the
    lowest-index argmax row per column."""
    return ad.col_max(h)


def classify(head, z):
    """Affine map from the pooled vector to class logits."""
    if _ncols(z) != head.weight.shape[0]:
        raise ShapeError(
            f"classify: pooled width {_ncols(z)} vs head input "
            f"{head.weight.shape[0]}"
        )
    return ad.add(ad.matmul(z, head.weight), head.bias)


def dense_forward(layer, h):
    """ReLU(h @ weight + bias), with the bias broadcast across rows."""
    if _ncols(h) != layer.weight.shape[0]:
        raise ShapeError(
            f"dense_forward: input width {_ncols(h)} vs weight input "
            f"{layer.weight.shape[0]}"
        )
    n = (h.data if isinstance(h, ad.Tensor) else h).shape[0]
    lin = ad.matmul(h, layer.weight)
    ones = np.ones((n, 1))
    return ad.relu(ad.add(lin, ad.matmul(ones, layer.bias)))
