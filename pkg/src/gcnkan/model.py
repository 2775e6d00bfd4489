"""Model assembly: the parameter container, initialization, and the full
forward pass for both variants.

gcn-kan:  gcn1 -> gcn2 -> norm -> kan1 -> drop -> norm -> kan2 -> drop
          -> max-pool -> classifier
gcn:      gcn1 -> gcn2 -> dense1 -> drop -> dense2 -> drop
          -> max-pool -> classifier  (the KAN blocks swapped for affine+ReLU
          of the same width; everything else identical)
"""

import copy as _copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import layers as L
from .errors import ConfigError, ShapeError

VARIANTS = ("gcn-kan", "gcn")


@dataclass
class ModelParams:
    """All trainable arrays plus the Adam moment buffers and step counter."""

    variant: str
    gcn1: L.GcnLayer
    gcn2: L.GcnLayer
    head: L.ClassifierHead
    kan1: L.KanLayer = None
    kan2: L.KanLayer = None
    dense1: L.DenseLayer = None
    dense2: L.DenseLayer = None
    epsilon: float = 1e-8
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_step_count: int = 0

    def named_arrays(self):
        """Deterministically ordered (name, array) view of every parameter."""
        out = [("gcn1.weight", self.gcn1.weight), ("gcn2.weight", self.gcn2.weight)]
        if self.variant == "gcn-kan":
            out += [("kan1.coeffs", self.kan1.coeffs), ("kan2.coeffs", self.kan2.coeffs)]
        else:
            out += [
                ("dense1.weight", self.dense1.weight), ("dense1.bias", self.dense1.bias),
                ("dense2.weight", self.dense2.weight), ("dense2.bias", self.dense2.bias),
            ]
        out += [("head.weight", self.head.weight), ("head.bias", self.head.bias)]
        return out

    def set_array(self, name, value):
        obj_name, attr = name.split(".")
        setattr(getattr(self, obj_name), attr, value)

    def copy(self):
        return _copy.deepcopy(self)

    def all_zero(self):
        return all(np.all(arr == 0.0) for _, arr in self.named_arrays())

    def lift(self, tape):
        """Shallow structural copy whose parameter arrays are tape leaves.

        Returns (lifted params, {name: leaf Tensor}) so gradients can be
        routed back to names after the backward sweep.
        """
        lifted = _copy.copy(self)
        leaves = {}
        for name, arr in self.named_arrays():
            leaf = tape.leaf(arr, name)
            leaves[name] = leaf
            obj_name, attr = name.split(".")
            obj = _copy.copy(getattr(lifted, obj_name))
            setattr(obj, attr, leaf)
            setattr(lifted, obj_name, obj)
        return lifted, leaves


def _glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_params(variant, rng, n_features=1, hidden=32, n_classes=2,
                grid_size=10, epsilon=1e-8):
    """Fresh parameters: uniform Glorot for matrix weights, uniform
    +-1/sqrt(fan_in * G) for KAN coefficients, zero biases."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown model variant {variant!r}; use one of {VARIANTS}")
    gcn1 = L.GcnLayer(_glorot(rng, n_features, hidden))
    gcn2 = L.GcnLayer(_glorot(rng, hidden, hidden))
    params = ModelParams(variant=variant, gcn1=gcn1, gcn2=gcn2,
                         head=None, epsilon=epsilon)
    if variant == "gcn-kan":
        s = 1.0 / np.sqrt(hidden * grid_size)
        params.kan1 = L.KanLayer(
            rng.uniform(-s, s, size=(hidden, hidden, grid_size)), grid_size, epsilon)
        params.kan2 = L.KanLayer(
            rng.uniform(-s, s, size=(hidden, hidden, grid_size)), grid_size, epsilon)
    else:
        params.dense1 = L.DenseLayer(_glorot(rng, hidden, hidden), np.zeros((1, hidden)))
        params.dense2 = L.DenseLayer(_glorot(rng, hidden, hidden), np.zeros((1, hidden)))
    params.head = L.ClassifierHead(_glorot(rng, hidden, n_classes),
                                   np.zeros((1, n_classes)))
    for name, arr in params.named_arrays():
        params.adam_m[name] = np.zeros_like(arr)
        params.adam_v[name] = np.zeros_like(arr)
    return params


def model_forward(params, graph, x, training=False, dropout_rate=0.0, rng=None,
                  tape=None, frozen_stats=None, capture=None):
    """Run the full stack on one subject graph.

    x is the (N, F) node-feature matrix. With `tape` the taped logits
    Tensor of shape (1, n_classes) is returned (parameters are expected to
    be pre-lifted onto the tape via params.lift); without it a plain
    length-n_classes ndarray.

    `frozen_stats` replays previously captured normalization statistics so
    perturbed evaluations (finite differences) see the same constants the
    tape saw. `capture`, when a dict, receives the pre-pool activations,
    per-column argmax rows, normalization stats, and logits.
    """
    prop = graph.norm_propagator
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != prop.shape[0]:
        raise ShapeError(
            f"node features {x.shape} do not match propagator {prop.shape}"
        )
    if x.shape[1] != params.gcn1.weight.shape[0]:
        raise ShapeError(
            f"feature width {x.shape[1]} vs gcn1 input width "
            f"{params.gcn1.weight.shape[0]}"
        )
    if training and dropout_rate > 0.0 and rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    h = x if tape is None else tape.leaf(x, "input")

    h = L.gcn_forward(params.gcn1, prop, h)
    h = L.gcn_forward(params.gcn2, prop, h)
    stats_used = []
    if params.variant == "gcn-kan":
        blocks = (params.kan1, params.kan2)
    else:
        blocks = (params.dense1, params.dense2)
    for idx, block in enumerate(blocks):
        prior = frozen_stats[idx] if frozen_stats is not None else None
        h, stats = L.kan_normalize(h, params.epsilon, stats=prior)
        stats_used.append(stats)
        if params.variant == "gcn-kan":
            h = L.kan_forward(block, h)
        else:
            h = L.dense_forward(block, h)
        h = L.dropout(h, dropout_rate, training, rng)
    prepool = h
    z = L.global_max_pool(h)
    logits = L.classify(params.head, z)

    if capture is not None:
        pre = prepool.data if isinstance(prepool, ad.Tensor) else prepool
        capture["prepool"] = pre
        capture["argmax_rows"] = np.argmax(pre, axis=0)
        capture["stats"] = stats_used
        raw = logits.data if isinstance(logits, ad.Tensor) else logits
        capture["logits"] = raw.ravel().copy()
    if tape is None:
        return np.asarray(logits).ravel()
    return logits


def predict_scores(params, graph, table):
    """Positive-class softmax probability for every subject in a binary
    cohort table (inference mode)."""
    scores = []
    for row in table.features:
        logits = model_forward(params, graph, row[:, None])
        shifted = logits - logits.max()
        p = np.exp(shifted)
        p /= p.sum()
        scores.append(float(p[1]))
    return scores
