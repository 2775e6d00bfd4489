"""Model checkpoints as JSON: parameters, the training-split graph, and
the run configuration. Floats survive the JSON round trip bit for bit
because Python serializes them with repr."""

import json
from pathlib import Path

import numpy as np

from .errors import CompatibilityError
from .graph import RoiGraph, normalize_propagator
from .model import VARIANTS, init_params
from .training import TrainConfig

FORMAT_TAG = "gcnkan-checkpoint-v1"


def _pack(arr):
    arr = np.asarray(arr, dtype=float)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _unpack(entry, what):
    shape = tuple(entry["shape"])
    data = np.array(entry["data"], dtype=float)
    if data.size != int(np.prod(shape)):
        raise CompatibilityError(
            f"{what}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape)


def save_checkpoint(path, params, config, graph, seed=None, task=None):
    payload = {
        "format": FORMAT_TAG,
        "variant": params.variant,
        "seed": config.seed if seed is None else seed,
        "task": task,
        "config": config.to_dict(),
        "roi_names": list(graph.roi_names),
        "graph": {
            "threshold": graph.threshold_used,
            "adjacency": _pack(graph.adjacency),
        },
        "params": {name: _pack(arr) for name, arr in params.named_arrays()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path


def load_checkpoint(path):
    """Returns (params, config, graph, meta) with the propagator rebuilt
    from the stored adjacency."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT_TAG:
        raise CompatibilityError(
            f"unrecognized checkpoint format {payload.get('format')!r}, "
            f"expected {FORMAT_TAG!r}")
    variant = payload.get("variant")
    if variant not in VARIANTS:
        raise CompatibilityError(f"unknown model variant {variant!r}")

    config = TrainConfig(**payload["config"])
    adjacency = _unpack(payload["graph"]["adjacency"], "graph adjacency")
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise CompatibilityError(
            f"graph adjacency must be square, got {adjacency.shape}")
    roi_names = list(payload["roi_names"])
    if len(roi_names) != adjacency.shape[0]:
        raise CompatibilityError(
            f"{len(roi_names)} roi names for {adjacency.shape[0]} nodes")
    graph = RoiGraph(adjacency=adjacency,
                     norm_propagator=normalize_propagator(adjacency),
                     threshold_used=float(payload["graph"]["threshold"]),
                     roi_names=roi_names)

    params = init_params(variant, np.random.default_rng(0), n_features=1,
                         hidden=config.hidden, n_classes=2,
                         grid_size=config.grid_size, epsilon=config.epsilon)
    stored = payload["params"]
    expected = [name for name, _ in params.named_arrays()]
    if sorted(stored) != sorted(expected):
        raise CompatibilityError(
            f"checkpoint parameters {sorted(stored)} do not match the "
            f"{variant!r} layout {sorted(expected)}")
    for name, arr in params.named_arrays():
        loaded = _unpack(stored[name], f"parameter {name}")
        if loaded.shape != arr.shape:
            raise CompatibilityError(
                f"parameter {name}: stored shape {loaded.shape} does not "
                f"match expected {arr.shape}")
        params.set_array(name, loaded)

    meta = {"format": payload["format"], "seed": payload["seed"],
            "task": payload["task"]}
    return params, config, graph, meta


def check_cohort_compat(graph, table):
    """Raise unless the cohort has one feature row per graph node."""
    if table.n_roi != graph.adjacency.shape[0]:
        raise CompatibilityError(
            f"cohort has {table.n_roi} regions but the checkpoint graph has "
            f"{graph.adjacency.shape[0]} nodes")
