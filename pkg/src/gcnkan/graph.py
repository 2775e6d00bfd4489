"""Shared ROI graph construction.

Edges are Pearson correlations across the subjects of a training cohort,
kept (with sign) when |corr| exceeds a strict threshold; the propagation
operator is the symmetric normalization D^{-1/2} (A + I) D^{-1/2} with
unit self-loops.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDegreeError,
    DegenerateFeatureError,
    ShapeError,
)


@dataclass
class RoiGraph:
    adjacency: np.ndarray  # (N, N) symmetric, zero diagonal, signed entries
    norm_propagator: np.ndarray  # D^{-1/2} (A + I) D^{-1/2}
    threshold_used: float
    roi_names: list = field(default_factory=list)

    @property
    def n_roi(self):
        return self.adjacency.shape[0]

    def edge_count(self):
        return int(np.count_nonzero(self.adjacency) // 2)


def build_adjacency(cohort, tau):
    """Correlation-threshold adjacency over a cohort's ROI columns.

    Each pair (i, j) gets the signed Pearson correlation of columns i and j
    across subjects when its magnitude is strictly above tau, else 0. The
    diagonal is forced to zero; self-loops enter only through the +I of the
    normalized propagator.
    """
    if not 0.0 <= tau < 1.0:
        raise ConfigError(f"tau must be in [0, 1), got {tau}")
    feats = np.asarray(cohort.features, dtype=np.float64)
    if feats.shape[0] < 2:
        raise ConfigError("need at least 2 subjects to correlate ROI columns")
    stds = feats.std(axis=0)
    dead = np.flatnonzero(stds == 0.0)
    if dead.size:
        i = int(dead[0])
        name = cohort.roi_names[i] if cohort.roi_names else str(i)
        raise DegenerateFeatureError(
            f"ROI {name!r} (column {i}) has zero variance across subjects; "
            "its correlations are undefined"
        )
    corr = np.corrcoef(feats, rowvar=False)
    corr = np.clip(corr, -1.0, 1.0)
    adjacency = np.where(np.abs(corr) > tau, corr, 0.0)
    np.fill_diagonal(adjacency, 0.0)
    adjacency = (adjacency + adjacency.T) / 2.0  # kill float asymmetry from corrcoef
    return RoiGraph(
        adjacency=adjacency,
        norm_propagator=normalize_propagator(adjacency),
        threshold_used=float(tau),
        roi_names=list(cohort.roi_names),
    )


def normalize_propagator(adjacency):
    """Symmetric normalization with unit self-loops.

    Raises DegenerateDegreeError when a self-loop degree is <= 0, which can
    happen if a node's retained correlations are strongly negative; that is
    reported rather than clamped.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError("adjacency contains non-finite entries")
    if not np.allclose(a, a.T, atol=1e-12, rtol=0.0):
        raise ShapeError("adjacency must be symmetric")
    with_loops = a + np.eye(a.shape[0])
    degrees = with_loops.sum(axis=1)
    bad = np.flatnonzero(degrees <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise DegenerateDegreeError(
            f"self-loop degree of node {i} is {degrees[i]:.6g} <= 0; "
            "symmetric normalization is undefined"
        )
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return inv_sqrt[:, None] * with_loops * inv_sqrt[None, :]


def save_adjacency_csv(graph, path):
    """Square CSV of the adjacency with an ROI-name header row, plus a
    JSON sidecar recording the threshold."""
    names = graph.roi_names or [str(i) for i in range(graph.n_roi)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in graph.adjacency:
            writer.writerow([repr(float(v)) for v in row])
    meta_path = str(path) + ".meta.json"
    with open(meta_path, "w") as fh:
        json.dump(
            {"threshold": graph.threshold_used, "n_roi": graph.n_roi,
             "edges": graph.edge_count()},
            fh, indent=1)
        fh.write("\n")
    return meta_path
