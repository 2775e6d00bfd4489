"""Post-hoc interpretation: per-unit importance from learned grid
coefficients, and per-region saliency from max-pool attribution."""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import model_forward


def unit_importance(coeffs):
    """Mean absolute coefficient mass routed into each output unit.

    coeffs has shape (out, in, grid); the score for unit i is the sum of
    |coeffs[i, j, k]| over j and k divided by the in-width. Summation uses
    math.fsum so the result does not depend on traversal order.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 3:
        raise ConfigError(f"coefficients must be 3-d, got shape {coeffs.shape}")
    n_out, n_in, _ = coeffs.shape
    flat = np.abs(coeffs)
    return np.array([math.fsum(flat[i].ravel()) / n_in for i in range(n_out)])


@dataclass
class ImportanceReport:
    unit_scores: dict
    roi_scores: np.ndarray
    roi_ranking: list
    roi_names: list
    flags: list = field(default_factory=list)


def _normalize_saliency(raw):
    lo = float(raw.min())
    hi = float(raw.max())
    flags = []
    if hi > lo:
        scores = (raw - lo) / (hi - lo)
    elif hi != 0.0:
        scores = np.ones_like(raw)
    else:
        scores = np.zeros_like(raw)
        flags.append("saliency_degenerate")
    return scores, flags


def roi_saliency(params, graph, table):
    """Credit each region with the pre-pool activation it contributed at
    the columns where it won the max pool, weighted by the magnitude of
    the classifier weight toward the predicted class, averaged over
    subjects, then min-max scaled to [0, 1]."""
    n_roi = table.n_roi
    if n_roi != graph.adjacency.shape[0]:
        raise ConfigError(
            f"cohort has {n_roi} regions but the graph has "
            f"{graph.adjacency.shape[0]} nodes")
    head_w = params.head.weight
    totals = np.zeros(n_roi)
    for row in table.features:
        capture = {}
        logits = model_forward(params, graph, row[:, None], capture=capture)
        shifted = logits - logits.max()
        p = np.exp(shifted)
        p /= p.sum()
        predicted = 1 if p[1] >= 0.5 else 0
        prepool = capture["prepool"]
        winners = capture["argmax_rows"]
        for col, node in enumerate(winners):
            totals[node] += prepool[node, col] * abs(head_w[col, predicted])
    return totals / table.n_subjects


def importance_report(params, graph, table):
    """Unit importance for both grid layers plus region saliency with a
    stable high-to-low ranking."""
    if params.variant != "gcn-kan":
        raise ConfigError(
            f"coefficient importance needs the gcn-kan variant, got "
            f"{params.variant!r}")
    unit_scores = {
        "kan1": unit_importance(params.kan1.coeffs),
        "kan2": unit_importance(params.kan2.coeffs),
    }
    raw = roi_saliency(params, graph, table)
    scores, flags = _normalize_saliency(raw)
    ranking = list(np.argsort(-scores, kind="mergesort"))
    return ImportanceReport(unit_scores=unit_scores,
                            roi_scores=scores,
                            roi_ranking=[int(i) for i in ranking],
                            roi_names=list(graph.roi_names),
                            flags=flags)


def save_importance(out_dir, report):
    """Write roi_saliency.csv (rank order) and unit_importance.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "roi_saliency.csv", "w") as fh:
        fh.write("roi_name,saliency,rank\n")
        for rank, idx in enumerate(report.roi_ranking, start=1):
            fh.write(f"{report.roi_names[idx]},{float(report.roi_scores[idx])!r},"
                     f"{rank}\n")
    with open(out_dir / "unit_importance.csv", "w") as fh:
        fh.write("layer,unit,score\n")
        for layer, scores in report.unit_scores.items():
            for unit, score in enumerate(scores):
                fh.write(f"{layer},{unit},{float(score)!r}\n")
    return out_dir / "roi_saliency.csv"
