"""Binary classification metrics: confusion counts at a score threshold,
AUC by tied-rank statistic and by trapezoidal ROC integration, precision,
recall, F1, per-fold evaluation reports, and cross-fold aggregation."""

import json
import math
from collections import namedtuple
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import EvaluationError, UndefinedMetricError

Counts = namedtuple("Counts", ["tp", "tn", "fp", "fn"])


def _check_pair(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.ndim != 1 or labels.ndim != 1 or scores.size != labels.size:
        raise EvaluationError(
            f"scores and labels must be equal-length 1-d, got {scores.shape} "
            f"and {labels.shape}")
    if scores.size == 0:
        raise EvaluationError("cannot evaluate an empty score list")
    if not np.all(np.isfinite(scores)):
        raise EvaluationError("scores contain non-finite values")
    if not np.all((labels == 0) | (labels == 1)):
        raise EvaluationError("labels must be 0 or 1")
    return scores, labels


def confusion(scores, labels, threshold=0.5):
    """Counts with prediction = 1 iff score >= threshold."""
    scores, labels = _check_pair(scores, labels)
    pred = (scores >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    return Counts(tp, tn, fp, fn)


def accuracy(counts):
    total = counts.tp + counts.tn + counts.fp + counts.fn
    return (counts.tp + counts.tn) / total


def tied_ranks(values):
    """1-based ranks, ties sharing the average of their rank span."""
    values = np.asarray(values, dtype=float)
    n = values.size
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(n, dtype=float)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_roc(scores, labels):
    """Rank-statistic AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores, labels = _check_pair(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC needs both classes, got {n_pos} positive and {n_neg} negative")
    ranks = tied_ranks(scores)
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores, labels):
    """ROC curve points (fpr, tpr) from (0,0) to (1,1), thresholds swept
    over distinct scores in descending order."""
    scores, labels = _check_pair(scores, labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC needs both classes, got {n_pos} positive and {n_neg} negative")
    desc = np.argsort(-scores, kind="mergesort")
    s = scores[desc]
    y = labels[desc]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y == 0)
    last_of_tie = np.r_[np.flatnonzero(np.diff(s) != 0.0), s.size - 1]
    tpr = np.r_[0.0, tps[last_of_tie] / n_pos]
    fpr = np.r_[0.0, fps[last_of_tie] / n_neg]
    return fpr, tpr


def auc_trapezoid(scores, labels):
    """AUC by trapezoidal integration of the ROC curve. Agrees with
    auc_roc up to floating point roundoff."""
    fpr, tpr = roc_points(scores, labels)
    return float(np.trapezoid(tpr, fpr))


def f1_score(counts):
    """Returns (precision, recall, f1, flags). A zero denominator yields
    0.0 for the affected metric and a flag naming it."""
    flags = []
    if counts.tp + counts.fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision + recall == 0.0:
        f1 = 0.0
        flags.append("f1_undefined")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1, flags


@dataclass
class EvalReport:
    subject_ids: list
    labels: list
    scores: list
    predictions: list
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    auc_roc: float
    precision: float
    recall: float
    f1: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


METRIC_FIELDS = ("accuracy", "auc_roc", "precision", "recall", "f1")


def evaluate_scores(subject_ids, labels, scores, threshold=0.5):
    """Full per-split evaluation at a fixed decision threshold."""
    scores_arr, labels_arr = _check_pair(scores, labels)
    counts = confusion(scores_arr, labels_arr, threshold)
    precision, recall, f1, flags = f1_score(counts)
    try:
        auc = auc_roc(scores_arr, labels_arr)
    except UndefinedMetricError:
        auc = math.nan
        flags = flags + ["auc_undefined"]
    predictions = [1 if s >= threshold else 0 for s in scores_arr]
    return EvalReport(
        subject_ids=list(subject_ids),
        labels=[int(v) for v in labels_arr],
        scores=[float(s) for s in scores_arr],
        predictions=predictions,
        tp=counts.tp, tn=counts.tn, fp=counts.fp, fn=counts.fn,
        accuracy=accuracy(counts),
        auc_roc=auc,
        precision=precision, recall=recall, f1=f1,
        flags=flags)


def aggregate_metrics(reports):
    """Mean and sample standard deviation of each metric across folds."""
    if not reports:
        raise EvaluationError("cannot aggregate an empty report list")
    out = {}
    for name in METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out[name] = (mean, std)
    return out


def _fmt_pct(mean, std):
    return f"{100.0 * mean:.1f}% ±{100.0 * std:.1f}%"


def _fmt_unit(mean, std):
    return f"{mean:.2f} ±{std:.2f}"


def format_table(rows):
    """Text table of aggregates, one line per model name. Accuracy and AUC
    as percentages to one decimal, F1 on the unit scale to two."""
    header = f"{'model':<12}{'accuracy':<16}{'auc':<16}{'f1':<12}"
    lines = [header]
    for name, agg in rows.items():
        acc = _fmt_pct(*agg["accuracy"])
        auc = _fmt_pct(*agg["auc_roc"])
        f1 = _fmt_unit(*agg["f1"])
        lines.append(f"{name:<12}{acc:<16}{auc:<16}{f1:<12}".rstrip())
    return "\n".join(lines) + "\n"


def save_report(out_dir, cv_result, model_name=None):
    """Write report.json, report.txt, and per_subject.csv for one CV run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = model_name or cv_result.config.model
    agg = cv_result.aggregate
    payload = {
        "model": name,
        "folds": [
            {
                "fold": r.fold_index,
                "best_epoch": r.best_epoch,
                "epochs_run": r.epochs_run,
                "best_val_loss": r.best_val_loss,
                "metrics": {m: getattr(r.report, m) for m in METRIC_FIELDS},
                "counts": {"tp": r.report.tp, "tn": r.report.tn,
                           "fp": r.report.fp, "fn": r.report.fn},
                "flags": r.report.flags,
            }
            for r in cv_result.folds
        ],
        "aggregate": {m: {"mean": agg[m][0], "std": agg[m][1]}
                      for m in METRIC_FIELDS},
        "config": cv_result.config.to_dict(),
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(format_table({name: agg}))
    with open(out_dir / "per_subject.csv", "w") as fh:
        fh.write("subject_id,fold,label,score,prediction\n")
        for r in cv_result.folds:
            rep = r.report
            for sid, label, score, pred in zip(rep.subject_ids, rep.labels,
                                               rep.scores, rep.predictions):
                fh.write(f"{sid},{r.fold_index},{label},{score!r},{pred}\n")
    return out_dir / "report.json"
