"""Cohort containers and the plain-CSV cohort file format.

A cohort file is a CSV with header `subject_id,label,<roi...>` and one row
per subject. Group labels in the file are free strings (e.g. CN/MCI/AD);
training operates on a binary view produced by `select_task`, which maps a
(positive, negative) label pair onto class indices 1/0.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CohortParseError, ConfigError


@dataclass
class Cohort:
    """Raw cohort as stored on disk: string group labels, one feature row
    per subject, one column per ROI."""

    subject_ids: list
    labels: list  # group names, strings
    features: np.ndarray  # (subjects, n_roi) float64
    roi_names: list

    def validate(self):
        s, n = self.features.shape
        if not (len(self.subject_ids) == len(self.labels) == s):
            raise ConfigError(
                f"cohort row mismatch: {len(self.subject_ids)} ids, "
                f"{len(self.labels)} labels, {s} feature rows"
            )
        if len(self.roi_names) != n:
            raise ConfigError(f"{len(self.roi_names)} roi names for {n} columns")
        if n < 2:
            raise ConfigError(f"need at least 2 ROIs, got {n}")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("cohort features contain non-finite values")
        return self

    def group_counts(self):
        counts = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return counts


@dataclass
class CohortTable:
    """Binary training view: labels are class indices in {0, 1}."""

    subject_ids: list
    labels: list  # ints in {0, 1}
    features: np.ndarray
    roi_names: list

    def validate(self):
        s, n = self.features.shape
        if not (len(self.subject_ids) == len(self.labels) == s):
            raise ConfigError(
                f"cohort row mismatch: {len(self.subject_ids)} ids, "
                f"{len(self.labels)} labels, {s} feature rows"
            )
        if len(self.roi_names) != n:
            raise ConfigError(f"{len(self.roi_names)} roi names for {n} columns")
        if n < 2:
            raise ConfigError(f"need at least 2 ROIs, got {n}")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("cohort features contain non-finite values")
        if any(lab not in (0, 1) for lab in self.labels):
            raise ConfigError("binary cohort labels must be 0 or 1")
        if len(set(self.labels)) < 2:
            raise ConfigError("cohort must contain at least one subject of each class")
        return self

    @property
    def n_subjects(self):
        return self.features.shape[0]

    @property
    def n_roi(self):
        return self.features.shape[1]

    def subset(self, indices):
        idx = list(indices)
        return CohortTable(
            subject_ids=[self.subject_ids[i] for i in idx],
            labels=[self.labels[i] for i in idx],
            features=self.features[idx],
            roi_names=self.roi_names,
        )

    def to_cohort(self):
        return Cohort(
            subject_ids=list(self.subject_ids),
            labels=[str(lab) for lab in self.labels],
            features=self.features,
            roi_names=list(self.roi_names),
        )


def select_task(cohort, positive, negative):
    """Restrict a raw cohort to two groups; `positive` becomes class 1."""
    if positive == negative:
        raise ConfigError(f"task labels must differ, got {positive!r} twice")
    present = set(cohort.labels)
    for lab in (positive, negative):
        if lab not in present:
            raise ConfigError(
                f"label {lab!r} not in cohort (has {sorted(present)})"
            )
    keep = [i for i, lab in enumerate(cohort.labels) if lab in (positive, negative)]
    return CohortTable(
        subject_ids=[cohort.subject_ids[i] for i in keep],
        labels=[1 if cohort.labels[i] == positive else 0 for i in keep],
        features=cohort.features[keep],
        roi_names=list(cohort.roi_names),
    ).validate()


def save_cohort(cohort, path):
    """Write the CSV cohort file. Floats are written with repr so a reload
    is bit-exact."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "label"] + list(cohort.roi_names))
        for sid, lab, row in zip(cohort.subject_ids, cohort.labels, cohort.features):
            writer.writerow([sid, lab] + [repr(float(v)) for v in row])


def load_cohort(path):
    """Parse a cohort CSV; malformed content raises CohortParseError with
    the offending line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortParseError(f"{path}: line 1: empty file") from None
        if len(header) < 4 or header[0] != "subject_id" or header[1] != "label":
            raise CohortParseError(
                f"{path}: line 1: header must start with subject_id,label "
                "and list at least two ROI columns"
            )
        roi_names = header[2:]
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortParseError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise CohortParseError(f"{path}: line {lineno}: {exc}") from None
            ids.append(row[0])
            labels.append(row[1])
            rows.append(values)
        if not rows:
            raise CohortParseError(f"{path}: line 2: no subject rows")
    features = np.asarray(rows, dtype=np.float64)
    cohort = Cohort(subject_ids=ids, labels=labels, features=features,
                    roi_names=roi_names)
    try:
        cohort.validate()
    except ConfigError as exc:
        raise CohortParseError(f"{path}: {exc}") from None
    return cohort


def default_roi_names(n_roi):
    return [f"ROI_{i:03d}" for i in range(n_roi)]
