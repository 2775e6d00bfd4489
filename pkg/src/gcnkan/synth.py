"""Synthetic cohorts: Gaussian region features with optional correlated
blocks and a planted signal on a chosen set of regions, shared within each
subject so the signal also shows up as inter-region correlation."""

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, CohortTable, default_roi_names
from .errors import ConfigError

NONLINEARITIES = ("none", "quadratic", "sine")


@dataclass
class SynthSpec:
    n_subjects_per_class: int = 45
    n_roi: int = 90
    signal_rois: tuple = (7, 12, 30)
    signal_strength: float = 1.0
    nonlinearity: str = "none"
    noise_sd: float = 1.0
    correlation_blocks: tuple = ()  # of (roi_indices, rho)
    seed: int = 0

    def validate(self):
        if self.n_subjects_per_class < 1:
            raise ConfigError(
                f"n_subjects_per_class must be >= 1, got {self.n_subjects_per_class}")
        if self.n_roi < 2:
            raise ConfigError(f"n_roi must be >= 2, got {self.n_roi}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError(
                f"nonlinearity must be one of {NONLINEARITIES}, "
                f"got {self.nonlinearity!r}")
        if self.noise_sd <= 0:
            raise ConfigError(f"noise_sd must be positive, got {self.noise_sd}")
        if self.signal_strength < 0:
            raise ConfigError(
                f"signal_strength must be >= 0, got {self.signal_strength}")
        for r in self.signal_rois:
            if not 0 <= r < self.n_roi:
                raise ConfigError(
                    f"signal roi {r} out of range for {self.n_roi} regions")
        if len(set(self.signal_rois)) != len(self.signal_rois):
            raise ConfigError("signal_rois contains duplicates")
        seen = set()
        for rois, rho in self.correlation_blocks:
            if not 0.0 <= rho < 1.0:
                raise ConfigError(f"block correlation must be in [0, 1), got {rho}")
            for r in rois:
                if not 0 <= r < self.n_roi:
                    raise ConfigError(
                        f"block roi {r} out of range for {self.n_roi} regions")
                if r in seen:
                    raise ConfigError(f"roi {r} appears in more than one block")
                seen.add(r)
        return self


def _subject_features(spec, rng, scale):
    """One subject row. The noise field is drawn identically regardless of
    `scale`, so groups differ only through the planted signal."""
    x = spec.noise_sd * rng.standard_normal(spec.n_roi)
    for rois, rho in spec.correlation_blocks:
        z = rng.standard_normal()
        idx = np.asarray(rois, dtype=int)
        x[idx] = spec.noise_sd * (math.sqrt(rho) * z
                                  + math.sqrt(1.0 - rho)
                                  * rng.standard_normal(idx.size))
    s = spec.signal_strength
    if spec.nonlinearity == "none":
        delta = s
    elif spec.nonlinearity == "quadratic":
        u = rng.standard_normal()
        delta = s * (u * u - 1.0) / math.sqrt(2.0)
    else:  # sine
        u = rng.random()
        delta = s * math.sqrt(2.0) * math.sin(2.0 * math.pi * u)
    if scale != 0.0 and spec.signal_rois:
        x[np.asarray(spec.signal_rois, dtype=int)] += scale * delta
    return x


def generate_group_cohort(spec, groups):
    """Cohort with string group labels; each group is (name, count, scale),
    where scale multiplies the planted signal."""
    spec.validate()
    if not groups:
        raise ConfigError("at least one group is required")
    for name, count, _scale in groups:
        if count < 1:
            raise ConfigError(f"group {name!r} must have at least one subject")
    rng = np.random.default_rng(spec.seed)
    rows, labels, ids = [], [], []
    k = 0
    for name, count, scale in groups:
        for _ in range(count):
            rows.append(_subject_features(spec, rng, scale))
            labels.append(str(name))
            ids.append(f"S{k:04d}")
            k += 1
    return Cohort(subject_ids=ids, labels=labels,
                  features=np.array(rows),
                  roi_names=default_roi_names(spec.n_roi)).validate()


def generate_cohort(spec):
    """Binary cohort table: class 0 carries no signal, class 1 carries the
    planted signal at full strength."""
    spec.validate()
    n = spec.n_subjects_per_class
    cohort = generate_group_cohort(spec, [("0", n, 0.0), ("1", n, 1.0)])
    return CohortTable(subject_ids=cohort.subject_ids,
                       labels=np.array([int(v) for v in cohort.labels]),
                       features=cohort.features,
                       roi_names=cohort.roi_names).validate()
