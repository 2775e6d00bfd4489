"""Exception hierarchy. Every error the library raises on purpose derives
from GcnKanError so the CLI can map failures to a nonzero exit status."""


class GcnKanError(Exception):
    """Base class for all library errors."""


class ShapeError(GcnKanError):
    """Operand shapes are incompatible; the message names both shapes."""


class ConfigError(GcnKanError):
    """A configuration value violates its allowed range."""


class DegenerateFeatureError(GcnKanError):
    """An ROI column has zero variance, so its correlations are undefined."""


class DegenerateDegreeError(GcnKanError):
    """A self-loop degree is <= 0, so symmetric normalization is undefined."""


class TapeUsageError(GcnKanError):
    """A gradient tape was used incorrectly (e.g. loss not recorded on it)."""


class EvaluationError(GcnKanError):
    """A function evaluation produced a non-finite value."""


class UndefinedMetricError(GcnKanError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class CohortParseError(GcnKanError):
    """A cohort file is malformed; the message carries the line number."""


class CompatibilityError(GcnKanError):
    """Checkpoint and cohort shapes do not match."""


class NonFiniteGradientError(GcnKanError):
    """Training hit a NaN/Inf gradient; the message names the parameter."""
