"""Exception hierarchy shared across the package."""


class HnradError(Exception):
    """Base class for all errors raised by hnrad."""


class VolumeFormatError(HnradError):
    """File is not a readable NIfTI volume."""


class DimensionalityError(HnradError):
    """Volume is not three-dimensional."""


class LabelError(HnradError):
    """Mask contains labels outside {0, 1, 2}."""


class MethodError(HnradError):
    """Interpolation method not allowed for this kind of grid."""


class GeometryError(HnradError):
    """Two grids that must share geometry do not."""


class EmptyROIError(HnradError):
    """A region of interest required to be non-empty is empty."""


class DetectionError(HnradError):
    """Automatic brain detection found nothing above threshold."""


class FeatureUndefinedError(HnradError):
    """A feature cannot be computed for this input."""


class DesignError(HnradError):
    """Harmonization design matrix is singular or otherwise unusable."""


class BatchSizeError(HnradError):
    """A batch has too few samples for harmonization."""


class SchemaError(HnradError):
    """Feature names or table columns do not match what is required."""


class DegenerateFeatureError(HnradError):
    """A model covariate has zero variance."""


class UndefinedMetricError(HnradError):
    """A metric has no defined value for this input (e.g. no comparable pairs)."""


class EmptySelectionError(HnradError):
    """Feature selection removed every candidate."""


class PipelineError(HnradError):
    """A pipeline stage could not complete."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class DegenerateValueWarning(UserWarning):
    """A documented convention replaced an otherwise undefined value."""
