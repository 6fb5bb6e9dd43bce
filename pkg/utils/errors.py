"""Exception and warning categories raised across the pipeline."""


class TapasError(Exception):
    """Base class for every error raised by the pipeline."""


class ManifoldArgumentError(TapasError, ValueError):
    """A point, tangent or rotation does not match what the manifold expects."""


class SingularityError(TapasError, ValueError):
    """Two points sit on each other's cut locus (antipodal on a sphere)."""

    def __init__(self, message, base=None, point=None, distance=None):
        super().__init__(message)
        self.base = base
        self.point = point
        self.distance = distance


class ConvergenceError(TapasError, RuntimeError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, last_iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class EmptyBinError(TapasError, ValueError):
    def __init__(self, message, bin_index=None):
        super().__init__(message)
        self.bin_index = bin_index


class MissingFrameError(TapasError, KeyError):
    def __init__(self, message, demo_index=None, frame_id=None):
        super().__init__(message)
        self.demo_index = demo_index
        self.frame_id = frame_id

    def __str__(self):
        return self.args[0]


class InconsistentSegmentationError(TapasError, ValueError):
    def __init__(self, message, cut_counts=None):
        super().__init__(message)
        self.cut_counts = cut_counts


class UnsupportedDriverError(TapasError, ValueError):
    pass


class NoCommonDimensionsError(TapasError, ValueError):
    pass


class ScenarioError(TapasError, ValueError):
    pass


class RolloutTimeoutError(TapasError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DatasetSchemaError(TapasError, ValueError):
    """Dataset or model file does not follow its schema.

    ``pointer`` is a JSON pointer (RFC 6901) to the offending field.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class RegularizationWarning(UserWarning):
    pass


class ComponentPrunedWarning(UserWarning):
    pass


class FrameSelectionWarning(UserWarning):
    pass


class RenormalizationWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
