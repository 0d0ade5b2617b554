"""Exception hierarchy for the eventail package."""


class EventailError(Exception):
    """Base class for all errors raised by this package."""


class BehindCameraError(EventailError):
    """A 3D point with non-positive depth was passed to the projection."""


class DegenerateLineError(EventailError):
    """Line configuration is degenerate (e.g. passes through the camera center)."""


class DegenerateSampleError(EventailError):
    """An event sample is too degenerate to define a working frame."""


class InsufficientDataError(EventailError):
    """Fewer events than the operation requires."""


class UnobservableVelocityError(EventailError):
    """The velocity system is rank deficient (e.g. no temporal baseline)."""


class UnderDeterminedError(EventailError):
    """Too few partial observations to determine a velocity direction."""


class InvalidObservationError(EventailError):
    """A partial velocity observation carries no information (v_y = v_z = 0)."""


class DegenerateGeometryError(EventailError):
    """Observation geometry leaves more than one velocity direction unconstrained."""


class MissingImuError(EventailError):
    """No gyroscope samples available for unrotation."""


class EventFileError(EventailError):
    """Malformed event/IMU/trajectory file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += str(path)
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MotionDomainError(EventailError):
    """Time outside the domain of a motion model."""


class UndefinedRateError(EventailError):
    """Success rate requested over an empty report list."""


class AlignmentError(EventailError):
    """Estimate and ground-truth timestamps do not overlap."""


class ConfigError(EventailError):
    """Invalid run configuration."""
