"""Exception types shared across the package.

The CLI maps these to distinct exit codes, so keep the hierarchy flat and
stable: configuration problems, file-format problems, and training failures
are different things to a caller.
"""


class HmdactError(Exception):
    """Base class for all package errors."""


class ConfigError(HmdactError, ValueError):
    """Invalid configuration: bad shapes, out-of-range parameters, topology
    that does not close."""


class DataFormatError(HmdactError, ValueError):
    """Malformed dataset file. Carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class WeightFormatError(HmdactError, ValueError):
    """Base for weight-file load failures."""


class WeightMagicError(WeightFormatError):
    """File does not start with the expected magic string."""


class WeightVersionError(WeightFormatError):
    """Unsupported weight-file format version."""


class WeightTopologyError(WeightFormatError):
    """Weight file is valid but its stored topology does not match the
    expected network configuration."""


class WeightTruncationError(WeightFormatError):
    """Weight file ended mid-array; no partial model is returned."""


class CalibrationError(HmdactError, ValueError):
    """Threshold calibration could not run, e.g. a required class is missing
    from the calibration set."""


class TrainingDivergedError(HmdactError, RuntimeError):
    """Training loss became non-finite; aborted with diagnostics."""
