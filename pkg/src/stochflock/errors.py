"""Exception types shared across the package."""


class StochFlockError(Exception):
    """Base class for all package errors."""


class InvalidParameter(StochFlockError, ValueError):
    """A scalar or descriptor parameter is out of its admissible range."""


class ConfigError(StochFlockError, ValueError):
    """A configuration file or descriptor cannot be interpreted.

    ``path`` holds the dotted field path when one is known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class InvalidIndex(StochFlockError, ValueError):
    """A cell index was built from different positions than it is used with."""


class InvalidInput(StochFlockError, ValueError):
    """Input data has an unsupported shape or content."""


class Unsupported(StochFlockError, ValueError):
    """The requested computation is not available for these inputs."""


class CapExceeded(StochFlockError, ValueError):
    """Problem size exceeds a configured cap."""


class NumericalBlowup(StochFlockError, FloatingPointError):
    """The time stepper produced a non-finite or runaway state.

    Attributes
    ----------
    step : int
        Index of the step that produced the bad state.
    diagnostics : object or None
        Diagnostics recorded before the failure.
    """

    def __init__(self, step, message="", diagnostics=None):
        self.step = step
        self.diagnostics = diagnostics
        super().__init__(f"numerical blow-up at step {step}" + (f": {message}" if message else ""))
