"""Exception hierarchy shared by every stage of the toolkit."""


class ToolkitError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""

    stage = "toolkit"

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}"


# load cell model
class OutOfRangeError(ToolkitError, ValueError):
    stage = "fx29"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InsufficientDataError(ToolkitError):
    stage = "fx29"


class UnstableZeroWarning(UserWarning):
    pass


# acquisition bus
class NackError(ToolkitError):
    stage = "daq"


class StaleDataError(ToolkitError):
    stage = "daq"

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class FrameFormatError(ToolkitError, ValueError):
    stage = "daq"


class BudgetExceededError(ToolkitError):
    stage = "daq"


# signal processing
class InvalidBandError(ToolkitError, ValueError):
    stage = "signal"


class InvalidMVCError(ToolkitError, ValueError):
    stage = "signal"


class ShapeMismatchError(ToolkitError, ValueError):
    stage = "signal"


# segmentation
class InsufficientCyclesError(ToolkitError):
    stage = "segmentation"

    def __init__(self, message, rejected=None):
        super().__init__(message)
        self.rejected = list(rejected or [])


# statistics
class DegenerateInputError(ToolkitError, ValueError):
    stage = "metrics"


# front end
class ConfigError(ToolkitError, ValueError):
    stage = "config"

    def __init__(self, message, field=None):
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class ParseError(ToolkitError, ValueError):
    stage = "io"

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
        if line is not None:
            loc = f"{loc}:{line}" if loc else f"line {line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
