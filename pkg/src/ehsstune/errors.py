"""Exception types raised across the package."""


class EhssError(Exception):
    """Base class for package errors."""


class DomainError(EhssError, ValueError):
    """A parameter lies outside its mathematical domain."""


class NonFiniteState(EhssError, FloatingPointError):
    """A state or input became NaN or infinite."""


class SaturationError(EhssError):
    """The pressure reached the supply limit where the input gain is undefined."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class DivergenceError(EhssError):
    """A simulation left the admissible region; ``log`` holds the partial record."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class IncompleteLog(EhssError):
    """An operation needs a complete (non-diverged) log."""


class EvaluationError(EhssError):
    """An objective evaluation failed in a way that cannot be mapped to a sentinel."""


class ConfigError(EhssError):
    """An experiment configuration file is malformed."""

    def __init__(self, message, path=None, line=None):
        loc = f"{path}:{line}: " if path is not None and line is not None else (
            f"{path}: " if path is not None else "")
        super().__init__(loc + message)
        self.path = path
        self.line = line
