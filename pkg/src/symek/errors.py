"""Exception types raised across the package."""


class SymekError(Exception):
    """Base class for all errors raised by symek."""


class ModelMismatch(SymekError):
    pass


class NotInCone(SymekError):
    pass


class ScheduleExhausted(SymekError):
    pass


class NotSymmetric(SymekError):
    pass


class NotNonnegative(SymekError):
    pass


class NotProper(SymekError):
    pass


class NotMonotone(SymekError):
    pass


class NotConverged(SymekError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MethodUnavailable(SymekError):
    pass


class StageError(SymekError):
    """A failure inside one stage of a symmetric Palais-Smale run."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(SymekError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ParseError(ConfigError):
    def __init__(self, message, position=None):
        where = f" at position {position}" if position is not None else ""
        super().__init__(message + where)
        self.position = position
