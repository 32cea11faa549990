class LowLoadException(Exception):
    pass


class TelemetryParseError(LowLoadException, ValueError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SchemaInferenceError(LowLoadException, ValueError):
    pass


class UndefinedRatioError(LowLoadException, ValueError):
    pass


class NotEvaluableError(LowLoadException, ValueError):
    def __init__(self, message, days=()):
        super().__init__(message)
        self.days = tuple(days)


class InsufficientHistoryError(LowLoadException, ValueError):
    def __init__(self, message, missing_days=()):
        super().__init__(message)
        self.missing_days = tuple(missing_days)


class EmptyWindowError(LowLoadException, ValueError):
    pass


class UndefinedMetricError(LowLoadException, ValueError):
    pass


class SchedulingError(LowLoadException):
    def __init__(self, server_id, message):
        super().__init__(f"{server_id}: {message}")
        self.server_id = server_id
        self.reason = message


class ImpossibleMixError(LowLoadException, ValueError):
    pass


class StageError(LowLoadException):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


class RunNotFoundError(LowLoadException):
    pass


class ValidationFailedError(StageError):
    def __init__(self, message):
        super().__init__("validate", message)
