"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class ReviewAdvisorError(Exception):
    """Base class for all errors raised by this package."""


# -- corpus -----------------------------------------------------------------


class MalformedRecord(ReviewAdvisorError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# -- embedding / geometry ---------------------------------------------------


class DimensionMismatch(ReviewAdvisorError):
    pass


class ZeroNormVector(ReviewAdvisorError):
    pass


class ProviderUnreachable(ReviewAdvisorError):
    pass


class ProviderError(ReviewAdvisorError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class TooFewPoints(ReviewAdvisorError):
    pass


class ZeroNormCentroid(ReviewAdvisorError):
    pass


# -- LLM gateway ------------------------------------------------------------


class BackendExhausted(ReviewAdvisorError):
    def __init__(self, backend: str, attempts: int, last_error: str):
        super().__init__(f"backend {backend!r} failed after {attempts} attempts: {last_error}")
        self.backend = backend
        self.attempts = attempts
        self.last_error = last_error


class ScriptExhausted(ReviewAdvisorError):
    pass


class OutputFormatError(ReviewAdvisorError):
    """LLM output could not be used; callers may re-ask the model once or twice."""


class NoJsonFound(OutputFormatError):
    pass


class ParseError(OutputFormatError):
    def __init__(self, position: int, message: str = ""):
        super().__init__(f"invalid JSON at position {position}" + (f": {message}" if message else ""))
        self.position = position


class SchemaError(OutputFormatError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class TooFewRecommendations(OutputFormatError):
    pass


class ScoreOutOfRange(OutputFormatError):
    pass


class MissingScore(OutputFormatError):
    pass


class AmbiguousChoice(OutputFormatError):
    pass


class MissingDimension(OutputFormatError):
    pass


class DuplicateDimension(OutputFormatError):
    pass


# -- judge / orchestration --------------------------------------------------


class EmptyRecords(ReviewAdvisorError):
    pass


class ConfigError(ReviewAdvisorError):
    pass


class ConfigDrift(ReviewAdvisorError):
    def __init__(self, differences: list[str]):
        super().__init__("stored config snapshot differs: " + "; ".join(differences))
        self.differences = differences


class IncompleteRun(ReviewAdvisorError):
    pass


class StageError(ReviewAdvisorError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
