"""Exception types shared across the pipeline stages."""


class DialogforgeError(Exception):
    """Base class for all pipeline errors."""


class MalformedRecord(DialogforgeError):
    """A corpus record could not be parsed into a valid dialogue."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class EmptyAfterClean(DialogforgeError):
    """Cleaning a generated dialogue left no usable turns."""


class ProviderUnavailable(DialogforgeError):
    """A chat or embedding backend failed after exhausting retries."""


class ReplayMiss(ProviderUnavailable):
    """A replayed request has no matching transcript entry."""


class ResponseTruncated(DialogforgeError):
    """The service stopped a judge completion on the length limit."""


class DimensionMismatch(DialogforgeError):
    """Embedding vectors of different dimensionality were combined."""


class ZeroVector(DialogforgeError):
    """Cosine similarity was requested for an all-zero vector."""


class ParseFailure(DialogforgeError):
    """A structured completion could not be parsed after a re-ask."""


class EmptyCompletion(DialogforgeError):
    """The model returned empty text after a re-ask."""


class PoolExhausted(DialogforgeError):
    """Every strategy in the pool is excluded from the candidate set."""


class PoolTooSmall(DialogforgeError):
    """The strategy pool cannot fill the requested candidate capacity."""


class MissingGold(DialogforgeError):
    """A history/instruction pair has no mapped high-level strategy."""


class MalformedOutput(DialogforgeError):
    """Simulator output lacks the [instruction strategy]/[instruction] form."""


class JudgeParseFailure(DialogforgeError):
    """The quality judge returned unparseable output after a re-ask."""


class ScoreOutOfRange(DialogforgeError):
    """An evaluation score fell outside the 1..10 rating scale."""


class ConfigError(DialogforgeError):
    """The pipeline configuration is invalid or incomplete."""


class StageError(DialogforgeError):
    """A pipeline stage failed; carries the stage tag for the CLI."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
