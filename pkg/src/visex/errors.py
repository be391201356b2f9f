"""Exception hierarchy shared across the toolkit.

ValidationError covers bad inputs (malformed files, out-of-range arguments,
contract violations caught before any work starts) and maps to CLI exit
code 1. Anything else that escapes is a runtime failure, exit code 2.
"""


class VisexError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(VisexError, ValueError):
    """Invalid input data or arguments."""


class StaleRevisionError(VisexError):
    """Optimistic-concurrency conflict: the caller's revision is outdated."""

    def __init__(self, expected: int, current: int):
        super().__init__(
            f"stale revision: expected {expected}, store is at {current}"
        )
        self.expected = expected
        self.current = current


class StaleModelError(VisexError):
    """A write referenced a cluster model the store is not bound to."""

    def __init__(self, supplied: str, bound: str):
        super().__init__(
            f"stale cluster_model_id: got {supplied!r}, store is bound to {bound!r}"
        )
        self.supplied = supplied
        self.bound = bound


class PipelineStageError(VisexError):
    """Wraps a failure with the name of the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
