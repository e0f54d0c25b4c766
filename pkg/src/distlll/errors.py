"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class LLLError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(LLLError, ValueError):
    """An operation was called on inputs outside its contract."""


class InfeasibleParametersError(PreconditionError):
    """Generator or constructor parameters cannot be satisfied."""


class EnumerationLimitError(LLLError):
    """Exact enumeration was requested over too many unset variables."""

    def __init__(self, unset: int, limit: int):
        super().__init__(
            f"exact enumeration over {unset} unset variables exceeds the limit "
            f"of {limit}; use mode='monte-carlo' (or 'auto') instead"
        )
        self.unset = unset
        self.limit = limit


class MergeConflictError(LLLError):
    """Both partial assignments set the same variable."""

    def __init__(self, variables):
        self.variables = sorted(variables)
        super().__init__(f"merge conflict on variables {self.variables}")


class LocalityError(LLLError):
    """An event variable is hosted on a node unreachable from the event host."""


class ContainmentError(LLLError):
    """A testifying event does not contain the event it should testify for."""

    def __init__(self, message: str, counterexample=None):
        super().__init__(message)
        self.counterexample = counterexample


class InternalConsistencyError(LLLError, AssertionError):
    """An invariant that holds by construction was violated (a bug)."""


class SolverFailure(LLLError):
    """A randomized solver could not produce a valid assignment."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class PostShatterError(SolverFailure):
    """All parallel resampling instances failed for some cluster."""

    def __init__(self, message: str, cluster=None, failing_counts=None, trace=None):
        super().__init__(message, trace)
        self.cluster = cluster
        self.failing_counts = failing_counts or []


class StageError(SolverFailure):
    """A pipeline stage failed after exhausting its retries."""

    def __init__(self, stage: str, message: str, trace=None):
        super().__init__(f"[{stage}] {message}", trace)
        self.stage = stage


class SchemaError(LLLError, ValueError):
    """An experiment configuration failed validation."""
