"""Exception types shared across the package.

Probabilistic routines never loop forever: they retry a bounded number of
times and raise ProbabilisticFailure with the observed statistics, so a
failed randomized construction is always a reportable event rather than a
hang.
"""

from __future__ import annotations


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class SizeError(ParameterError):
    """Instance too large for an exact method; use the sampled variant."""


class ProbabilisticFailure(RuntimeError):
    """A bounded-retry randomized construction exhausted its budget."""

    def __init__(self, message: str, attempts: int = 0, stats: dict | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.stats = stats or {}


class RegularityViolation(RuntimeError):
    """An input presumed regular failed a regularity-derived bound."""


class StructuralError(RuntimeError):
    """A combinatorial requirement cannot be met; carries what is achievable."""

    def __init__(self, message: str, achievable: int | None = None):
        super().__init__(message)
        self.achievable = achievable


class EmbeddingFailure(RuntimeError):
    """Candidate exhaustion during an embedding step."""

    def __init__(self, message: str, context: dict | None = None):
        super().__init__(message)
        self.context = context or {}


class InternalError(RuntimeError):
    """A structural assertion that should hold by construction failed."""


class AuditError(RuntimeError):
    """An embedding handed to a verifier is not valid in the host."""
