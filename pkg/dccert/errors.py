"""
Exception hierarchy for dccert.

Every failure the checkers can signal is a subclass of DCCertError. Errors
caused by malformed input also derive from ValueError so callers that only
know about the builtin still catch them.

The CLI maps these onto exit codes:
  ProblemFileError / ValueError      -> 2  (input error)
  NumericFailure and its subclasses  -> 3  (numeric failure)
  anything else                      -> reported as an abstention, exit 0
"""

from typing import Optional


class DCCertError(Exception):
    """Base class for all dccert errors."""

    reason = "error"

    def __init__(self, message: str = "", **context):
        super().__init__(message or self.reason)
        self.context = context


# ---- set / function representation ----

class UnboundedSet(DCCertError, ValueError):
    reason = "unbounded-set"


class EmptySet(DCCertError, ValueError):
    reason = "empty-set"


class NotInterior(DCCertError, ValueError):
    reason = "not-interior"


class InfiniteValue(DCCertError, ValueError):
    reason = "infinite-value"


class NotRepresentable(DCCertError, ValueError):
    reason = "not-representable"


class NotDifferentiable(DCCertError):
    reason = "not-differentiable"


class NotDifferentiableControl(NotDifferentiable):
    reason = "not-differentiable-control"


class DomainBoundary(DCCertError):
    reason = "domain-boundary"


class ImproperSum(DCCertError, ValueError):
    reason = "improper-sum"


# ---- problem-level ----

class ValidationFailed(DCCertError):
    reason = "validation-failed"


class Infeasible(DCCertError):
    reason = "infeasible"


class DegenerateCone(DCCertError):
    reason = "degenerate-cone"


class QCViolated(DCCertError):
    reason = "qc-violated"


class NoFeasiblePoint(DCCertError):
    reason = "no-feasible-point"


# ---- numerics ----

class NumericFailure(DCCertError):
    """An inner LP / conic solve did not reach an optimal status."""

    reason = "numeric-failure"

    def __init__(self, message: str = "", status: Optional[str] = None, **context):
        super().__init__(message, status=status, **context)
        self.status = status


class SubproblemFailure(NumericFailure):
    reason = "subproblem-failure"


class NoConvergence(NumericFailure):
    reason = "no-convergence"


# ---- input ----

class ProblemFileError(DCCertError, ValueError):
    """Malformed problem file; `field` names the offending path."""

    reason = "input-error"

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}", field=field)
        self.field = field


class ScheduleTooCoarse(UserWarning):
    """Adjacent eta verdicts disagree at the finest schedule spacing."""
