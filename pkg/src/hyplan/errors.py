"""Exception hierarchy shared across the package."""

from __future__ import annotations


class HyplanError(Exception):
    """Base class for all errors raised by this package."""


class EvaluationError(HyplanError):
    """A term or formula could not be evaluated in a state.

    Raised on division by zero, even roots of negatives, powers of negative
    bases with non-integer exponents, and non-finite results.  Callers treat
    the offending state as a dead end.
    """


class ModelError(HyplanError):
    """A task, action, or process is malformed."""


class NotApplicable(HyplanError):
    """An action's precondition failed, or its application hit an evaluation error."""

    def __init__(self, message: str, index: int | None = None, cause: Exception | None = None):
        super().__init__(message)
        self.index = index
        self.cause = cause


class ConstraintViolation(HyplanError):
    """A global constraint clause is false in the state reached by an action."""

    def __init__(self, message: str, clause_index: int | None = None):
        super().__init__(message)
        self.clause_index = clause_index


class SourceSpan:
    """1-based file position attached to every parse diagnostic."""

    __slots__ = ("file", "line", "column")

    def __init__(self, file: str, line: int, column: int):
        self.file = file
        self.line = line
        self.column = column

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"

    def __repr__(self) -> str:
        return f"SourceSpan({self.file!r}, {self.line}, {self.column})"


class ParseError(HyplanError):
    """Syntax or structural error in a domain/problem file."""

    def __init__(self, message: str, span: SourceSpan | None = None):
        self.span = span
        if span is not None:
            message = f"{span}: {message}"
        super().__init__(message)


class TypeCheckError(ParseError):
    """A term or formula is ill-typed against the declarations."""


class CnfError(ParseError):
    """The :constraints section is not a conjunction of disjunctive clauses."""


class IntegrationFailure(HyplanError):
    """Numerical integration of an interval failed."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class NoConvergence(IntegrationFailure):
    """The implicit integrator's fixed-point iteration did not converge."""


class StrengtheningVacuous(HyplanError):
    """A monitored disjunction has no true disjunct in the interval's start state."""


class PlanFormatError(HyplanError):
    """A plan file could not be parsed or is structurally inconsistent."""


class InternalInconsistency(HyplanError):
    """A should-not-happen condition; indicates a bug, not bad input."""


class ResourceExhausted(HyplanError):
    """Search hit its node or time cap."""
