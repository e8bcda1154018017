"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class GDatalogError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatch(GDatalogError):
    pass


class UnknownRelation(SchemaMismatch):
    pass


class UnknownAttribute(SchemaMismatch):
    pass


class ArityMismatch(SchemaMismatch):
    pass


class TypeMismatch(SchemaMismatch):
    pass


class EDBSchemaMismatch(SchemaMismatch):
    pass


class ValueDomainError(TypeMismatch):
    """A value cannot be represented (NaN, infinity, out-of-range integer)."""


class ParamOutOfDomain(GDatalogError):
    pass


class ParamTypeMismatch(GDatalogError):
    pass


class DomainError(GDatalogError):
    """Deterministic function applied outside its domain (ln of 0, x / 0)."""


class OverflowToNonFinite(GDatalogError):
    pass


class Unsupported(GDatalogError):
    pass


class ParseError(GDatalogError):
    """Malformed program, query or event text.

    Carries the 1-based ``line``/``column`` of the offending token and the
    set of token kinds the parser would have accepted there.
    """

    def __init__(self, message: str, line: int = 0, column: int = 0,
                 expected: frozenset[str] | None = None):
        self.line = line
        self.column = column
        self.expected = frozenset(expected or ())
        where = f" at line {line}, column {column}" if line else ""
        exp = ""
        if self.expected:
            exp = " (expected one of: " + ", ".join(sorted(self.expected)) + ")"
        super().__init__(f"{message}{where}{exp}")
        self.bare_message = message


class ProgramError(GDatalogError):
    """Static validation failure tied to a source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line else ""
        super().__init__(f"{type(self).__name__} {message}{where}")


class UnsafeVariable(ProgramError):
    pass


class HeadRelationExtensional(ProgramError):
    pass


class DistParamArity(ProgramError):
    pass


class ProgramTypeMismatch(ProgramError, TypeMismatch):
    pass


class ProgramUnknownRelation(ProgramError, UnknownRelation):
    pass


class MissingVariable(GDatalogError):
    pass


class NonNumericAggregate(SchemaMismatch):
    pass


class RuntimeParamError(GDatalogError):
    """A firing produced invalid distribution parameters or function inputs."""


class NondeterministicProgram(GDatalogError):
    pass


class ChaseCensored(GDatalogError):
    """A deterministic run hit its firing budget before reaching fixpoint."""

    def __init__(self, result):
        self.result = result
        super().__init__(f"firing budget exhausted after {result.firings} firings")


class DuplicateGroupRow(GDatalogError):
    pass


class EstimationError(GDatalogError):
    """No estimate can be produced from the sampled worlds."""

    def __init__(self, message: str, *, n: int = 0, censored: int = 0, failed: int = 0):
        self.n = n
        self.censored = censored
        self.failed = failed
        super().__init__(message)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n if self.n else 0.0

    @property
    def failed_fraction(self) -> float:
        return self.failed / self.n if self.n else 0.0


class AllWorldsCensored(EstimationError):
    pass


class TooFewWorlds(EstimationError):
    pass
