"""Fact predicates, counting events and their evaluation on instances.

A counting atom ``count(R where ...) = n`` holds on an instance when exactly
``n`` facts of ``R`` (counted with multiplicity) satisfy the predicate.  The
comparison may also be one of ``!= < <= > >=``; Boolean combinations of
atoms give the events that the Monte Carlo estimators measure.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

from . import values as V
from .errors import SchemaMismatch, TypeMismatch, UnknownAttribute
from .instance import Instance
from .lexer import EOF, IDENT, INT, REAL, STRING, TokenStream
from .schema import RelationSchema, Schema

CMP_OPS: dict[str, Callable] = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
ORDER_OPS = frozenset(("<", "<=", ">", ">="))
_NEGATED = {"=": "!=", "!=": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


def _check_op(op: str) -> str:
    if op not in CMP_OPS:
        raise ValueError(f"unknown comparison operator {op!r}")
    return op


@dataclass(frozen=True)
class Compare:
    """``attr OP constant``."""

    attr: str
    op: str
    value: object

    def __post_init__(self):
        _check_op(self.op)

    def __str__(self):
        return f"{self.attr} {self.op} {V.format_value(self.value)}"


@dataclass(frozen=True)
class AttrCompare:
    """``left OP right`` between two attributes of the same fact."""

    left: str
    op: str
    right: str

    def __post_init__(self):
        _check_op(self.op)

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


Constraint = Union[Compare, AttrCompare]


def _compatible(t1: str, t2: str, op: str) -> bool:
    if op in ORDER_OPS:
        return t1 in V.NUMERIC and t2 in V.NUMERIC
    return t1 == t2 or (t1 in V.NUMERIC and t2 in V.NUMERIC)


def compile_constraints(rel: RelationSchema, constraints) -> Callable[[tuple], bool]:
    """Resolve constraints against ``rel`` and return a row test."""
    tests = []
    for c in constraints:
        if isinstance(c, Compare):
            i = rel.index(c.attr)
            vt = V.type_of(c.value)
            if not _compatible(rel.types[i], vt, c.op):
                raise TypeMismatch(
                    f"cannot compare {rel.name}.{c.attr} ({rel.types[i]}) {c.op} {vt} constant")
            tests.append((CMP_OPS[c.op], i, None, c.value))
        elif isinstance(c, AttrCompare):
            i, j = rel.index(c.left), rel.index(c.right)
            if not _compatible(rel.types[i], rel.types[j], c.op):
                raise TypeMismatch(
                    f"cannot compare {rel.name}.{c.left} ({rel.types[i]}) {c.op} "
                    f"{rel.name}.{c.right} ({rel.types[j]})")
            tests.append((CMP_OPS[c.op], i, j, None))
        else:
            raise TypeError(f"not a constraint: {c!r}")

    def holds(row: tuple) -> bool:
        for fn, i, j, const in tests:
            if not fn(row[i], row[j] if j is not None else const):
                return False
        return True

    return holds


@dataclass(frozen=True)
class FactPredicate:
    """A box of facts: one relation plus a conjunction of comparisons."""

    relation: str
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def on(self, relation: str) -> "FactPredicate":
        return FactPredicate(relation, self.constraints)

    def conj(self, *more: Constraint) -> "FactPredicate":
        return FactPredicate(self.relation, self.constraints + tuple(more))

    def __str__(self):
        if not self.constraints:
            return self.relation
        return f"{self.relation} where " + " and ".join(map(str, self.constraints))


def _compile_pred(pred: FactPredicate, schema: Schema) -> Callable[[tuple], bool]:
    # True == 1 == 1.0 in Python, so constant types are part of the cache key
    tags = tuple(type(c.value) if isinstance(c, Compare) else None for c in pred.constraints)
    return _compile_pred_cached(pred, tags, schema)


@lru_cache(maxsize=1024)
def _compile_pred_cached(pred: FactPredicate, tags, schema: Schema) -> Callable[[tuple], bool]:
    rel = schema.get(pred.relation)
    if rel is None:
        raise SchemaMismatch(f"predicate relation {pred.relation!r} is not in the schema")
    try:
        return compile_constraints(rel, pred.constraints)
    except UnknownAttribute as exc:
        raise SchemaMismatch(str(exc)) from None
    except TypeMismatch as exc:
        raise SchemaMismatch(str(exc)) from None


def check_predicate(pred: FactPredicate, schema: Schema) -> None:
    _compile_pred(pred, schema)


def multiplicity(instance: Instance, pred: FactPredicate) -> int:
    """Number of facts in ``instance`` matching ``pred``, with multiplicity."""
    test = _compile_pred(pred, instance.schema)
    rel = pred.relation
    return sum(m for f, m in instance.items() if f.relation == rel and test(f.values))


class EventExpr:
    """Boolean combination of counting atoms; use ``&``, ``|`` and ``~``."""

    def __and__(self, other: "EventExpr") -> "EventExpr":
        return And((self, other))

    def __or__(self, other: "EventExpr") -> "EventExpr":
        return Or((self, other))

    def __invert__(self) -> "EventExpr":
        return Not(self)

    def atoms(self):
        raise NotImplementedError


@dataclass(frozen=True)
class CountingAtom(EventExpr):
    pred: FactPredicate
    cmp: str = "="
    n: int = 0

    def __post_init__(self):
        _check_op(self.cmp)
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 0:
            raise ValueError(f"count bound must be a nonnegative integer, got {self.n!r}")

    def atoms(self):
        yield self

    def __str__(self):
        return f"count({self.pred}) {self.cmp} {self.n}"


@dataclass(frozen=True)
class Not(EventExpr):
    arg: EventExpr

    def atoms(self):
        return self.arg.atoms()

    def __str__(self):
        return f"not ({self.arg})"


@dataclass(frozen=True)
class And(EventExpr):
    args: tuple[EventExpr, ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("empty conjunction")
        object.__setattr__(self, "args", tuple(self.args))

    def atoms(self):
        for a in self.args:
            yield from a.atoms()

    def __str__(self):
        return " and ".join(f"({a})" for a in self.args)


@dataclass(frozen=True)
class Or(EventExpr):
    args: tuple[EventExpr, ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("empty disjunction")
        object.__setattr__(self, "args", tuple(self.args))

    def atoms(self):
        for a in self.args:
            yield from a.atoms()

    def __str__(self):
        return " or ".join(f"({a})" for a in self.args)


def event_holds(instance: Instance, event: EventExpr) -> bool:
    if isinstance(event, CountingAtom):
        return CMP_OPS[event.cmp](multiplicity(instance, event.pred), event.n)
    if isinstance(event, Not):
        return not event_holds(instance, event.arg)
    if isinstance(event, And):
        return all(event_holds(instance, a) for a in event.args)
    if isinstance(event, Or):
        return any(event_holds(instance, a) for a in event.args)
    raise TypeError(f"not an event: {event!r}")


def check_event(event: EventExpr, schema: Schema) -> None:
    for atom in event.atoms():
        check_predicate(atom.pred, schema)


# -- text syntax -------------------------------------------------------------


def parse_event(text: str) -> EventExpr:
    """Parse ``count(R where a >= 1 and b = "x") >= 2 and not (...)``.

    ``#(...)`` is accepted as a synonym of ``count(...)`` and
    ``attr in [lo, hi]`` as shorthand for ``attr >= lo and attr <= hi``.
    """
    ts = TokenStream(text)
    ev = _disj(ts)
    ts.expect(EOF)
    return ev


def _disj(ts: TokenStream) -> EventExpr:
    parts = [_conj(ts)]
    while ts.accept_keyword("or"):
        parts.append(_conj(ts))
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def _conj(ts: TokenStream) -> EventExpr:
    parts = [_neg(ts)]
    while ts.accept_keyword("and"):
        parts.append(_neg(ts))
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def _neg(ts: TokenStream) -> EventExpr:
    if ts.accept_keyword("not"):
        return Not(_neg(ts))
    if ts.accept("("):
        ev = _disj(ts)
        ts.expect(")")
        return ev
    if ts.accept("#") or ts.accept_keyword("count"):
        return _atom(ts)
    ts.fail()


def _atom(ts: TokenStream) -> CountingAtom:
    ts.expect("(")
    rel = ts.expect(IDENT).text
    constraints: list[Constraint] = []
    if ts.accept_keyword("where"):
        constraints.extend(_cond(ts))
        while ts.accept_keyword("and"):
            constraints.extend(_cond(ts))
    ts.expect(")")
    op = ts.expect(*CMP_OPS).kind
    n = ts.expect(INT).value
    return CountingAtom(FactPredicate(rel, tuple(constraints)), op, n)


def _cond(ts: TokenStream) -> list[Constraint]:
    attr = ts.expect(IDENT).text
    if ts.accept_keyword("in"):
        ts.expect("[")
        lo = parse_constant(ts)
        ts.expect(",")
        hi = parse_constant(ts)
        ts.expect("]")
        return [Compare(attr, ">=", lo), Compare(attr, "<=", hi)]
    op = ts.expect(*CMP_OPS).kind
    if ts.peek.kind == IDENT and ts.peek.text not in ("true", "false"):
        return [AttrCompare(attr, op, ts.advance().text)]
    return [Compare(attr, op, parse_constant(ts))]


def parse_constant(ts: TokenStream):
    """Literal constant, with an optional leading minus on numbers."""
    if ts.accept("-"):
        tok = ts.expect(INT, REAL)
        return V.canonical_real(-tok.value) if tok.kind == REAL else V.check_int(-tok.value)
    tok = ts.peek
    if tok.kind in (INT, REAL, STRING):
        ts.advance()
        if tok.kind == INT:
            return V.check_int(tok.value)
        if tok.kind == REAL:
            return V.canonical_real(tok.value)
        return tok.value
    if ts.accept_keyword("true"):
        return True
    if ts.accept_keyword("false"):
        return False
    ts.fail()
