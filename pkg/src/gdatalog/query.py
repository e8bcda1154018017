"""Select-project-join-aggregate queries evaluated on single worlds.

Queries are written in a small SQL dialect::

    SELECT RoomNo, AVG(°C) FROM Temp GROUP BY RoomNo
    CREATE VIEW AvTemp AS SELECT RoomNo, AVG(°C) AS °C FROM Temp GROUP BY RoomNo
    SELECT E.y, F.x FROM E, E AS F WHERE E.x = F.y AND E.s >= 1.5
    SELECT A, B FROM R WHERE A = B UNION SELECT B, A FROM R

Operators run on bags internally; the query output is always a set.
Real-valued equality is exact double equality, so a selection such as
``A = B`` on continuous attributes almost surely keeps nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

from . import values as V
from .errors import (
    NonNumericAggregate,
    SchemaMismatch,
    TypeMismatch,
    UnknownAttribute,
    UnknownRelation,
)
from .events import CMP_OPS, AttrCompare, Compare, Constraint, _compatible, parse_constant
from .instance import SET, Instance
from .lexer import EOF, IDENT, TokenStream
from .schema import INTENSIONAL, Fact, RelationSchema, Schema

AGGREGATES = ("AVG", "SUM", "COUNT", "MIN", "MAX")


class Column(NamedTuple):
    name: str
    type: str
    qualifier: str | None = None

    def __str__(self):
        return f"{self.qualifier}.{self.name}" if self.qualifier else self.name


def resolve(columns: tuple[Column, ...], ref: str) -> int:
    """Index of the column named ``ref`` (``name`` or ``qualifier.name``)."""
    qual, _, name = ref.rpartition(".")
    hits = [i for i, c in enumerate(columns)
            if c.name == name and (not qual or c.qualifier == qual)]
    if not hits:
        raise UnknownAttribute(f"unknown attribute {ref!r}")
    if len(hits) > 1:
        raise UnknownAttribute(f"ambiguous attribute {ref!r}")
    return hits[0]


# -- plan nodes ----------------------------------------------------------------


class Node:
    columns: tuple[Column, ...]

    def rows(self, world: Instance) -> list[tuple]:
        raise NotImplementedError

    def scans(self) -> Iterable["Scan"]:
        for c in self.children():
            yield from c.scans()

    def children(self) -> tuple["Node", ...]:
        return ()


@dataclass(frozen=True)
class Scan(Node):
    relation: str
    columns: tuple[Column, ...]

    @classmethod
    def of(cls, rel: RelationSchema, alias: str | None = None) -> "Scan":
        q = alias or rel.name
        return cls(rel.name, tuple(Column(a, t, q) for a, t in rel.attrs))

    def rows(self, world):
        return world.rows(self.relation)

    def scans(self):
        yield self


@dataclass(frozen=True)
class Select(Node):
    child: Node
    condition: tuple[Constraint, ...]

    def __post_init__(self):
        self._test  # resolve eagerly so bad references fail at plan time

    @property
    def columns(self):
        return self.child.columns

    @property
    def _test(self) -> Callable[[tuple], bool]:
        cols = self.child.columns
        tests = []
        for c in self.condition:
            if isinstance(c, Compare):
                i = resolve(cols, c.attr)
                if not _compatible(cols[i].type, V.type_of(c.value), c.op):
                    raise TypeMismatch(f"cannot compare {cols[i]} ({cols[i].type}) {c.op} {c.value!r}")
                tests.append((CMP_OPS[c.op], i, None, c.value))
            else:
                i, j = resolve(cols, c.left), resolve(cols, c.right)
                if not _compatible(cols[i].type, cols[j].type, c.op):
                    raise TypeMismatch(f"cannot compare {cols[i]} {c.op} {cols[j]}")
                tests.append((CMP_OPS[c.op], i, j, None))

        def test(row):
            for fn, i, j, const in tests:
                if not fn(row[i], row[j] if j is not None else const):
                    return False
            return True

        return test

    def rows(self, world):
        test = self._test
        return [r for r in self.child.rows(world) if test(r)]

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Project(Node):
    child: Node
    items: tuple[tuple[str, str], ...]  # (source reference, output name)

    def __post_init__(self):
        self.columns

    @property
    def columns(self):
        cols = self.child.columns
        return tuple(Column(out, cols[resolve(cols, src)].type) for src, out in self.items)

    def rows(self, world):
        cols = self.child.columns
        idx = [resolve(cols, src) for src, _ in self.items]
        seen = dict.fromkeys(tuple(r[i] for i in idx) for r in self.child.rows(world))
        return list(seen)

    def children(self):
        return (self.child,)


@dataclass(frozen=True)
class Join(Node):
    left: Node
    right: Node
    on: tuple[tuple[str, str], ...]  # (left reference, right reference) equalities

    def __post_init__(self):
        for l, r in self.on:
            lt = self.left.columns[resolve(self.left.columns, l)].type
            rt = self.right.columns[resolve(self.right.columns, r)].type
            if not _compatible(lt, rt, "="):
                raise TypeMismatch(f"cannot join {l} ({lt}) with {r} ({rt})")

    @property
    def columns(self):
        return self.left.columns + self.right.columns

    def rows(self, world):
        li = [resolve(self.left.columns, l) for l, _ in self.on]
        ri = [resolve(self.right.columns, r) for _, r in self.on]
        table: dict[tuple, list[tuple]] = {}
        for r in self.right.rows(world):
            table.setdefault(tuple(r[i] for i in ri), []).append(r)
        out = []
        for l in self.left.rows(world):
            for r in table.get(tuple(l[i] for i in li), ()):
                out.append(l + r)
        return out

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class GroupAggregate(Node):
    child: Node
    group: tuple[str, ...]
    aggregates: tuple[tuple[str, str | None, str], ...]  # (function, reference or None, output name)

    def __post_init__(self):
        self.columns

    @property
    def columns(self):
        cols = self.child.columns
        out = [Column(cols[resolve(cols, g)].name, cols[resolve(cols, g)].type) for g in self.group]
        for fn, ref, name in self.aggregates:
            if fn not in AGGREGATES:
                raise SchemaMismatch(f"unknown aggregate {fn}")
            if ref is None:
                if fn != "COUNT":
                    raise SchemaMismatch(f"{fn}(*) is not allowed")
                out.append(Column(name, V.INTEGER))
                continue
            t = cols[resolve(cols, ref)].type
            if fn in ("AVG", "SUM") and t not in V.NUMERIC:
                raise NonNumericAggregate(f"{fn}({ref}) over {t} attribute")
            if fn == "AVG":
                t = V.REAL
            elif fn == "COUNT":
                t = V.INTEGER
            out.append(Column(name, t))
        return tuple(out)

    def rows(self, world):
        cols = self.child.columns
        gi = [resolve(cols, g) for g in self.group]
        ai = [(fn, None if ref is None else resolve(cols, ref)) for fn, ref, _ in self.aggregates]
        groups: dict[tuple, list[tuple]] = {}
        for r in self.child.rows(world):
            groups.setdefault(tuple(r[i] for i in gi), []).append(r)
        out = []
        for key, members in groups.items():
            out.append(key + tuple(_aggregate(fn, i, members) for fn, i in ai))
        return out

    def children(self):
        return (self.child,)


def _aggregate(fn: str, i: int | None, rows: list[tuple]):
    if fn == "COUNT":
        return len(rows)
    vals = [r[i] for r in rows]
    if fn == "MIN":
        return min(vals)
    if fn == "MAX":
        return max(vals)
    if all(type(v) is int for v in vals):
        total = sum(vals)
        if fn == "SUM":
            return V.check_int(total)
        return V.canonical_real(total / len(vals))
    total = math.fsum(vals)
    return V.canonical_real(total if fn == "SUM" else total / len(vals))


@dataclass(frozen=True)
class Union(Node):
    left: Node
    right: Node

    def __post_init__(self):
        lt = [c.type for c in self.left.columns]
        rt = [c.type for c in self.right.columns]
        if lt != rt:
            raise TypeMismatch(f"UNION operands have column types {lt} and {rt}")

    @property
    def columns(self):
        return tuple(Column(c.name, c.type) for c in self.left.columns)

    def rows(self, world):
        return list(dict.fromkeys(self.left.rows(world) + self.right.rows(world)))

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class QueryPlan:
    """A plan tree plus the name of the relation it produces."""

    root: Node
    name: str = "Q"

    @property
    def output(self) -> RelationSchema:
        return RelationSchema(self.name, tuple((c.name, c.type) for c in self.root.columns), INTENSIONAL)

    @property
    def output_schema(self) -> Schema:
        return Schema((self.output,))

    def input_relations(self) -> dict[str, tuple[str, ...]]:
        return {s.relation: tuple(c.type for c in s.columns) for s in self.root.scans()}


def eval_query(plan: QueryPlan, world: Instance) -> Instance:
    for rel, types in plan.input_relations().items():
        have = world.schema.get(rel)
        if have is None or have.types != types:
            raise SchemaMismatch(f"world does not provide relation {rel} with types {types}")
    name = plan.name
    rows = plan.root.rows(world)
    return Instance(plan.output_schema, [Fact(name, r) for r in rows], SET)


# -- parser -------------------------------------------------------------------


def parse_query(text: str, schema: Schema, name: str | None = None) -> QueryPlan:
    """Parse and resolve a query against ``schema``.

    The output relation is called ``name``, else the ``CREATE VIEW`` name,
    else ``Q``.
    """
    ts = TokenStream(text)
    view = None
    if ts.accept_keyword("create"):
        ts.expect_keyword("view")
        view = ts.expect(IDENT).text
        ts.expect_keyword("as")
    root = _select(ts, schema)
    while ts.accept_keyword("union"):
        root = Union(root, _select(ts, schema))
    ts.accept(";")
    ts.expect(EOF)
    plan = QueryPlan(root, name or view or "Q")
    plan.output  # duplicate output names fail here
    return plan


def _ref(ts: TokenStream) -> str:
    first = ts.expect(IDENT).text
    if ts.accept("."):
        return first + "." + ts.expect(IDENT).text
    return first


def _select(ts: TokenStream, schema: Schema) -> Node:
    ts.expect_keyword("select")
    items: list[tuple] = []  # ("col", ref, out) | ("agg", fn, ref, out)
    star = ts.accept("*") is not None
    if not star:
        while True:
            items.append(_item(ts))
            if not ts.accept(","):
                break
    ts.expect_keyword("from")
    tables = [_table(ts, schema)]
    while ts.accept(","):
        tables.append(_table(ts, schema))
    conds: list[Constraint] = []
    if ts.accept_keyword("where"):
        conds.extend(_cond(ts))
        while ts.accept_keyword("and"):
            conds.extend(_cond(ts))
    group: list[str] = []
    if ts.accept_keyword("group"):
        ts.expect_keyword("by")
        group.append(_ref(ts))
        while ts.accept(","):
            group.append(_ref(ts))

    node: Node = tables[0]
    conds = list(conds)
    for t in tables[1:]:
        on = []
        for c in list(conds):
            if isinstance(c, AttrCompare) and c.op == "=":
                pair = _split_join(node, t, c)
                if pair is not None:
                    on.append(pair)
                    conds.remove(c)
        node = Join(node, t, tuple(on))
    if conds:
        node = Select(node, tuple(conds))

    aggs = [it for it in items if it[0] == "agg"]
    if star:
        if group:
            raise SchemaMismatch("SELECT * cannot be combined with GROUP BY")
        return _project(node, tuple((str(c), c.name) for c in node.columns))
    if not aggs and not group:
        return _project(node, tuple((it[1], it[2]) for it in items))
    for it in items:
        if it[0] == "col" and it[1] not in group:
            cols = node.columns
            if not any(resolve(cols, g) == resolve(cols, it[1]) for g in group):
                raise SchemaMismatch(f"{it[1]} must appear in GROUP BY")
    ga = GroupAggregate(node, tuple(group), tuple((fn, ref, out) for _, fn, ref, out in aggs))
    gcols = ga.columns
    proj = []
    ng = len(group)
    k = 0
    cols = node.columns
    for it in items:
        if it[0] == "col":
            gi = next(i for i, g in enumerate(group) if resolve(cols, g) == resolve(cols, it[1]))
            proj.append((gi, it[2]))
        else:
            proj.append((ng + k, it[3]))
            k += 1
    if [i for i, _ in proj] == list(range(len(gcols))) and all(
            gcols[i].name == out for i, out in proj):
        return ga
    return _Reorder(ga, tuple(proj))


def _project(node: Node, items: tuple[tuple[str, str], ...]) -> Node:
    """Project, or ``node`` itself when the projection is the identity."""
    cols = node.columns
    if (len(items) == len(cols)
            and [resolve(cols, src) for src, _ in items] == list(range(len(cols)))
            and all(c.name == out for c, (_, out) in zip(cols, items))):
        return node
    return Project(node, items)


@dataclass(frozen=True)
class _Reorder(Node):
    """Positional projection used to put grouped output in SELECT order."""

    child: Node
    items: tuple[tuple[int, str], ...]

    @property
    def columns(self):
        cols = self.child.columns
        return tuple(Column(out, cols[i].type) for i, out in self.items)

    def rows(self, world):
        idx = [i for i, _ in self.items]
        return list(dict.fromkeys(tuple(r[i] for i in idx) for r in self.child.rows(world)))

    def children(self):
        return (self.child,)


def _split_join(left: Node, right: Node, c: AttrCompare):
    def side(ref):
        try:
            resolve(left.columns, ref)
            in_left = True
        except UnknownAttribute:
            in_left = False
        try:
            resolve(right.columns, ref)
            in_right = True
        except UnknownAttribute:
            in_right = False
        return in_left, in_right

    l_in = side(c.left)
    r_in = side(c.right)
    if l_in == (True, False) and r_in == (False, True):
        return (c.left, c.right)
    if l_in == (False, True) and r_in == (True, False):
        return (c.right, c.left)
    return None


def _item(ts: TokenStream):
    tok = ts.peek
    if tok.kind == IDENT and tok.text.upper() in AGGREGATES and ts.peek_at(1).kind == "(":
        ts.advance()
        ts.expect("(")
        ref = None if ts.accept("*") else _ref(ts)
        ts.expect(")")
        fn = tok.text.upper()
        out = ref.rpartition(".")[2] if ref else "count"
        if ts.accept_keyword("as"):
            out = ts.expect(IDENT).text
        return ("agg", fn, ref, out)
    ref = _ref(ts)
    out = ref.rpartition(".")[2]
    if ts.accept_keyword("as"):
        out = ts.expect(IDENT).text
    return ("col", ref, out)


def _table(ts: TokenStream, schema: Schema) -> Scan:
    tok = ts.expect(IDENT)
    rel = schema.get(tok.text)
    if rel is None:
        raise UnknownRelation(f"unknown relation {tok.text!r} at line {tok.line}, column {tok.column}")
    alias = None
    if ts.accept_keyword("as"):
        alias = ts.expect(IDENT).text
    elif ts.peek.kind == IDENT and ts.peek.text.upper() not in (
            "WHERE", "GROUP", "UNION", "AS"):
        alias = ts.advance().text
    return Scan.of(rel, alias)


def _cond(ts: TokenStream) -> list[Constraint]:
    left = _ref(ts)
    if ts.accept_keyword("between"):
        lo = parse_constant(ts)
        ts.expect_keyword("and")
        hi = parse_constant(ts)
        return [Compare(left, ">=", lo), Compare(left, "<=", hi)]
    op = ts.expect(*CMP_OPS).kind
    if ts.peek.kind == IDENT and ts.peek.text not in ("true", "false"):
        return [AttrCompare(left, op, _ref(ts))]
    return [Compare(left, op, parse_constant(ts))]


__all__ = [
    "Column", "GroupAggregate", "Join", "Project", "QueryPlan", "Scan", "Select", "Union",
    "eval_query", "parse_query",
]
