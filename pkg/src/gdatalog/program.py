"""GDatalog programs: abstract syntax, parser, pretty-printer and validation.

Concrete syntax (full grammar in ``docs/grammar.md``)::

    .decl E(y: string, x: string, s: real)
    R(x, 0) :- S(x).
    R(x, t + lognormal(mu=ln(s), var=0.1)) :- R(y, t), E(y, x, s).

A program is a bag of rules: every rule in the text is a separate
occurrence, numbered from 0 in file order, even when two rules are
identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Union

from . import distributions as D
from . import values as V
from .errors import (
    DistParamArity,
    HeadRelationExtensional,
    MissingVariable,
    ParamOutOfDomain,
    ParamTypeMismatch,
    ProgramError,
    ProgramTypeMismatch,
    ProgramUnknownRelation,
    SchemaMismatch,
    UnsafeVariable,
)
from .lexer import EOF, IDENT, INT, REAL, STRING, TokenStream
from .schema import EXTENSIONAL, INTENSIONAL, RelationSchema, Schema

Pos = tuple[int, int]

# -- terms --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Const:
    value: object
    pos: Pos = field(default=(0, 0), repr=False)

    # 1 == 1.0 == True in Python; constants of different types must differ
    def __eq__(self, other):
        return (isinstance(other, Const) and type(self.value) is type(other.value)
                and self.value == other.value)

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Fn:
    fn: str
    args: tuple
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Dist:
    name: str
    params: tuple[tuple[str, "Term"], ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class ListLit:
    items: tuple[Const, ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


Term = Union[Const, Var, Fn, Dist, ListLit]


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple
    pos: Pos = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]
    pos: Pos = field(default=(0, 0), compare=False, repr=False)

    def __str__(self):
        return format_rule(self)


@dataclass(frozen=True)
class RuleOccurrence:
    occurrence_id: int
    rule: Rule


@dataclass(frozen=True)
class Program:
    occurrences: tuple[RuleOccurrence, ...]
    schema: Schema = field(default_factory=Schema)
    # relations declared in the text, whose kind is inferred from rule heads
    declared: frozenset[str] = frozenset()

    @property
    def rules(self) -> tuple[Rule, ...]:
        return tuple(o.rule for o in self.occurrences)

    def __str__(self):
        return format_program(self)


def program_from_rules(rules: Iterable[Rule], schema: Schema | None = None) -> Program:
    return Program(tuple(RuleOccurrence(i, r) for i, r in enumerate(rules)), schema or Schema())


def walk(term) -> Iterable:
    """Pre-order traversal of a term."""
    yield term
    if isinstance(term, Fn):
        for a in term.args:
            yield from walk(a)
    elif isinstance(term, Dist):
        for _, p in term.params:
            yield from walk(p)
    elif isinstance(term, ListLit):
        yield from term.items


def head_vars(rule: Rule) -> tuple[str, ...]:
    """Distinct head variables in first-appearance order."""
    seen: dict[str, None] = {}
    for t in rule.head.args:
        for node in walk(t):
            if isinstance(node, Var):
                seen.setdefault(node.name, None)
    return tuple(seen)


def dist_sites(rule: Rule) -> list[Dist]:
    """Distribution nodes of the head in pre-order; list index = site index."""
    return [n for t in rule.head.args for n in walk(t) if isinstance(n, Dist)]


def is_deterministic(program: Program) -> bool:
    return all(not dist_sites(r) for r in program.rules)


# -- parser -------------------------------------------------------------------

def parse_program(text: str, schema: Schema | None = None) -> Program:
    """Parse program text; ``.decl`` lines extend ``schema``.

    Raises ParseError with line, column and the expected-token set.
    """
    ts = TokenStream(text)
    rules: list[Rule] = []
    decls: list[RelationSchema] = []
    while not ts.at(EOF):
        if _at_decl(ts, 0):
            decls.append(_parse_decl(ts))
        else:
            rules.append(_parse_rule(ts))
    base = schema or Schema()
    declared = Schema(tuple(decls))
    try:
        merged = base.merge(declared)
    except SchemaMismatch as exc:
        raise ProgramError(str(exc)) from None
    return Program(tuple(RuleOccurrence(i, r) for i, r in enumerate(rules)), merged,
                   frozenset(d.name for d in decls if d.name not in base))


def _at_decl(ts: TokenStream, offset: int) -> bool:
    dot, word = ts.peek_at(offset), ts.peek_at(offset + 1)
    return dot.kind == "." and word.kind == IDENT and word.text == "decl"


def _parse_decl(ts: TokenStream) -> RelationSchema:
    start = ts.advance()
    ts.advance()
    name = ts.expect(IDENT).text
    ts.expect("(")
    attrs = []
    if not ts.at(")"):
        while True:
            a = ts.expect(IDENT).text
            ts.expect(":")
            tt = ts.expect(IDENT)
            if tt.text not in V.TYPES:
                ts.pos -= 1
                ts._expected.update(V.TYPES)
                ts.fail(f"unknown attribute type {tt.text!r}")
            attrs.append((a, tt.text))
            if not ts.accept(","):
                break
    ts.expect(")")
    if ts.peek.kind == "." and not _at_decl(ts, 0):
        ts.advance()
    try:
        return RelationSchema(name, tuple(attrs))
    except SchemaMismatch as exc:
        raise ProgramError(str(exc), start.line, start.column) from None


def _parse_rule(ts: TokenStream) -> Rule:
    start = ts.peek
    head = _parse_atom(ts, _parse_term)
    body: list[Atom] = []
    if ts.accept(":-"):
        body.append(_parse_atom(ts, _parse_body_arg))
        while ts.accept(","):
            body.append(_parse_atom(ts, _parse_body_arg))
    ts.expect(".")
    return Rule(head, tuple(body), (start.line, start.column))


def _parse_atom(ts: TokenStream, arg_parser) -> Atom:
    tok = ts.expect(IDENT)
    ts.expect("(")
    args = []
    if not ts.at(")"):
        args.append(arg_parser(ts))
        while ts.accept(","):
            args.append(arg_parser(ts))
    ts.expect(")")
    return Atom(tok.text, tuple(args), (tok.line, tok.column))


def _parse_body_arg(ts: TokenStream):
    tok = ts.peek
    pos = (tok.line, tok.column)
    if tok.kind == IDENT and tok.text not in ("true", "false"):
        ts.advance()
        return Var(tok.text, pos)
    return Const(_literal(ts), pos)


def _literal(ts: TokenStream):
    neg = ts.accept("-") is not None
    tok = ts.peek
    if tok.kind == INT:
        ts.advance()
        return _int_value(-tok.value if neg else tok.value, ts, tok)
    if tok.kind == REAL:
        ts.advance()
        return V.canonical_real(-tok.value if neg else tok.value)
    if not neg:
        if tok.kind == STRING:
            ts.advance()
            return tok.value
        if ts.accept_keyword("true"):
            return True
        if ts.accept_keyword("false"):
            return False
        ts.at(STRING, IDENT)
    ts.at(INT, REAL)
    ts.fail()


def _int_value(v: int, ts: TokenStream, tok) -> int:
    if not V.INT_MIN <= v <= V.INT_MAX:
        from .errors import ParseError

        raise ParseError("integer literal outside the 64-bit range", tok.line, tok.column)
    return v


def _parse_term(ts: TokenStream):
    left = _parse_product(ts)
    while ts.at("+", "-"):
        op = ts.advance()
        right = _parse_product(ts)
        left = Fn(op.kind, (left, right), (op.line, op.column))
    return left


def _parse_product(ts: TokenStream):
    left = _parse_unary(ts)
    while ts.at("*", "/"):
        op = ts.advance()
        right = _parse_unary(ts)
        left = Fn(op.kind, (left, right), (op.line, op.column))
    return left


def _parse_unary(ts: TokenStream):
    if ts.at("-"):
        nxt = ts.peek_at(1)
        if nxt.kind in (INT, REAL):
            tok = ts.peek
            return Const(_literal(ts), (tok.line, tok.column))
        op = ts.advance()
        return Fn("neg", (_parse_unary(ts),), (op.line, op.column))
    return _parse_primary(ts)


def _parse_primary(ts: TokenStream):
    tok = ts.peek
    pos = (tok.line, tok.column)
    if ts.accept("("):
        t = _parse_term(ts)
        ts.expect(")")
        return t
    if ts.at("["):
        ts.advance()
        items = []
        if not ts.at("]"):
            while True:
                it = ts.peek
                items.append(Const(_literal(ts), (it.line, it.column)))
                if not ts.accept(","):
                    break
        ts.expect("]")
        return ListLit(tuple(items), pos)
    if tok.kind in (INT, REAL, STRING):
        return Const(_literal(ts), pos)
    if ts.at(IDENT):
        if tok.text in ("true", "false") and ts.peek_at(1).kind != "(":
            return Const(_literal(ts), pos)
        ts.advance()
        if ts.accept("("):
            if tok.text in D.DISTRIBUTIONS:
                return _parse_dist_call(ts, tok.text, pos)
            args = []
            if not ts.at(")"):
                args.append(_parse_term(ts))
                while ts.accept(","):
                    args.append(_parse_term(ts))
            ts.expect(")")
            return Fn(tok.text, tuple(args), pos)
        return Var(tok.text, pos)
    ts.at("(", "[", INT, REAL, STRING, IDENT, "-")
    ts.fail()


def _parse_dist_call(ts: TokenStream, name: str, pos: Pos) -> Dist:
    params = []
    if not ts.at(")"):
        while True:
            pname = ts.expect(IDENT).text
            ts.expect("=")
            params.append((pname, _parse_term(ts)))
            if not ts.accept(","):
                break
    ts.expect(")")
    return Dist(name, tuple(params), pos)


# -- pretty printer -----------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(t) -> int:
    if isinstance(t, Fn):
        if t.fn in _PREC:
            return _PREC[t.fn]
        if t.fn == "neg":
            return 3
    return 4


def format_term(t, min_prec: int = 0) -> str:
    if isinstance(t, Const):
        s = V.format_value(t.value)
    elif isinstance(t, Var):
        s = t.name
    elif isinstance(t, ListLit):
        s = "[" + ", ".join(format_term(i) for i in t.items) + "]"
    elif isinstance(t, Dist):
        s = f"{t.name}(" + ", ".join(f"{n}={format_term(p)}" for n, p in t.params) + ")"
    elif isinstance(t, Fn) and t.fn in _PREC and len(t.args) == 2:
        p = _PREC[t.fn]
        s = f"{format_term(t.args[0], p)} {t.fn} {format_term(t.args[1], p + 1)}"
    elif isinstance(t, Fn) and t.fn == "neg" and len(t.args) == 1:
        arg = t.args[0]
        if isinstance(arg, Const) and V.type_of(arg.value) in V.NUMERIC:
            # "-1.5" would read back as a negative literal, not neg(1.5)
            s = f"-({format_term(arg)})"
        else:
            s = "-" + format_term(arg, 3)
    elif isinstance(t, Fn):
        s = f"{t.fn}(" + ", ".join(format_term(a) for a in t.args) + ")"
    else:
        raise TypeError(f"not a term: {t!r}")
    if _prec(t) < min_prec:
        s = f"({s})"
    return s


def format_atom(a: Atom) -> str:
    return f"{a.relation}(" + ", ".join(format_term(t) for t in a.args) + ")"


def format_rule(r: Rule) -> str:
    if not r.body:
        return format_atom(r.head) + "."
    return format_atom(r.head) + " :- " + ", ".join(format_atom(b) for b in r.body) + "."


def format_program(p: Program) -> str:
    lines = []
    for rel in p.schema.relations:
        if rel.name in p.declared:
            attrs = ", ".join(f"{a}: {t}" for a, t in rel.attrs)
            lines.append(f".decl {rel.name}({attrs})")
    lines.extend(format_rule(o.rule) for o in p.occurrences)
    return "\n".join(lines) + "\n"


# -- head instantiation signatures --------------------------------------------


def signature_bytes(occurrence_id: int, head_values: Iterable) -> bytes:
    return occurrence_id.to_bytes(8, "big") + b"".join(V.encode(v) for v in head_values)


def head_instantiation_signature(occ: RuleOccurrence, assignment: Mapping[str, object]) -> bytes:
    """Canonical identity of one instantiation of the head variables of ``occ``.

    Layout: 8-byte big-endian occurrence id, then for each head variable in
    first-appearance order a one-byte type tag and its payload (IEEE-754
    bits for reals with -0.0 folded into +0.0, 8-byte big-endian two's
    complement integers, length-prefixed UTF-8 strings, one byte booleans).
    """
    vals = []
    for name in head_vars(occ.rule):
        if name not in assignment:
            raise MissingVariable(f"assignment lacks head variable {name!r}")
        vals.append(assignment[name])
    return signature_bytes(occ.occurrence_id, vals)


# -- validation and compilation -----------------------------------------------


@dataclass(frozen=True)
class CompiledRule:
    """Engine-ready form of one rule occurrence."""

    occurrence_id: int
    rule: Rule
    head_relation: str
    n_vars: int
    var_names: tuple[str, ...]
    body: tuple[tuple[str, tuple], ...]  # (relation, ((is_var, var_index_or_const), ...))
    head_var_idx: tuple[int, ...]  # indices into the body binding
    head_terms: tuple[Callable, ...]  # fn(head_values, ctx) -> value
    n_sites: int


# identity equality: instances key the engine's plan cache
@dataclass(frozen=True, eq=False)
class CheckedProgram:
    program: Program
    schema: Schema
    rules: tuple[CompiledRule, ...]

    @property
    def intensional(self) -> frozenset[str]:
        return frozenset(r.name for r in self.schema.relations if r.kind == INTENSIONAL)

    @property
    def extensional(self) -> frozenset[str]:
        return frozenset(r.name for r in self.schema.relations if r.kind == EXTENSIONAL)

    @property
    def deterministic(self) -> bool:
        return all(r.n_sites == 0 for r in self.rules)

    @property
    def n_sites(self) -> int:
        return sum(r.n_sites for r in self.rules)


def validate_program(program: Program, schema: Schema | None = None) -> CheckedProgram:
    """Statically check ``program`` and compile it for the chase.

    Checks safety, head/body typing, that heads are intensional, that every
    relation is known and that distribution literals name exactly their
    parameters.  Relations declared in the program text are intensional
    iff they occur in some head.
    """
    sch = program.schema if schema is None else schema.merge(program.schema)
    heads = {o.rule.head.relation for o in program.occurrences}
    rels = []
    for r in sch.relations:
        if r.name in program.declared:
            r = r.with_kind(INTENSIONAL if r.name in heads else EXTENSIONAL)
        rels.append(r)
    sch = Schema(tuple(rels))
    compiled = tuple(_compile_rule(o, sch) for o in program.occurrences)
    return CheckedProgram(program, sch, compiled)


def _relation(sch: Schema, atom: Atom) -> RelationSchema:
    rel = sch.get(atom.relation)
    if rel is None:
        raise ProgramUnknownRelation(repr(atom.relation), *atom.pos)
    if len(atom.args) != rel.arity:
        raise ProgramTypeMismatch(
            f"{atom.relation} has arity {rel.arity}, used with {len(atom.args)} arguments", *atom.pos)
    return rel


def _compile_rule(occ: RuleOccurrence, sch: Schema) -> CompiledRule:
    rule = occ.rule
    var_index: dict[str, int] = {}
    var_type: dict[str, str] = {}
    names: list[str] = []
    body = []
    anon = 0
    for atom in rule.body:
        rel = _relation(sch, atom)
        args = []
        for arg, (attr, typ) in zip(atom.args, rel.attrs):
            if isinstance(arg, Var):
                name = arg.name
                if name == "_":
                    name = f"_#{anon}"
                    anon += 1
                if name not in var_index:
                    var_index[name] = len(names)
                    names.append(name)
                    var_type[name] = typ
                elif var_type[name] != typ:
                    raise ProgramTypeMismatch(
                        f"variable {name} used as {var_type[name]} and as {typ}", *arg.pos)
                args.append((True, var_index[name]))
            elif isinstance(arg, Const):
                vt = V.type_of(arg.value)
                if not V.assignable(vt, typ):
                    raise ProgramTypeMismatch(
                        f"constant {V.format_value(arg.value)} ({vt}) in {atom.relation}.{attr} ({typ})",
                        *arg.pos)
                args.append((False, V.coerce(arg.value, typ)))
            else:
                raise ProgramError("body arguments must be variables or constants", *atom.pos)
        body.append((atom.relation, tuple(args)))

    hrel = _relation(sch, rule.head)
    if hrel.kind != INTENSIONAL:
        raise HeadRelationExtensional(repr(hrel.name), *rule.head.pos)
    hv = head_vars(rule)
    for t in rule.head.args:
        for node in walk(t):
            if isinstance(node, Var) and (node.name == "_" or node.name not in var_index):
                raise UnsafeVariable(node.name, *node.pos)
    hv_pos = {name: i for i, name in enumerate(hv)}
    counter = [0]
    head_terms = []
    for t, (attr, typ) in zip(rule.head.args, hrel.attrs):
        fn, tt = _compile_term(t, var_type, hv_pos, counter)
        if not V.assignable(tt, typ):
            raise ProgramTypeMismatch(
                f"head term {format_term(t)} has type {tt}, {hrel.name}.{attr} is {typ}", *_pos(t, rule))
        if typ == V.REAL and tt == V.INTEGER:
            head_terms.append(_widen(fn))
        else:
            head_terms.append(fn)
    return CompiledRule(
        occurrence_id=occ.occurrence_id,
        rule=rule,
        head_relation=hrel.name,
        n_vars=len(names),
        var_names=tuple(names),
        body=tuple(body),
        head_var_idx=tuple(var_index[n] for n in hv),
        head_terms=tuple(head_terms),
        n_sites=counter[0],
    )


def _pos(t, rule: Rule) -> Pos:
    return t.pos if t.pos != (0, 0) else rule.head.pos


def _widen(fn):
    def widened(hv, ctx):
        return float(fn(hv, ctx)) + 0.0

    return widened


def _compile_term(t, var_type: Mapping[str, str], hv_pos: Mapping[str, int], counter: list):
    """Return (evaluator, static type).  Dist sites are numbered in pre-order."""
    if isinstance(t, Const):
        value = t.value
        return (lambda hv, ctx: value), V.type_of(value)
    if isinstance(t, Var):
        i = hv_pos[t.name]
        return (lambda hv, ctx: hv[i]), var_type[t.name]
    if isinstance(t, ListLit):
        raise ProgramTypeMismatch("list literal outside a distribution parameter", *t.pos)
    if isinstance(t, Fn):
        fn = D.FN_ALIASES.get(t.fn)
        if fn is None:
            raise ProgramError(f"unknown function {t.fn!r}", *t.pos)
        if len(t.args) != D.FN_ARITY[fn]:
            raise ProgramTypeMismatch(
                f"{t.fn} takes {D.FN_ARITY[fn]} arguments, got {len(t.args)}", *t.pos)
        subs = [_compile_term(a, var_type, hv_pos, counter) for a in t.args]
        try:
            rtype = D.fn_result_type(fn, [st for _, st in subs])
        except ParamTypeMismatch as exc:
            raise ProgramTypeMismatch(str(exc), *t.pos) from None
        evals = [e for e, _ in subs]
        apply = D.apply_fn
        if len(evals) == 1:
            (e0,) = evals
            return (lambda hv, ctx: apply(fn, (e0(hv, ctx),))), rtype
        e0, e1 = evals
        return (lambda hv, ctx: apply(fn, (e0(hv, ctx), e1(hv, ctx)))), rtype
    if isinstance(t, Dist):
        return _compile_dist(t, var_type, hv_pos, counter)
    raise ProgramError(f"not a term: {t!r}")


def _compile_dist(t: Dist, var_type, hv_pos, counter):
    spec = D.DISTRIBUTIONS.get(t.name)
    if spec is None:
        raise ProgramError(f"unknown distribution {t.name!r}", *t.pos)
    given = [n for n, _ in t.params]
    if sorted(given) != sorted(spec.param_names) or len(set(given)) != len(given):
        raise DistParamArity(
            f"{t.name} takes parameters ({', '.join(spec.param_names)}), got ({', '.join(given)})",
            *t.pos)
    site = counter[0]
    counter[0] += 1
    by_name = dict(t.params)
    evals = []
    const_vals = []
    for pname, kind in spec.params:
        term = by_name[pname]
        if kind == D.LIST:
            if not isinstance(term, ListLit):
                raise ProgramTypeMismatch(f"{t.name}.{pname} must be a list literal", *t.pos)
            vals = tuple(c.value for c in term.items)
            evals.append(lambda hv, ctx, vals=vals: vals)
            const_vals.append(vals)
        else:
            if isinstance(term, ListLit):
                raise ProgramTypeMismatch(f"{t.name}.{pname} must be a number", *term.pos)
            e, tt = _compile_term(term, var_type, hv_pos, counter)
            if tt not in V.NUMERIC:
                raise ProgramTypeMismatch(
                    f"{t.name}.{pname} must be numeric, got {tt} term {format_term(term)}",
                    *_tpos(term, t))
            evals.append(e)
            const_vals.append(term.value if isinstance(term, Const) else None)
    if all(c is not None for c in const_vals):
        try:
            pre = spec._check(const_vals)
        except (ParamOutOfDomain, ParamTypeMismatch) as exc:
            raise ProgramError(str(exc), *t.pos) from None
        rtype = D.support_type(spec, const_vals)

        def sample_const(hv, ctx):
            return D.sample_checked(spec, pre, ctx.stream(site))

        return sample_const, rtype
    rtype = D.support_type(spec, const_vals)
    check = spec._check

    def sample_dist(hv, ctx):
        p = check([e(hv, ctx) for e in evals])
        return D.sample_checked(spec, p, ctx.stream(site))

    return sample_dist, rtype


def _tpos(term, parent) -> Pos:
    return term.pos if term.pos != (0, 0) else parent.pos


__all__ = [
    "Atom", "CheckedProgram", "CompiledRule", "Const", "Dist", "Fn", "ListLit", "Program",
    "Rule", "RuleOccurrence", "Var", "dist_sites", "format_program", "format_rule",
    "format_term", "head_instantiation_signature", "head_vars", "is_deterministic",
    "parse_program", "program_from_rules", "signature_bytes", "validate_program",
]
