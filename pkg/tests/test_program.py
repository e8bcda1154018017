import itertools
import math

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from gdatalog.errors import (
    DistParamArity,
    HeadRelationExtensional,
    MissingVariable,
    ParseError,
    ProgramError,
    TypeMismatch,
    UnknownRelation,
    UnsafeVariable,
)
from gdatalog.program import (
    Atom,
    Const,
    Dist,
    Fn,
    Program,
    Rule,
    RuleOccurrence,
    Var,
    format_program,
    head_instantiation_signature,
    head_vars,
    is_deterministic,
    parse_program,
    signature_bytes,
    validate_program,
)
from gdatalog.schema import INTENSIONAL, RelationSchema, Schema

EX5_SCHEMA = Schema((
    RelationSchema("S", (("v", "string"),)),
    RelationSchema("E", (("y", "string"), ("x", "string"), ("s", "real"))),
    RelationSchema("R", (("x", "string"), ("t", "real")), INTENSIONAL),
))
EX5 = """
R(x, 0) :- S(x).
R(x, t + lognormal(mu=ln(s), var=0.1)) :- R(y, t), E(y, x, s).
"""


def test_parse_plain_walks():
    p = parse_program("R(x,0) :- S(x). R(x,t+s) :- R(y,t), E(y,x,s).")
    assert [o.occurrence_id for o in p.occurrences] == [0, 1]
    assert is_deterministic(p)
    assert p.occurrences[1].rule.head.args[1] == Fn("+", (Var("t"), Var("s")))


def test_parse_lognormal_head():
    p = parse_program("R(x, t + lognormal(mu=ln(s), var=0.1)) :- R(y,t), E(y,x,s).")
    head = p.occurrences[0].rule.head
    assert head.args[1] == Fn("+", (Var("t"), Dist("lognormal", (
        ("mu", Fn("ln", (Var("s"),))), ("var", Const(0.1))))))
    assert not is_deterministic(p)


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        parse_program("R(x :- S(x).")
    err = exc.value
    assert (err.line, err.column) == (1, 5)
    assert {",", ")"} <= err.expected


def test_parse_multiline_position_and_comments():
    text = "% walks\nR(x, 0) :- S(x).\nR(x, t +) :- R(y, t).\n"
    with pytest.raises(ParseError) as exc:
        parse_program(text)
    assert (exc.value.line, exc.value.column) == (3, 9)


def test_duplicate_rules_are_distinct_occurrences():
    p = parse_program("R(x) :- S(x). R(x) :- S(x).")
    assert len(p.occurrences) == 2
    assert p.occurrences[0].rule == p.occurrences[1].rule


def test_literal_typing():
    p = parse_program('R(1, 1.0, "1", true, -2, -0.5) :- S(x).')
    vals = [a.value for a in p.occurrences[0].rule.head.args]
    assert [type(v) for v in vals] == [int, float, str, bool, int, float]
    assert vals[4] == -2 and vals[5] == -0.5


def test_validate_example5():
    cp = validate_program(parse_program(EX5), EX5_SCHEMA)
    assert cp.intensional == {"R"} and cp.extensional == {"S", "E"}
    assert len(cp.rules) == 2 and cp.n_sites == 1


def test_validate_with_inline_declarations(data_dir):
    cp = validate_program(parse_program((data_dir / "travel.gdl").read_text()))
    assert cp.intensional == {"R"}
    assert cp.schema["E"].types == ("integer", "integer", "real")


def test_unsafe_variable():
    s = Schema.of(S=[("v", "integer")], R=[("v", "integer"), ("w", "integer")])
    s = Schema((s["S"], s["R"].with_kind(INTENSIONAL)))
    with pytest.raises(UnsafeVariable) as exc:
        validate_program(parse_program("R(x, y) :- S(x)."), s)
    assert str(exc.value) == "UnsafeVariable y at line 1, column 6"


def test_bernoulli_string_param_rejected():
    s = Schema((RelationSchema("S", (("x", "string"),)),
                RelationSchema("B", (("b", "integer"),), INTENSIONAL)))
    with pytest.raises(TypeMismatch):
        validate_program(parse_program("B(bernoulli(p=x)) :- S(x)."), s)


@pytest.mark.parametrize("text,err", [
    ("S(x) :- R(x, 0.0).", HeadRelationExtensional),
    ("Q(x) :- S(x).", UnknownRelation),
    ("R(x, normal(mean=1.0)) :- S(x).", DistParamArity),
    ("R(x, normal(mean=1.0, sd=1.0)) :- S(x).", DistParamArity),
    ("R(x, normal(mean=1.0, var=-1.0)) :- S(x).", ProgramError),
    ("R(x, x) :- S(x).", TypeMismatch),
    ("R(x) :- S(x).", TypeMismatch),
    ("R(x, t) :- S(x), E(t, x, 1.0).", TypeMismatch),
    ("R(x, 1.0) :- E(x, x, \"far\").", TypeMismatch),
    ("R(_, 1.0) :- S(_).", UnsafeVariable),
])
def test_validation_errors(text, err):
    with pytest.raises(err):
        validate_program(parse_program(text), EX5_SCHEMA)


def test_signature_examples():
    occ = parse_program(EX5).occurrences[1]
    assert head_vars(occ.rule) == ("x", "t", "s")
    a = head_instantiation_signature(occ, {"x": "a", "t": 1.0, "s": 2.0, "y": "b"})
    b = head_instantiation_signature(occ, {"x": "a", "t": 1.0, "s": 2.0, "y": "c"})
    c = head_instantiation_signature(occ, {"x": "a", "t": 1.0, "s": 3.0})
    assert a == b and a != c
    assert a[:8] == (1).to_bytes(8, "big")
    assert signature_bytes(0, [1.0]) != signature_bytes(0, [1])
    with pytest.raises(MissingVariable):
        head_instantiation_signature(occ, {"x": "a", "t": 1.0})


def test_signature_layout():
    assert signature_bytes(3, [-0.0, 1, "é", True]).hex() == (
        "0000000000000003"
        "52" "0000000000000000"
        "49" "0000000000000001"
        "53" "0000000000000002" "c3a9"
        "42" "01"
    )


def test_signature_type_tags_no_collisions():
    # 10^4 tuples mixing reals and integers with equal numeric values
    values = [v for k in range(-25, 25) for v in (k, float(k))]
    seen = {}
    for tup in itertools.islice(itertools.product(values, repeat=3), 10_000):
        sig = signature_bytes(0, tup)
        key = tuple((type(v), v) for v in tup)
        assert seen.setdefault(sig, key) == key


def test_signature_injective_corpus():
    strings = ["", "a", "b", "ab", "a\x00", "\x00", "é", "ab c"]
    reals = [0.0, 1.0, -1.0, 0.5, 1e300, 5e-324, math.pi]
    ints = [0, 1, -1, 2**63 - 1, -(2**63), 256]
    atoms = [*strings, *reals, *ints, True, False]
    def tuples():
        for n in range(5):
            for occ in range(4):
                for tup in itertools.product(atoms, repeat=n):
                    yield occ, tuple((type(v), v) for v in tup)

    corpus = set(itertools.islice(tuples(), 100_000))
    sigs = {signature_bytes(o, [v for _, v in tup]) for o, tup in corpus}
    assert len(corpus) == 100_000 and len(sigs) == len(corpus)


# -- generated programs -------------------------------------------------------------

GEN_SCHEMA = Schema((
    RelationSchema("E1", (("a", "integer"), ("b", "real"))),
    RelationSchema("E2", (("c", "string"), ("d", "integer"), ("f", "boolean"))),
    RelationSchema("I1", (("x", "integer"), ("y", "real")), INTENSIONAL),
    RelationSchema("I2", (("s", "string"), ("r", "real"), ("q", "boolean")), INTENSIONAL),
))
VARS = {"integer": ["i", "j", "k"], "real": ["u", "w"], "string": ["s1", "s2"],
        "boolean": ["b1"]}
CONSTS = {
    "integer": st.integers(-(2**63), 2**63 - 1),
    "real": st.floats(allow_nan=False, allow_infinity=False).map(lambda x: x + 0.0),
    "string": st.text(max_size=6),
    "boolean": st.booleans(),
}


@st.composite
def body_atoms(draw):
    atoms = []
    for _ in range(draw(st.integers(1, 3))):
        rel = GEN_SCHEMA[draw(st.sampled_from(["E1", "E2", "I1", "I2"]))]
        args = []
        for _, typ in rel.attrs:
            if draw(st.integers(0, 4)) == 0:
                args.append(Const(draw(CONSTS[typ])))
            else:
                args.append(Var(draw(st.sampled_from(VARS[typ]))))
        atoms.append(Atom(rel.name, tuple(args)))
    return tuple(atoms)


def _bound(body):
    out = {}
    for atom in body:
        for arg, (_, typ) in zip(atom.args, GEN_SCHEMA[atom.relation].attrs):
            if isinstance(arg, Var):
                out.setdefault(typ, set()).add(arg.name)
    return {t: sorted(v) for t, v in out.items()}


def num_term(draw, bound, depth):
    choices = ["const"]
    numeric_vars = bound.get("integer", []) + bound.get("real", [])
    if numeric_vars:
        choices.append("var")
    if depth > 0:
        choices += ["fn", "dist", "neg"]
    kind = draw(st.sampled_from(choices))
    if kind == "const":
        return Const(draw(st.one_of(st.integers(-100, 100),
                                    st.floats(-1e6, 1e6).map(lambda x: x + 0.0))))
    if kind == "var":
        return Var(draw(st.sampled_from(numeric_vars)))
    if kind == "neg":
        return Fn("neg", (num_term(draw, bound, depth - 1),))
    if kind == "fn":
        op = draw(st.sampled_from(["+", "-", "*", "/", "ln", "exp"]))
        if op in ("ln", "exp"):
            return Fn(op, (num_term(draw, bound, depth - 1),))
        return Fn(op, (num_term(draw, bound, depth - 1), num_term(draw, bound, depth - 1)))
    name = draw(st.sampled_from(["normal", "lognormal", "exponential", "uniform"]))
    if name in ("normal", "lognormal"):
        first = ("mean" if name == "normal" else "mu", num_term(draw, bound, depth - 1))
        params = (first, ("var", Const(draw(st.floats(0.01, 10.0)))))
    elif name == "exponential":
        params = (("rate", Const(draw(st.floats(0.1, 10.0)))),)
    else:
        params = (("lo", Const(0.0)), ("hi", Const(draw(st.floats(0.5, 10.0)))))
    if draw(st.booleans()):
        params = tuple(reversed(params))
    return Dist(name, params)


@st.composite
def rules(draw):
    body = draw(body_atoms())
    bound = _bound(body)
    head_rel = GEN_SCHEMA[draw(st.sampled_from(["I1", "I2"]))]
    args = []
    for _, typ in head_rel.attrs:
        if typ == "real":
            args.append(num_term(draw, bound, 3))
        elif typ in bound and draw(st.booleans()):
            args.append(Var(draw(st.sampled_from(bound[typ]))))
        else:
            args.append(Const(draw(CONSTS[typ])))
    return Rule(Atom(head_rel.name, tuple(args)), body)


@st.composite
def programs(draw):
    rs = draw(st.lists(rules(), min_size=1, max_size=4))
    return Program(tuple(RuleOccurrence(i, r) for i, r in enumerate(rs)), GEN_SCHEMA,
                   frozenset(GEN_SCHEMA.names))


@settings(max_examples=500, suppress_health_check=[HealthCheck.too_slow])
@given(programs())
def test_round_trip(prog):
    text = format_program(prog)
    once = parse_program(text)
    assert once.occurrences == prog.occurrences
    twice = parse_program(format_program(once))
    assert twice.occurrences == once.occurrences
    assert format_program(twice) == text


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(programs())
def test_validate_accepts_generated(prog):
    cp = validate_program(prog)
    assert len(cp.rules) == len(prog.occurrences)


def _replace_head_arg(rule, i, new):
    args = list(rule.head.args)
    args[i] = new
    return Rule(Atom(rule.head.relation, tuple(args)), rule.body)


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(programs(), st.data())
def test_single_fault_mutations_rejected(prog, data):
    idx = data.draw(st.integers(0, len(prog.occurrences) - 1))
    rule = prog.occurrences[idx].rule
    fault = data.draw(st.sampled_from(["unbound", "head_type", "body_type"]))
    if fault == "unbound":
        pos = data.draw(st.integers(0, len(rule.head.args) - 1))
        typ = GEN_SCHEMA[rule.head.relation].types[pos]
        bad = Fn("+", (Var("zz"), Const(1.0))) if typ == "real" else Var("zz")
        mutated, err = _replace_head_arg(rule, pos, bad), UnsafeVariable
    elif fault == "head_type":
        # every head relation ends in a real or boolean slot; put a string there
        mutated, err = _replace_head_arg(rule, len(rule.head.args) - 1, Const("oops")), TypeMismatch
    else:
        atom = rule.body[0]
        args = list(atom.args)
        typ = GEN_SCHEMA[atom.relation].types[0]
        args[0] = Const("oops") if typ != "string" else Const(1)
        body = (Atom(atom.relation, tuple(args)),) + rule.body[1:]
        mutated, err = Rule(rule.head, body), TypeMismatch
    occs = list(prog.occurrences)
    occs[idx] = RuleOccurrence(idx, mutated)
    with pytest.raises(err):
        validate_program(Program(tuple(occs), prog.schema, prog.declared))
