import operator

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdatalog.errors import ParseError, SchemaMismatch
from gdatalog.events import (
    And,
    AttrCompare,
    Compare,
    CountingAtom,
    FactPredicate,
    Not,
    Or,
    event_holds,
    multiplicity,
    parse_event,
)
from gdatalog.instance import SET, Instance
from gdatalog.io import load_table
from gdatalog.pdb import TableSource, sample_world
from gdatalog.schema import Fact, Schema

S = Schema.of(R=[("a", "integer"), ("b", "integer")], T=[("name", "string")])
f, g, h = Fact("R", (1, 1)), Fact("R", (2, 5)), Fact("R", (9, 9))


def test_worked_multiplicity():
    bag = Instance(S, [f, f, g, g, g, h])
    pred = FactPredicate("R", (Compare("a", "<=", 2),))  # exactly {f, g}
    assert multiplicity(bag, pred) == 5


def test_multiplicity_empty_and_set():
    pred = FactPredicate("R", (Compare("a", "<=", 2),))
    assert multiplicity(Instance(S), pred) == 0
    assert multiplicity(Instance(S, [f, g, h], SET), pred) == 2


def test_multiplicity_schema_errors():
    d = Instance(S, [f])
    with pytest.raises(SchemaMismatch):
        multiplicity(d, FactPredicate("Nope"))
    with pytest.raises(SchemaMismatch):
        multiplicity(d, FactPredicate("R", (Compare("zz", "=", 1),)))
    with pytest.raises(SchemaMismatch):
        multiplicity(d, FactPredicate("T", (Compare("name", "<", "x"),)))
    with pytest.raises(SchemaMismatch):
        multiplicity(d, FactPredicate("R", (Compare("a", "=", "one"),)))


def test_event_holds_direct_counts():
    d = Instance(S, [f, f])
    only_f = FactPredicate("R", (Compare("a", "=", 1), Compare("b", "=", 1)))
    assert event_holds(d, CountingAtom(only_f, "=", 2))
    assert not event_holds(d, CountingAtom(only_f, "=", 1))


def test_diagonal_predicate():
    d = Instance(S, [f, g, h])
    assert multiplicity(d, FactPredicate("R", (AttrCompare("a", "=", "b"),))) == 2
    assert multiplicity(d, FactPredicate("R", (AttrCompare("a", "<", "b"),))) == 1


def test_operators_build_trees():
    a = CountingAtom(FactPredicate("R"), ">=", 1)
    b = CountingAtom(FactPredicate("T"), "=", 0)
    assert (a & b) == And((a, b))
    assert (a | b) == Or((a, b))
    assert ~a == Not(a)


def test_parse_event():
    ev = parse_event('count(R where a >= 1 and b in [0, 5]) >= 2 and not #(T where name = "x") = 0')
    assert ev == And((
        CountingAtom(FactPredicate("R", (Compare("a", ">=", 1), Compare("b", ">=", 0),
                                         Compare("b", "<=", 5))), ">=", 2),
        Not(CountingAtom(FactPredicate("T", (Compare("name", "=", "x"),)), "=", 0)),
    ))
    assert parse_event("count(R where a = b) = 1") == CountingAtom(
        FactPredicate("R", (AttrCompare("a", "=", "b"),)), "=", 1)
    assert parse_event("count(R) ≥ 0 or count(T) ≠ 3") == Or((
        CountingAtom(FactPredicate("R"), ">=", 0), CountingAtom(FactPredicate("T"), "!=", 3)))


def test_parse_event_errors():
    with pytest.raises(ParseError) as exc:
        parse_event("count(R where a >= ) = 1")
    assert exc.value.line == 1 and exc.value.column == 20
    with pytest.raises(ParseError):
        parse_event("count(R) = -1")


def test_event_on_sampled_temperature_worlds(data_dir):
    src = TableSource(load_table(data_dir / "temp_table.json"))
    ev = parse_event("count(Temp where °C in [20, 22] and RoomNo = 4108) >= 1")
    for w in range(10):
        world = sample_world(src, 3, w).instance
        by_hand = sum(1 for fact in world if fact.values[0] == 4108 and 20 <= fact.values[2] <= 22)
        assert event_holds(world, ev) == (by_hand >= 1)


# -- properties -------------------------------------------------------------------

rows = st.tuples(st.integers(-5, 5), st.integers(-5, 5))
instances = st.lists(rows, max_size=15).map(lambda rs: Instance(S, [Fact("R", r) for r in rs]))
ops = st.sampled_from(["=", "!=", "<", "<=", ">", ">="])
preds = st.lists(
    st.one_of(st.builds(Compare, st.sampled_from("ab"), ops, st.integers(-5, 5)),
              st.builds(AttrCompare, st.just("a"), ops, st.just("b"))),
    max_size=3,
).map(lambda cs: FactPredicate("R", tuple(cs)))
atoms = st.builds(CountingAtom, preds, ops, st.integers(0, 6))
events = st.recursive(
    atoms,
    lambda sub: st.one_of(st.builds(Not, sub),
                          st.lists(sub, min_size=1, max_size=3).map(lambda xs: And(tuple(xs))),
                          st.lists(sub, min_size=1, max_size=3).map(lambda xs: Or(tuple(xs)))),
    max_leaves=6,
)


@settings(max_examples=1000)
@given(instances, events)
def test_negation_is_complement(d, e):
    assert event_holds(d, Not(e)) == (not event_holds(d, e))


@settings(max_examples=300)
@given(instances, events, events)
def test_de_morgan(d, e1, e2):
    assert event_holds(d, Not(And((e1, e2)))) == event_holds(d, Or((Not(e1), Not(e2))))


@settings(max_examples=300)
@given(instances, st.integers(-6, 6), st.integers(-6, 6), st.integers(-6, 6))
def test_multiplicity_additive_over_disjoint_intervals(d, lo, mid, hi):
    lo, mid, hi = sorted((lo, mid, hi))
    left = FactPredicate("R", (Compare("a", ">=", lo), Compare("a", "<", mid)))
    right = FactPredicate("R", (Compare("a", ">=", mid), Compare("a", "<", hi)))
    union = FactPredicate("R", (Compare("a", ">=", lo), Compare("a", "<", hi)))
    assert multiplicity(d, left) + multiplicity(d, right) == multiplicity(d, union)


@settings(max_examples=300)
@given(instances, preds)
def test_set_multiplicity_matches_filter(d, pred):
    s = Instance(S, d.support(), SET)
    fn = {"=": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
          ">": operator.gt, ">=": operator.ge}

    def naive(fact):
        row = dict(zip("ab", fact.values))
        for c in pred.constraints:
            rhs = row[c.right] if isinstance(c, AttrCompare) else c.value
            lhs = row[c.left] if isinstance(c, AttrCompare) else row[c.attr]
            if not fn[c.op](lhs, rhs):
                return False
        return True

    assert multiplicity(s, pred) == len([x for x in s.support() if naive(x)])
