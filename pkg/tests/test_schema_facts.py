import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdatalog import values as V
from gdatalog.errors import ArityMismatch, SchemaMismatch, TypeMismatch, UnknownRelation
from gdatalog.instance import BAG, SET, Instance, to_set
from gdatalog.schema import Fact, RelationSchema, Schema, make_fact

E3 = Schema.of(E=[("y", "string"), ("x", "string"), ("s", "real")])


def test_make_fact_temp_row():
    s = Schema.of(Temp=[("RoomNo", "string"), ("Time", "string"), ("°C", "real")])
    f = make_fact(s, "Temp", ["4108", "2021-01-05 08:00", 20.2])
    assert f == Fact("Temp", ("4108", "2021-01-05 08:00", 20.2))
    assert str(f) == 'Temp("4108", "2021-01-05 08:00", 20.2)'


def test_make_fact_arity():
    with pytest.raises(ArityMismatch):
        make_fact(E3, "E", ["a", "b"])


def test_make_fact_type_names_position():
    with pytest.raises(TypeMismatch, match="position 2"):
        make_fact(E3, "E", ["a", "b", "x"])


def test_make_fact_unknown_relation():
    with pytest.raises(UnknownRelation):
        make_fact(E3, "F", [])


def test_integer_widens_to_real():
    f = make_fact(E3, "E", ["a", "b", 2])
    assert f.values[2] == 2.0 and type(f.values[2]) is float


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_nonfinite_reals_rejected(bad):
    with pytest.raises(TypeMismatch):
        make_fact(E3, "E", ["a", "b", bad])


def test_negative_zero_canonical():
    f = make_fact(E3, "E", ["a", "b", -0.0])
    assert math.copysign(1.0, f.values[2]) == 1.0
    assert V.encode(-0.0) == V.encode(0.0)


def test_int_range_and_bool_not_integer():
    s = Schema.of(N=[("n", "integer")])
    make_fact(s, "N", [2**63 - 1])
    with pytest.raises(TypeMismatch):
        make_fact(s, "N", [2**63])
    with pytest.raises(TypeMismatch):
        make_fact(s, "N", [True])


def test_schema_invariants():
    with pytest.raises(SchemaMismatch):
        Schema((RelationSchema("R", (("a", "real"),)), RelationSchema("R", (("b", "real"),))))
    with pytest.raises(SchemaMismatch):
        RelationSchema("R", (("a", "real"), ("a", "integer")))
    with pytest.raises(SchemaMismatch):
        RelationSchema("R", (("a", "complex"),))


def test_schema_json_round_trip():
    s = Schema.of(Temp=[("RoomNo", "integer"), ("°C", "real")], On=[("flag", "boolean")])
    assert Schema.from_json(s.to_json()) == s


def test_to_set_examples():
    f, g = Fact("E", ("a", "b", 1.0)), Fact("E", ("b", "c", 1.0))
    bag = Instance(E3, [f, f, g])
    assert to_set(bag) == Instance(E3, [f, g], SET)
    empty = Instance(E3, [], BAG)
    assert len(to_set(empty)) == 0
    s = Instance(E3, [f, g], SET)
    assert to_set(s) is s


def test_bag_and_set_differ():
    f = Fact("E", ("a", "b", 1.0))
    assert Instance(E3, [f, f]) != Instance(E3, [f])
    assert Instance(E3, [f, f], SET) == Instance(E3, [f], SET)
    assert Instance(E3, [f, f]).count(f) == 2


facts = st.builds(
    lambda a, b, s: Fact("E", (a, b, s)),
    st.sampled_from("abc"), st.sampled_from("abc"), st.sampled_from([0.5, 1.0, 2.0]),
)


@settings(max_examples=200)
@given(st.lists(facts, max_size=12))
def test_to_set_idempotent_and_support_preserving(fs):
    d = Instance(E3, fs)
    once = to_set(d)
    assert to_set(once) == once
    assert once.support() == d.support()
    assert all(once.count(f) == 1 for f in once.support())
