"""Finite bag and set instances."""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Iterator, Mapping

from .errors import SchemaMismatch
from .schema import Fact, Schema

BAG = "bag"
SET = "set"


class Instance:
    """A finite multiset of facts over ``schema``.

    In set mode every multiplicity is 1.  Instances are treated as immutable:
    the constructors copy their input and no method mutates ``self``.
    """

    __slots__ = ("schema", "mode", "_counts", "_by_rel")

    def __init__(self, schema: Schema, facts: Iterable[Fact] | Mapping[Fact, int] = (),
                 mode: str = BAG):
        if mode not in (BAG, SET):
            raise ValueError(f"unknown instance mode {mode!r}")
        self.schema = schema
        self.mode = mode
        if isinstance(facts, Mapping):
            counts = Counter({f: int(m) for f, m in facts.items() if m > 0})
        else:
            counts = Counter(facts)
        if mode == SET:
            counts = Counter(dict.fromkeys(counts, 1))
        self._counts = counts
        self._by_rel: dict[str, list[tuple]] | None = None

    @classmethod
    def from_rows(cls, schema: Schema, rows: Mapping[str, Iterable[Iterable]], mode: str = BAG):
        from .schema import make_fact

        facts = [make_fact(schema, rel, row) for rel, rs in rows.items() for row in rs]
        return cls(schema, facts, mode)

    def __iter__(self) -> Iterator[Fact]:
        """Iterate facts with repetition according to multiplicity."""
        for f, m in self._counts.items():
            for _ in range(m):
                yield f

    def __len__(self) -> int:
        return sum(self._counts.values())

    def __contains__(self, fact: Fact) -> bool:
        return fact in self._counts

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return self.mode == other.mode and self._counts == other._counts

    def __hash__(self):
        return hash((self.mode, frozenset(self._counts.items())))

    def __repr__(self) -> str:
        body = ", ".join(sorted(str(f) if m == 1 else f"{f}×{m}" for f, m in self._counts.items()))
        return f"Instance[{self.mode}]{{{body}}}"

    def count(self, fact: Fact) -> int:
        return self._counts.get(fact, 0)

    def items(self):
        return self._counts.items()

    def support(self) -> frozenset[Fact]:
        return frozenset(self._counts)

    def rows(self, relation: str) -> list[tuple]:
        """Value tuples of ``relation``, repeated per multiplicity."""
        if self._by_rel is None:
            by: dict[str, list[tuple]] = {}
            for f, m in self._counts.items():
                lst = by.setdefault(f.relation, [])
                lst.extend([f.values] * m)
            self._by_rel = by
        return self._by_rel.get(relation, [])

    def restrict(self, relations: Iterable[str], schema: Schema | None = None) -> "Instance":
        keep = set(relations)
        return Instance(schema or self.schema,
                        {f: m for f, m in self._counts.items() if f.relation in keep}, self.mode)

    def sorted_facts(self) -> list[Fact]:
        from .values import encode

        return sorted(self, key=lambda f: (f.relation, b"".join(encode(v) for v in f.values)))


def to_set(instance: Instance) -> Instance:
    if instance.mode == SET:
        return instance
    return Instance(instance.schema, instance.support(), SET)


def check_facts(instance: Instance, schema: Schema) -> None:
    """Raise SchemaMismatch unless every fact fits ``schema``."""
    from .values import type_of

    for f in instance.support():
        rel = schema.get(f.relation)
        if rel is None:
            raise SchemaMismatch(f"fact {f} uses relation {f.relation!r} not in schema")
        if len(f.values) != rel.arity:
            raise SchemaMismatch(f"fact {f} has arity {len(f.values)}, expected {rel.arity}")
        for v, t in zip(f.values, rel.types):
            if type_of(v) != t:
                raise SchemaMismatch(f"fact {f}: value {v!r} is not of type {t}")
