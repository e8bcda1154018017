"""Relation schemas, facts and fact construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

from . import values as V
from .errors import ArityMismatch, SchemaMismatch, TypeMismatch, UnknownAttribute, UnknownRelation

EXTENSIONAL = "extensional"
INTENSIONAL = "intensional"


class Fact(NamedTuple):
    relation: str
    values: tuple

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(V.format_value(v) for v in self.values)})"


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attrs: tuple[tuple[str, str], ...]
    kind: str = EXTENSIONAL

    def __post_init__(self):
        object.__setattr__(self, "attrs", tuple((str(a), str(t)) for a, t in self.attrs))
        names = [a for a, _ in self.attrs]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate attribute name in relation {self.name}")
        for a, t in self.attrs:
            if t not in V.TYPES:
                raise SchemaMismatch(f"attribute {self.name}.{a} has unknown type {t!r}")
        if self.kind not in (EXTENSIONAL, INTENSIONAL):
            raise SchemaMismatch(f"relation {self.name} has unknown kind {self.kind!r}")

    @property
    def arity(self) -> int:
        return len(self.attrs)

    @property
    def attr_names(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.attrs)

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.attrs)

    def index(self, attr: str) -> int:
        for i, (a, _) in enumerate(self.attrs):
            if a == attr:
                return i
        raise UnknownAttribute(f"relation {self.name} has no attribute {attr!r}")

    def with_kind(self, kind: str) -> "RelationSchema":
        return RelationSchema(self.name, self.attrs, kind)


@dataclass(frozen=True)
class Schema:
    relations: tuple[RelationSchema, ...] = field(default_factory=tuple)

    def __post_init__(self):
        rels = tuple(self.relations)
        object.__setattr__(self, "relations", rels)
        names = [r.name for r in rels]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate relation name in schema")

    def __contains__(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)

    def __getitem__(self, name: str) -> RelationSchema:
        for r in self.relations:
            if r.name == name:
                return r
        raise UnknownRelation(f"unknown relation {name!r}")

    def get(self, name: str) -> RelationSchema | None:
        return next((r for r in self.relations if r.name == name), None)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def restrict(self, kind: str) -> "Schema":
        return Schema(tuple(r for r in self.relations if r.kind == kind))

    def merge(self, other: "Schema") -> "Schema":
        rels = list(self.relations)
        for r in other.relations:
            mine = self.get(r.name)
            if mine is None:
                rels.append(r)
            elif mine.attrs != r.attrs:
                raise SchemaMismatch(f"conflicting definitions of relation {r.name}")
        return Schema(tuple(rels))

    @classmethod
    def of(cls, **relations: Sequence[tuple[str, str]]) -> "Schema":
        """Shorthand: ``Schema.of(E=[("y", "string"), ("x", "string")])``."""
        return cls(tuple(RelationSchema(n, tuple(a)) for n, a in relations.items()))

    def to_json(self) -> dict:
        return {
            "relations": [
                {"name": r.name, "kind": r.kind,
                 "attrs": [{"name": a, "type": t} for a, t in r.attrs]}
                for r in self.relations
            ]
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Schema":
        try:
            rels = tuple(
                RelationSchema(
                    r["name"],
                    tuple((a["name"], a["type"]) for a in r["attrs"]),
                    r.get("kind", EXTENSIONAL),
                )
                for r in data["relations"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed schema document: {exc}") from exc
        return cls(rels)

    @classmethod
    def loads(cls, text: str) -> "Schema":
        return cls.from_json(json.loads(text))


def make_fact(schema: Schema, relation: str, values: Iterable) -> Fact:
    rel = schema[relation]
    vals = list(values)
    if len(vals) != rel.arity:
        raise ArityMismatch(
            f"{relation} expects {rel.arity} values, got {len(vals)} (position {len(vals) if len(vals) < rel.arity else rel.arity})"
        )
    out = []
    for i, (v, (attr, typ)) in enumerate(zip(vals, rel.attrs)):
        try:
            out.append(V.coerce(v, typ))
        except TypeMismatch as exc:
            raise TypeMismatch(f"{relation} position {i} ({attr}): {exc}") from None
    return Fact(relation, tuple(out))
