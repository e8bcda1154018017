"""File formats: schemas, extensional instances, probabilistic tables, worlds."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Mapping

from . import values as V
from .errors import SchemaMismatch
from .instance import BAG, SET, Instance
from .pdb import Cell, ProbTable, TableRow
from .schema import EXTENSIONAL, Fact, RelationSchema, Schema, make_fact


def read_text(path: str | Path) -> str:
    return Path(path).read_text(encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(read_text(path))


def load_schema(path: str | Path) -> Schema:
    return Schema.from_json(read_json(path))


# -- instances --------------------------------------------------------------------


def instance_from_json(data: Mapping, schema: Schema, mode: str = SET) -> Instance:
    """``{"R": [[v, ...], ...], ...}`` to an instance over ``schema``."""
    if not isinstance(data, Mapping):
        raise SchemaMismatch("instance document must map relation names to row lists")
    facts = []
    for rel, rows in data.items():
        for row in rows:
            facts.append(make_fact(schema, rel, row))
    return Instance(schema, facts, mode)


def load_edb(path: str | Path, schema: Schema, mode: str = SET) -> Instance:
    """Load a JSON instance, or a CSV file named after its relation.

    A CSV file must carry a header row with the attribute names in schema
    order; cells are parsed according to the attribute types.
    """
    p = Path(path)
    if p.suffix.lower() != ".csv":
        return instance_from_json(read_json(p), schema, mode)
    rel = schema[p.stem]
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != rel.attr_names:
            raise SchemaMismatch(f"{p.name}: header must be {','.join(rel.attr_names)}")
        facts = [make_fact(schema, rel.name, [_parse_cell(c, t) for c, t in zip(row, rel.types)])
                 if len(row) == rel.arity else make_fact(schema, rel.name, row)
                 for row in reader if row]
    return Instance(schema, facts, mode)


def _parse_cell(text: str, typ: str):
    text = text.strip()
    try:
        if typ == V.INTEGER:
            return int(text)
        if typ == V.REAL:
            return float(text)
        if typ == V.BOOLEAN:
            if text.lower() in ("true", "1"):
                return True
            if text.lower() in ("false", "0"):
                return False
            raise ValueError(text)
    except ValueError:
        raise SchemaMismatch(f"cannot read {text!r} as {typ}") from None
    return text


def instance_to_json(instance: Instance) -> dict:
    """Relations in schema order, rows sorted, repeated by multiplicity."""
    out: dict[str, list] = {}
    for f in instance.sorted_facts():
        out.setdefault(f.relation, []).append(list(f.values))
    return out


def facts_to_json(instance: Instance) -> list:
    return [{"relation": f.relation, "values": list(f.values)} for f in instance.sorted_facts()]


# -- probabilistic tables -----------------------------------------------------------


def _table_block(block: Mapping, schema: Schema | None) -> tuple[RelationSchema, list[TableRow]]:
    try:
        name = block["relation"]
        rows = block["rows"]
    except (KeyError, TypeError):
        raise SchemaMismatch("table block needs 'relation' and 'rows'") from None
    if "attrs" in block:
        attrs = tuple((a["name"], a["type"]) for a in block["attrs"])
        rel = RelationSchema(name, attrs, EXTENSIONAL)
        if schema is not None and name in schema and schema[name].types != rel.types:
            raise SchemaMismatch(f"table attrs for {name} disagree with the schema")
    elif schema is not None:
        rel = schema[name]
    else:
        raise SchemaMismatch(f"table block {name} has no 'attrs' and no schema was given")
    out = []
    for i, row in enumerate(rows):
        cells = []
        for c in row.get("cells", ()):
            if "dist" in c:
                cells.append(Cell.of_dist(c["dist"], **c.get("params", {})))
            elif "const" in c:
                cells.append(Cell.const(c["const"]))
            else:
                raise SchemaMismatch(f"{name} row {i}: a cell needs 'const' or 'dist'")
        out.append(TableRow(tuple(cells), row.get("exists_p", 1.0)))
    return rel, out


def table_from_json(data, schema: Schema | None = None) -> ProbTable:
    """One table block or a list of blocks; see docs/formats.md."""
    blocks = data if isinstance(data, list) else [data]
    rels, rows = [], {}
    for b in blocks:
        rel, rs = _table_block(b, schema)
        if rel.name in rows:
            rows[rel.name] += tuple(rs)
        else:
            rels.append(rel)
            rows[rel.name] = tuple(rs)
    return ProbTable(Schema(tuple(rels)), rows)


def load_table(path: str | Path, schema: Schema | None = None) -> ProbTable:
    return table_from_json(read_json(path), schema)


def world_record(index: int, status: str, instance: Instance, reason: str | None = None) -> dict:
    rec = {"world": index, "status": status, "facts": facts_to_json(instance)}
    if reason:
        rec["reason"] = reason
    return rec


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False, allow_nan=False)


__all__ = [
    "BAG", "SET", "Fact", "dumps", "facts_to_json", "instance_from_json", "instance_to_json",
    "load_edb", "load_schema", "load_table", "read_json", "read_text", "table_from_json",
    "world_record",
]
