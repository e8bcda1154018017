"""Monte Carlo possible-worlds layer.

Worlds come from one of three sources: an annotated probabilistic table, a
GDatalog program over a fixed extensional instance, or a table whose
sampled worlds feed a program.  Estimators sample ``n`` worlds with indices
``0..n-1``, push each through an optional query and reduce the results in
fixed-size chunks, so the numbers do not depend on the number of workers.

Censored worlds (firing budget exhausted) and failed worlds (runtime
parameter errors) are excluded from conditional estimates and reported as
fractions.  Probability estimates additionally carry pessimistic and
optimistic brackets that count censored worlds as event-false / event-true.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import distributions as D
from . import values as V
from .chase import CENSORED, FAILED, FIXPOINT, DEFAULT_BUDGET, FirstPolicy, Policy, WorldResult, run_chase
from .errors import (
    AllWorldsCensored,
    DuplicateGroupRow,
    SchemaMismatch,
    TooFewWorlds,
    TypeMismatch,
)
from .events import EventExpr, check_event, event_holds
from .instance import BAG, Instance, to_set
from .program import CheckedProgram
from .query import QueryPlan, eval_query, resolve
from .rng import RngStream, cell_key
from .schema import INTENSIONAL, Fact, Schema
from .stats import Moments, wilson_interval, z_value

CHUNK = 2048
MIN_EFFECTIVE = 100


# -- probabilistic tables -------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """A constant, or a distribution with constant parameters."""

    value: object = None
    dist: str | None = None
    params: tuple = ()

    @classmethod
    def const(cls, value) -> "Cell":
        return cls(value=value)

    @classmethod
    def of_dist(cls, name: str, **params) -> "Cell":
        spec = D.get_spec(name)
        return cls(dist=name, params=D.validate_params(spec, params))

    @property
    def is_dist(self) -> bool:
        return self.dist is not None


@dataclass(frozen=True)
class TableRow:
    cells: tuple[Cell, ...]
    exists_p: float = 1.0


@dataclass(frozen=True)
class ProbTable:
    """Rows whose cells and existence flags are all mutually independent."""

    schema: Schema
    rows: Mapping[str, tuple[TableRow, ...]] = field(default_factory=dict)

    def __post_init__(self):
        fixed = {}
        for rel_name, rows in self.rows.items():
            rel = self.schema[rel_name]
            out = []
            for i, row in enumerate(rows):
                if not 0.0 < row.exists_p <= 1.0:
                    raise SchemaMismatch(f"{rel_name} row {i}: exists_p must lie in (0, 1]")
                if len(row.cells) != rel.arity:
                    raise SchemaMismatch(
                        f"{rel_name} row {i}: {len(row.cells)} cells for arity {rel.arity}")
                cells = []
                for j, (cell, (attr, typ)) in enumerate(zip(row.cells, rel.attrs)):
                    if cell.is_dist:
                        st = D.support_type(cell.dist, cell.params)
                        if not V.assignable(st, typ):
                            raise TypeMismatch(
                                f"{rel_name} row {i} {attr}: {cell.dist} yields {st}, attribute is {typ}")
                        cells.append(cell)
                    else:
                        try:
                            cells.append(Cell(V.coerce(cell.value, typ)))
                        except TypeMismatch as exc:
                            raise TypeMismatch(f"{rel_name} row {i} {attr}: {exc}") from None
                out.append(TableRow(tuple(cells), float(row.exists_p)))
            fixed[rel_name] = tuple(out)
        object.__setattr__(self, "rows", fixed)

    def sample(self, global_seed: int, world_index: int) -> Instance:
        facts = []
        for rel in self.schema.relations:
            types = rel.types
            for i, row in enumerate(self.rows.get(rel.name, ())):
                if row.exists_p < 1.0:
                    u = RngStream(cell_key(global_seed, world_index, rel.name, i, -1)).uniform()
                    if not u < row.exists_p:
                        continue
                vals = []
                for j, cell in enumerate(row.cells):
                    if cell.is_dist:
                        spec = D.DISTRIBUTIONS[cell.dist]
                        x = D.sample_checked(
                            spec, cell.params,
                            RngStream(cell_key(global_seed, world_index, rel.name, i, j)))
                        if types[j] == V.REAL and type(x) is int:
                            x = float(x)
                        vals.append(x)
                    else:
                        vals.append(cell.value)
                facts.append(Fact(rel.name, tuple(vals)))
        return Instance(self.schema, facts, BAG)


# -- world sources ----------------------------------------------------------------


@dataclass(frozen=True)
class TableSource:
    table: ProbTable

    @property
    def output_schema(self) -> Schema:
        return self.table.schema

    def sample(self, global_seed: int, world_index: int, trace=None) -> WorldResult:
        return WorldResult(self.table.sample(global_seed, world_index), FIXPOINT, 0)


@dataclass(frozen=True)
class GenerativeSource:
    program: CheckedProgram
    edb: Instance
    budget: int = DEFAULT_BUDGET
    policy: Policy = field(default_factory=FirstPolicy)

    def __post_init__(self):
        from .chase import _check_edb

        _check_edb(self.program, self.edb)
        object.__setattr__(self, "edb", to_set(self.edb))

    @property
    def output_schema(self) -> Schema:
        return self.program.schema.restrict(INTENSIONAL)

    def sample(self, global_seed: int, world_index: int, trace=None) -> WorldResult:
        return run_chase(self.program, self.edb, global_seed, world_index, self.budget,
                         self.policy, trace)


@dataclass(frozen=True)
class ComposedSource:
    """Sample the table, coerce the world to a set, then run the program on it."""

    table: ProbTable
    program: CheckedProgram
    budget: int = DEFAULT_BUDGET
    policy: Policy = field(default_factory=FirstPolicy)

    def __post_init__(self):
        ext = self.program.extensional
        for rel in self.table.schema.relations:
            if rel.name not in ext:
                raise SchemaMismatch(f"table relation {rel.name} is not extensional in the program")
            if self.program.schema[rel.name].types != rel.types:
                raise SchemaMismatch(f"table relation {rel.name} disagrees with the program schema")

    @property
    def output_schema(self) -> Schema:
        return self.program.schema.restrict(INTENSIONAL)

    def sample(self, global_seed: int, world_index: int, trace=None) -> WorldResult:
        edb = to_set(self.table.sample(global_seed, world_index))
        return run_chase(self.program, edb, global_seed, world_index, self.budget, self.policy,
                         trace)


WorldSource = TableSource | GenerativeSource | ComposedSource


def sample_world(source: WorldSource, global_seed: int, world_index: int,
                 trace=None) -> WorldResult:
    """Deterministic in (source, seed, index); ``trace`` receives chase steps."""
    return source.sample(global_seed, world_index, trace)


def view_schema(source: WorldSource, view: QueryPlan | None) -> Schema:
    if view is None:
        return source.output_schema
    have = source.output_schema
    for rel, types in view.input_relations().items():
        r = have.get(rel)
        if r is None or r.types != types:
            raise SchemaMismatch(f"query reads {rel}{list(types)}, which the source does not produce")
    return view.output_schema


# -- estimates ---------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    kind: str  # "probability" | "moment"
    point: float
    ci_low: float
    ci_high: float
    n: int
    n_effective: int
    censored_fraction: float
    failed_fraction: float
    bounds_mode: str = "conditional"
    confidence: float = 0.95
    pessimistic: "Estimate | None" = None
    optimistic: "Estimate | None" = None

    @property
    def ci(self) -> tuple[float, float]:
        return (self.ci_low, self.ci_high)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "bounds_mode": self.bounds_mode,
            "point": self.point,
            "ci": [self.ci_low, self.ci_high],
            "confidence": self.confidence,
            "n": self.n,
            "n_effective": self.n_effective,
            "censored_fraction": self.censored_fraction,
            "failed_fraction": self.failed_fraction,
        }
        if self.pessimistic is not None:
            out["pessimistic"] = self.pessimistic.to_json()
        if self.optimistic is not None:
            out["optimistic"] = self.optimistic.to_json()
        return out


@dataclass(frozen=True)
class GroupMoments:
    key: tuple
    mean: Estimate
    variance: Estimate

    def to_json(self) -> dict:
        return {"group": list(self.key), "mean": self.mean.to_json(),
                "variance": self.variance.to_json()}


# chunk workers read the job from this module global; set before forking
_JOB: tuple | None = None


def _run_chunks(job: tuple, chunk_fn, n: int, workers: int) -> list:
    global _JOB
    starts = list(range(0, n, CHUNK))
    ranges = [(s, min(n, s + CHUNK)) for s in starts]
    if workers <= 1 or len(ranges) <= 1:
        return [chunk_fn(job, lo, hi) for lo, hi in ranges]
    _JOB = job
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, len(ranges))) as pool:
            return pool.starmap(_forked, [(chunk_fn, lo, hi) for lo, hi in ranges])
    finally:
        _JOB = None


def _forked(chunk_fn, lo, hi):
    return chunk_fn(_JOB, lo, hi)


def _event_chunk(job, lo: int, hi: int) -> tuple[int, int, int]:
    source, view, event, seed = job
    k = censored = failed = 0
    for w in range(lo, hi):
        res = source.sample(seed, w)
        if res.status == CENSORED:
            censored += 1
            continue
        if res.status == FAILED:
            failed += 1
            continue
        world = res.instance if view is None else eval_query(view, res.instance)
        if event_holds(world, event):
            k += 1
    return k, censored, failed


def _require_effective(n: int, n_eff: int, censored: int, failed: int, minimum: int) -> None:
    if n_eff == 0 and censored > 0:
        raise AllWorldsCensored(
            f"all {censored} non-failed worlds of {n} were censored", n=n, censored=censored,
            failed=failed)
    if n_eff < minimum:
        raise TooFewWorlds(
            f"only {n_eff} of {n} worlds reached fixpoint; at least {minimum} are required",
            n=n, censored=censored, failed=failed)


def estimate_event(source: WorldSource, view: QueryPlan | None, event: EventExpr, n: int,
                   global_seed: int = 0, confidence: float = 0.95, *,
                   min_effective: int = MIN_EFFECTIVE, workers: int = 1) -> Estimate:
    """Estimate P(event holds on view(world)) from worlds ``0..n-1``."""
    if n < 1:
        raise ValueError("n must be positive")
    z_value(confidence)
    check_event(event, view_schema(source, view))
    chunks = _run_chunks((source, view, event, global_seed), _event_chunk, n, workers)
    k = sum(c[0] for c in chunks)
    censored = sum(c[1] for c in chunks)
    failed = sum(c[2] for c in chunks)
    n_eff = n - censored - failed
    _require_effective(n, n_eff, censored, failed, min_effective)
    cf, ff = censored / n, failed / n

    def est(successes, trials, mode, **extra):
        lo, hi = wilson_interval(successes, trials, confidence)
        return Estimate("probability", successes / trials, lo, hi, n, trials, cf, ff, mode,
                        confidence, **extra)

    m = n_eff + censored
    return est(k, n_eff, "conditional",
               pessimistic=est(k, m, "pessimistic-low"),
               optimistic=est(k + censored, m, "optimistic-high"))


def _moment_chunk(job, lo: int, hi: int):
    source, view, gidx, vidx, seed = job
    acc: dict[tuple, Moments] = {}
    censored = failed = 0
    for w in range(lo, hi):
        res = source.sample(seed, w)
        if res.status == CENSORED:
            censored += 1
            continue
        if res.status == FAILED:
            failed += 1
            continue
        out = eval_query(view, res.instance)
        seen = set()
        for row in out.rows(view.name):
            key = tuple(row[i] for i in gidx)
            if key in seen:
                raise DuplicateGroupRow(f"world {w} has several rows for group {key}")
            seen.add(key)
            m = acc.get(key)
            if m is None:
                m = acc[key] = Moments()
            m.add(float(row[vidx]))
    return acc, censored, failed


def estimate_group_moments(source: WorldSource, view: QueryPlan, group_key: Sequence[str],
                           value_attr: str, n: int, global_seed: int = 0,
                           confidence: float = 0.95, *, min_effective: int = MIN_EFFECTIVE,
                           workers: int = 1) -> dict[tuple, GroupMoments]:
    """Per-group sample mean and unbiased variance of ``value_attr``.

    Each world may contribute at most one row per group.  Groups seen in
    fewer than two worlds are omitted.
    """
    if n < 1:
        raise ValueError("n must be positive")
    view_schema(source, view)
    cols = view.root.columns
    gidx = tuple(resolve(cols, g) for g in group_key)
    vidx = resolve(cols, value_attr)
    if cols[vidx].type not in V.NUMERIC:
        raise TypeMismatch(f"value attribute {value_attr} is not numeric")
    chunks = _run_chunks((source, view, gidx, vidx, global_seed), _moment_chunk, n, workers)
    censored = sum(c[1] for c in chunks)
    failed = sum(c[2] for c in chunks)
    n_eff = n - censored - failed
    _require_effective(n, n_eff, censored, failed, min_effective)
    total: dict[tuple, Moments] = {}
    for acc, _, _ in chunks:
        for key, m in acc.items():
            total[key] = total.get(key, Moments()).merge(m)
    z = z_value(confidence)
    cf, ff = censored / n, failed / n
    out = {}
    for key in sorted(total, key=lambda k: tuple(V.encode(v) for v in k)):
        m = total[key]
        if m.n < 2:
            continue
        var = m.variance
        half_mean = z * math.sqrt(var / m.n)
        half_var = z * var * math.sqrt(2.0 / (m.n - 1))
        out[key] = GroupMoments(
            key,
            Estimate("moment", m.mean, m.mean - half_mean, m.mean + half_mean, n, m.n, cf, ff,
                     confidence=confidence),
            Estimate("moment", var, max(0.0, var - half_var), var + half_var, n, m.n, cf, ff,
                     confidence=confidence),
        )
    return out


def worlds(source: WorldSource, n: int, global_seed: int = 0) -> Iterable[WorldResult]:
    for w in range(n):
        yield source.sample(global_seed, w)


__all__ = [
    "Cell", "ComposedSource", "Estimate", "GenerativeSource", "GroupMoments", "ProbTable",
    "TableRow", "TableSource", "WorldSource", "estimate_event", "estimate_group_moments",
    "sample_world", "view_schema", "wilson_interval", "worlds",
]
