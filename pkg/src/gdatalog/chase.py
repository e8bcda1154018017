"""Chase evaluation of GDatalog programs.

A firing key is a rule occurrence plus the values of its head variables.
Each key fires at most once per run.  Every value a firing samples is drawn
from a stream keyed by ``(seed, world, head signature, site)``, so the
world produced by a run is independent of the order in which keys fire:
scheduling policies only change the path to the fixpoint, never the result.

Applicable keys are maintained incrementally: inserting a fact enumerates
exactly the body matches that use it.  :func:`applicable_keys` recomputes
them from scratch and is the reference the incremental path is tested
against.
"""

from __future__ import annotations

import bisect
import hashlib
import weakref
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .errors import (
    ChaseCensored,
    EDBSchemaMismatch,
    GDatalogError,
    NondeterministicProgram,
    RuntimeParamError,
)
from .instance import SET, Instance, check_facts
from .program import CheckedProgram, CompiledRule, signature_bytes
from .rng import RngStream, site_key, u64
from .schema import Fact

RUNNING = "running"
FIXPOINT = "fixpoint"
CENSORED = "censored"
FAILED = "failed"

DEFAULT_BUDGET = 1_000_000


class FiringKey(NamedTuple):
    occurrence_id: int
    head_sig: bytes


# -- policies -----------------------------------------------------------------


class Policy:
    """Chooses the next key to fire.

    ``choose`` receives the applicable keys sorted by (occurrence id, head
    signature) and the number of firings so far, and must return one of them.
    """

    name = "custom"

    def choose(self, keys: Sequence[FiringKey], firings: int) -> FiringKey:
        raise NotImplementedError


class RankPolicy(Policy):
    """Policy that always picks the key of least (or greatest) rank."""

    take_last = False

    def rank(self, key: FiringKey):
        return key

    def choose(self, keys, firings):
        pick = max if self.take_last else min
        return pick(keys, key=self.rank)


class FirstPolicy(RankPolicy):
    name = "first"


class LastPolicy(RankPolicy):
    name = "last"
    take_last = True


class ShuffledPolicy(RankPolicy):
    """Visits keys in a seeded pseudo-random order (hash of seed and key)."""

    name = "shuffled"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._prefix = u64(seed)

    def rank(self, key):
        h = hashlib.blake2b(self._prefix + key.head_sig, digest_size=8).digest()
        return (h, key)

    def __repr__(self):
        return f"ShuffledPolicy(seed={self.seed})"


def make_policy(name: str, seed: int = 0) -> Policy:
    if name == "first":
        return FirstPolicy()
    if name == "last":
        return LastPolicy()
    if name == "shuffled":
        return ShuffledPolicy(seed)
    raise ValueError(f"unknown policy {name!r} (expected first, last or shuffled)")


# -- compiled join plans -------------------------------------------------------


class _Step(NamedTuple):
    relation: str
    lookup: tuple[int, ...]  # positions used as index key
    key_spec: tuple  # per lookup position: (is_var, var_index or constant)
    binds: tuple  # (position, var_index) for first occurrences of free variables
    checks: tuple  # (position, var_index) for repeated free variables in the atom


class _Trigger(NamedTuple):
    rule: CompiledRule
    unify: tuple  # per position of the seed atom: (is_var, var_index or constant)
    steps: tuple[_Step, ...]


def _plan_steps(rule: CompiledRule, skip: int | None, bound: set[int]) -> tuple[_Step, ...]:
    bound = set(bound)
    steps = []
    remaining = [i for i in range(len(rule.body)) if i != skip]
    while remaining:
        # most-constrained atom first; ties broken by body order
        best = max(remaining, key=lambda i: (
            sum(1 for is_var, x in rule.body[i][1] if not is_var or x in bound), -i))
        remaining.remove(best)
        rel, args = rule.body[best]
        lookup, key_spec, binds, checks = [], [], [], []
        seen_here: set[int] = set()
        for pos, (is_var, x) in enumerate(args):
            if not is_var or x in bound:
                lookup.append(pos)
                key_spec.append((is_var, x))
            elif x in seen_here:
                checks.append((pos, x))
            else:
                seen_here.add(x)
                binds.append((pos, x))
        bound |= seen_here
        steps.append(_Step(rel, tuple(lookup), tuple(key_spec), tuple(binds), tuple(checks)))
    return tuple(steps)


@dataclass
class _Plans:
    triggers: dict[str, list[_Trigger]]
    empty_body: list[CompiledRule]


_PLAN_CACHE: "weakref.WeakKeyDictionary[CheckedProgram, _Plans]" = weakref.WeakKeyDictionary()


def _plans(program: CheckedProgram) -> _Plans:
    plans = _PLAN_CACHE.get(program)
    if plans is None:
        triggers: dict[str, list[_Trigger]] = {}
        empty = []
        for rule in program.rules:
            if not rule.body:
                empty.append(rule)
            for i, (rel, args) in enumerate(rule.body):
                bound = {x for is_var, x in args if is_var}
                triggers.setdefault(rel, []).append(
                    _Trigger(rule, args, _plan_steps(rule, i, bound)))
        plans = _Plans(triggers, empty)
        _PLAN_CACHE[program] = plans
    return plans


# -- state --------------------------------------------------------------------


class _SiteStreams:
    __slots__ = ("seed", "world", "sig")

    def __init__(self, seed: int, world: int, sig: bytes):
        self.seed = seed
        self.world = world
        self.sig = sig

    def stream(self, site: int) -> RngStream:
        return RngStream(site_key(self.seed, self.world, self.sig, site))


class ChaseState:
    """Mutable state of one chase run; owned by a single worker."""

    def __init__(self, program: CheckedProgram, edb: Instance, global_seed: int = 0,
                 world_index: int = 0, policy: Policy | None = None):
        _check_edb(program, edb)
        self.program = program
        self.global_seed = global_seed
        self.world_index = world_index
        self.relations: dict[str, set[tuple]] = {r.name: set() for r in program.schema.relations}
        self._indexes: dict[str, list[tuple[tuple[int, ...], dict]]] = {}
        self.fired: set[FiringKey] = set()
        self.pending: dict[FiringKey, tuple] = {}
        self.firings = 0
        self.status = RUNNING
        self.reason: str | None = None
        self._plans = _plans(program)
        self._policy = policy if policy is not None else FirstPolicy()
        self._ranked = isinstance(self._policy, RankPolicy)
        self._order: list = []  # (rank, key) sorted, only for RankPolicy
        for rule in self._plans.empty_body:
            self._offer(rule, ())
        for f in edb.support():
            self.insert(f.relation, f.values)

    # instance access

    @property
    def instance(self) -> Instance:
        return Instance(self.program.schema,
                        [Fact(r, v) for r, rows in self.relations.items() for v in rows], SET)

    def idb(self) -> Instance:
        idb = self.program.intensional
        schema = self.program.schema.restrict("intensional")
        return Instance(schema, [Fact(r, v) for r in idb for v in self.relations[r]], SET)

    def _index(self, rel: str, positions: tuple[int, ...]) -> dict:
        for pos, idx in self._indexes.get(rel, ()):
            if pos == positions:
                return idx
        idx: dict = {}
        for row in self.relations[rel]:
            idx.setdefault(tuple(row[p] for p in positions), []).append(row)
        self._indexes.setdefault(rel, []).append((positions, idx))
        return idx

    def insert(self, rel: str, row: tuple) -> bool:
        """Add a fact; returns False when it was already present."""
        rows = self.relations[rel]
        if row in rows:
            return False
        rows.add(row)
        for positions, idx in self._indexes.get(rel, ()):
            idx.setdefault(tuple(row[p] for p in positions), []).append(row)
        for trig in self._plans.triggers.get(rel, ()):
            binding = [None] * trig.rule.n_vars
            ok = True
            for (is_var, x), v in zip(trig.unify, row):
                if is_var:
                    cur = binding[x]
                    if cur is None:
                        binding[x] = v
                    elif cur != v:
                        ok = False
                        break
                elif x != v:
                    ok = False
                    break
            if ok:
                self._join(trig.rule, trig.steps, 0, binding)
        return True

    def _join(self, rule: CompiledRule, steps, k: int, binding: list) -> None:
        if k == len(steps):
            self._offer(rule, tuple(binding[i] for i in rule.head_var_idx))
            return
        step = steps[k]
        if step.lookup:
            key = tuple(binding[x] if is_var else x for is_var, x in step.key_spec)
            candidates = self._index(step.relation, step.lookup).get(key, ())
        else:
            candidates = self.relations[step.relation]
        binds, checks = step.binds, step.checks
        for row in candidates:
            for pos, x in binds:
                binding[x] = row[pos]
            if checks and any(row[pos] != binding[x] for pos, x in checks):
                continue
            self._join(rule, steps, k + 1, binding)
        for _, x in binds:
            binding[x] = None

    def _offer(self, rule: CompiledRule, hv: tuple) -> None:
        key = FiringKey(rule.occurrence_id, signature_bytes(rule.occurrence_id, hv))
        if key in self.fired or key in self.pending:
            return
        self.pending[key] = hv
        if self._ranked:
            bisect.insort(self._order, (self._policy.rank(key), key))

    # scheduling

    def applicable(self) -> list[FiringKey]:
        return sorted(self.pending)

    def next_key(self) -> FiringKey:
        if self._ranked:
            item = self._order.pop() if self._policy.take_last else self._order.pop(0)
            return item[1]
        key = self._policy.choose(self.applicable(), self.firings)
        if key not in self.pending:
            raise ValueError(f"policy returned a key that is not applicable: {key}")
        return key

    def fire(self, key: FiringKey, world_ctx: tuple[int, int] | None = None, trace=None) -> Fact | None:
        try:
            hv = self.pending.pop(key)
        except KeyError:
            raise ValueError(f"key {key} is not applicable") from None
        if self._ranked:
            item = (self._policy.rank(key), key)
            i = bisect.bisect_left(self._order, item)
            if i < len(self._order) and self._order[i] == item:
                del self._order[i]
        assert key not in self.fired, "firing key used twice"
        self.fired.add(key)
        self.firings += 1
        seed, world = world_ctx if world_ctx is not None else (self.global_seed, self.world_index)
        rule = self.program.rules[key.occurrence_id]
        ctx = _SiteStreams(seed, world, key.head_sig)
        try:
            row = tuple(t(hv, ctx) for t in rule.head_terms)
        except GDatalogError as exc:
            self.status = FAILED
            self.reason = f"{type(exc).__name__}: {exc} (rule {rule.occurrence_id}: {rule.rule})"
            return None
        new = self.insert(rule.head_relation, row)
        fact = Fact(rule.head_relation, row)
        if trace is not None:
            trace({"world": world, "step": self.firings, "occurrence_id": key.occurrence_id,
                   "head_sig": key.head_sig.hex(), "fact": str(fact), "new": new})
        return fact


def _check_edb(program: CheckedProgram, edb: Instance) -> None:
    ext = program.extensional
    for f in edb.support():
        if f.relation not in ext:
            raise EDBSchemaMismatch(
                f"EDB fact {f} is not over an extensional relation of the program")
    try:
        check_facts(edb, program.schema)
    except GDatalogError as exc:
        raise EDBSchemaMismatch(str(exc)) from None


# -- public operations ---------------------------------------------------------


@dataclass(frozen=True)
class WorldResult:
    instance: Instance
    status: str
    firings: int
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == FIXPOINT


def applicable_keys(state: ChaseState, program: CheckedProgram | None = None) -> list[FiringKey]:
    """All unfired keys with a body match in the current instance, recomputed naively."""
    program = program or state.program
    rels = state.relations
    out: set[FiringKey] = set()
    for rule in program.rules:
        for binding in _naive_matches(rule.body, rels, {}):
            hv = tuple(binding[i] for i in rule.head_var_idx)
            key = FiringKey(rule.occurrence_id, signature_bytes(rule.occurrence_id, hv))
            if key not in state.fired:
                out.add(key)
    return sorted(out)


def _naive_matches(body, rels, binding: dict):
    if not body:
        yield binding
        return
    rel, args = body[0]
    for row in list(rels.get(rel, ())):
        b = dict(binding)
        ok = True
        for (is_var, x), v in zip(args, row):
            if is_var:
                if x in b and b[x] != v:
                    ok = False
                    break
                b[x] = v
            elif x != v:
                ok = False
                break
        if ok:
            yield from _naive_matches(body[1:], rels, b)


def fire(state: ChaseState, key: FiringKey, program: CheckedProgram | None = None,
         world_ctx: tuple[int, int] | None = None) -> ChaseState:
    state.fire(key, world_ctx)
    return state


def run_chase(program: CheckedProgram, edb: Instance, global_seed: int = 0, world_index: int = 0,
              budget: int = DEFAULT_BUDGET, policy: Policy | None = None,
              trace: Callable[[dict], None] | None = None) -> WorldResult:
    """Fire applicable keys until fixpoint, failure or ``budget`` firings."""
    if budget < 1:
        raise ValueError("budget must be positive")
    state = ChaseState(program, edb, global_seed, world_index, policy)
    pending = state.pending
    while True:
        if not pending:
            state.status = FIXPOINT
            break
        if state.firings >= budget:
            state.status = CENSORED
            break
        state.fire(state.next_key(), trace=trace)
        if state.status == FAILED:
            break
    return WorldResult(state.idb(), state.status, state.firings, state.reason)


def run_deterministic_datalog(program: CheckedProgram, edb: Instance,
                              budget: int = DEFAULT_BUDGET * 10) -> Instance:
    """Least fixpoint of a distribution-free program (intensional part).

    Raises ChaseCensored if ``budget`` firings do not reach the fixpoint.
    """
    if not program.deterministic:
        raise NondeterministicProgram("program contains distribution terms")
    result = run_chase(program, edb, 0, 0, budget, FirstPolicy())
    if result.status == CENSORED:
        raise ChaseCensored(result)
    if result.status == FAILED:
        raise RuntimeParamError(result.reason)
    return result.instance


__all__ = [
    "CENSORED", "FAILED", "FIXPOINT", "ChaseState", "FiringKey", "FirstPolicy", "LastPolicy",
    "Policy", "RankPolicy", "ShuffledPolicy", "WorldResult", "applicable_keys", "fire",
    "make_policy", "run_chase", "run_deterministic_datalog",
]

