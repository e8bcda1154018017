"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 estimation
impossible (every world censored, too few effective worlds, or a
deterministic fixpoint that did not finish within the budget).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .chase import DEFAULT_BUDGET, make_policy, run_deterministic_datalog
from .errors import ChaseCensored, EstimationError, GDatalogError
from .events import parse_event
from .io import dumps, facts_to_json, load_edb, load_schema, load_table, read_text, world_record
from .pdb import (
    ComposedSource,
    GenerativeSource,
    TableSource,
    estimate_event,
    estimate_group_moments,
    sample_world,
)
from .program import CheckedProgram, parse_program, validate_program
from .query import eval_query, parse_query
from .schema import Schema

FORMAT_VERSION = 1
DEFAULT_SEED = 0

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_ESTIMATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _confidence(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return v


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gdatalog", description="Generative Datalog over probabilistic databases.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, source=False, sampling=False):
        p.add_argument("--schema", help="schema JSON file")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=("json", "text"), default="json")
        if source:
            p.add_argument("--program", help="GDatalog program file")
            p.add_argument("--edb", help="extensional instance (JSON, or CSV named after its relation)")
            p.add_argument("--table", help="probabilistic table JSON file")
            p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET,
                           help="maximum rule firings per world")
            p.add_argument("--policy", choices=("first", "last", "shuffled"), default="first")
        if sampling:
            p.add_argument("--samples", "-n", type=_positive, default=1000)
            p.add_argument("--seed", type=_seed, default=DEFAULT_SEED)

    p = sub.add_parser("check", help="parse and validate a program")
    common(p)
    p.add_argument("--program", required=True)

    p = sub.add_parser("sample", help="write sampled worlds as JSON lines")
    common(p, source=True, sampling=True)
    p.add_argument("--trace", action="store_true", help="write one JSON line per rule firing to stderr")

    p = sub.add_parser("estimate", help="estimate an event probability or per-group moments")
    common(p, source=True, sampling=True)
    p.add_argument("--query", help="query file applied to every world")
    p.add_argument("--event", help="event file")
    p.add_argument("--group-by", help="comma-separated group attributes (moments mode)")
    p.add_argument("--value", help="numeric attribute whose moments are estimated")
    p.add_argument("--confidence", type=_confidence, default=0.95)
    p.add_argument("--workers", type=_positive, default=1)

    p = sub.add_parser("query", help="evaluate a query on one instance")
    common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--edb", required=True)

    p = sub.add_parser("datalog", help="deterministic fixpoint of a distribution-free program")
    common(p)
    p.add_argument("--program", required=True)
    p.add_argument("--edb", required=True)
    p.add_argument("--budget", type=_positive, default=DEFAULT_BUDGET * 10)
    return ap


# -- helpers ----------------------------------------------------------------------


def _schema(args) -> Schema | None:
    return load_schema(args.schema) if args.schema else None


def _program(path: str, schema: Schema | None) -> CheckedProgram:
    return validate_program(parse_program(read_text(path), schema), schema)


def _source(args):
    schema = _schema(args)
    if args.table and args.edb:
        raise UsageError("--table and --edb are mutually exclusive")
    if args.program:
        program = _program(args.program, schema)
        policy = make_policy(args.policy, args.seed)
        if args.table:
            table = load_table(args.table, program.schema)
            return ComposedSource(table, program, args.budget, policy)
        if not args.edb:
            raise UsageError("--program needs --edb or --table")
        edb = load_edb(args.edb, program.schema)
        return GenerativeSource(program, edb, args.budget, policy)
    if args.table:
        return TableSource(load_table(args.table, schema))
    raise UsageError("a source needs --table, or --program with --edb or --table")


def _emit(args, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _report(args, obj: dict, text: str) -> None:
    _emit(args, dumps(obj) if args.format == "json" else text)


def _fmt_ci(e: dict) -> str:
    lo, hi = e["ci"]
    return f"{e['point']!r} [{lo!r}, {hi!r}]"


# -- subcommands ------------------------------------------------------------------


def cmd_check(args) -> int:
    program = _program(args.program, _schema(args))
    n_occ = len(program.rules)
    n_sites = program.n_sites
    rels = program.schema.to_json()["relations"]
    obj = {"format_version": FORMAT_VERSION, "command": "check", "ok": True,
           "rule_occurrences": n_occ, "dist_sites": n_sites,
           "deterministic": program.deterministic, "relations": rels}
    lines = [f"ok: {n_occ} rule occurrence{'s' * (n_occ != 1)}, "
             f"{n_sites} distribution site{'s' * (n_sites != 1)}"]
    for r in program.schema.relations:
        attrs = ", ".join(f"{a}: {t}" for a, t in r.attrs)
        lines.append(f"  {r.kind:<12} {r.name}({attrs})")
    _report(args, obj, "\n".join(lines))
    return EXIT_OK


def cmd_sample(args) -> int:
    source = _source(args)
    out = []
    trace = (lambda step: print(dumps(step), file=sys.stderr)) if args.trace else None
    for w in range(args.samples):
        res = sample_world(source, args.seed, w, trace)
        rec = world_record(w, res.status, res.instance, res.reason)
        if args.format == "json":
            out.append(dumps(rec))
        else:
            out.append(f"# world {w}: {res.status}")
            out.extend(str(f) for f in res.instance.sorted_facts())
    _emit(args, "\n".join(out))
    return EXIT_OK


def cmd_estimate(args) -> int:
    source = _source(args)
    view = None
    if args.query:
        view = parse_query(read_text(args.query), source.output_schema)
    base = {"format_version": FORMAT_VERSION, "command": "estimate", "seed": args.seed}
    moments = args.group_by is not None or args.value is not None
    try:
        if moments:
            if view is None or not args.group_by or not args.value:
                raise UsageError("moments mode needs --query, --group-by and --value")
            if args.event:
                raise UsageError("--event cannot be combined with --group-by/--value")
            keys = [k.strip() for k in args.group_by.split(",") if k.strip()]
            groups = estimate_group_moments(source, view, keys, args.value, args.samples, args.seed,
                                            args.confidence, workers=args.workers)
            first = next(iter(groups.values()), None)
            obj = dict(base, kind="moment", n=args.samples, confidence=args.confidence,
                       censored_fraction=first.mean.censored_fraction if first else 0.0,
                       failed_fraction=first.mean.failed_fraction if first else 0.0,
                       groups=[g.to_json() for g in groups.values()])
            lines = [f"n={args.samples} seed={args.seed}"]
            for g in obj["groups"]:
                lines.append(f"group {g['group']}: n_eff={g['mean']['n_effective']} "
                             f"mean={_fmt_ci(g['mean'])} variance={_fmt_ci(g['variance'])}")
            _report(args, obj, "\n".join(lines))
            return EXIT_OK
        if not args.event:
            raise UsageError("estimate needs --event, or --group-by with --value")
        event = parse_event(read_text(args.event))
        est = estimate_event(source, view, event, args.samples, args.seed, args.confidence,
                             workers=args.workers)
    except EstimationError as exc:
        obj = dict(base, error=type(exc).__name__, message=str(exc), n=exc.n,
                   n_effective=exc.n - exc.censored - exc.failed,
                   censored_fraction=exc.censored_fraction, failed_fraction=exc.failed_fraction)
        _report(args, obj, f"{type(exc).__name__}: {exc}")
        return EXIT_ESTIMATION
    obj = dict(base, **est.to_json())
    text = (f"P = {_fmt_ci(obj)} at {args.confidence!r}; n={est.n} n_eff={est.n_effective} "
            f"censored={est.censored_fraction!r} failed={est.failed_fraction!r}")
    if est.censored_fraction > 0:
        text += (f"\npessimistic {_fmt_ci(obj['pessimistic'])}"
                 f"\noptimistic  {_fmt_ci(obj['optimistic'])}")
    _report(args, obj, text)
    return EXIT_OK


def cmd_query(args) -> int:
    schema = _schema(args)
    if schema is None:
        raise UsageError("query needs --schema")
    world = load_edb(args.edb, schema)
    plan = parse_query(read_text(args.query), schema)
    result = eval_query(plan, world)
    obj = {"format_version": FORMAT_VERSION, "command": "query", "relation": plan.name,
           "attrs": [{"name": a, "type": t} for a, t in plan.output.attrs],
           "facts": facts_to_json(result)}
    _report(args, obj, "\n".join(str(f) for f in result.sorted_facts()))
    return EXIT_OK


def cmd_datalog(args) -> int:
    program = _program(args.program, _schema(args))
    edb = load_edb(args.edb, program.schema)
    try:
        result = run_deterministic_datalog(program, edb, args.budget)
    except ChaseCensored as exc:
        obj = {"format_version": FORMAT_VERSION, "command": "datalog", "status": "censored",
               "firings": exc.result.firings}
        _report(args, obj, f"censored after {exc.result.firings} firings")
        return EXIT_ESTIMATION
    obj = {"format_version": FORMAT_VERSION, "command": "datalog", "status": "fixpoint",
           "facts": facts_to_json(result)}
    _report(args, obj, "\n".join(str(f) for f in result.sorted_facts()))
    return EXIT_OK


COMMANDS = {"check": cmd_check, "sample": cmd_sample, "estimate": cmd_estimate,
            "query": cmd_query, "datalog": cmd_datalog}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"error: cannot read {name or 'input'}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON: {exc}", file=sys.stderr)
        return EXIT_IO
    except UnicodeDecodeError as exc:
        print(f"error: input is not UTF-8: {exc}", file=sys.stderr)
        return EXIT_IO
    except (GDatalogError, UsageError, ValueError) as exc:
        print(str(exc) if isinstance(exc, GDatalogError) and str(exc).startswith(type(exc).__name__)
              else f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
