"""
``fixlab`` command line.

Exit codes: 0 solved and verified, 2 input or usage error, 3 verification
failure, 4 evaluation budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import statistics
import sys
from pathlib import Path

from fixlab import lattice as L
from fixlab.api import SOLVERS, run_solver, verify_run
from fixlab.eqsys import AnalysisError, EquationSystem, EvalError, Kind, ParseError, Unknown, parse_system, serialize_system
from fixlab.frontend import DemandStrategy, ProgramError, build_equations, parse_program
from fixlab.solvers.common import BudgetExceeded, Solution, SolverConfig
from fixlab.synthetic import SCALING_FIXTURE, generate_synthetic
from fixlab.verify import compare_precision

VERSION = "0.1.0"
EXIT_OK, EXIT_INPUT, EXIT_UNVERIFIED, EXIT_BUDGET = 0, 2, 3, 4
BENCH_FIELDS = [
    "file", "solver", "workers", "demand", "run_index", "wall_time_ms",
    "verified", "rhs_evaluations", "retry_ratio", "speedup",
]


class InputError(Exception):
    """Bad input file or argument; maps to exit code 2."""


def default_workers() -> int:
    raw = os.environ.get("FIXLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"FIXLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("FIXLAB_THREADS must be >= 1")
    return n


def _positive(s: str) -> int:
    try:
        n = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _int_list(s: str) -> list[int]:
    return [_positive(x) for x in s.split(",") if x]


def system_id(system: EquationSystem) -> str:
    """Fingerprint of the unknown universe; equal for all demand strategies of one program."""
    text = "\n".join(sorted(f"{u.label}:{u.kind.value}" for u in system.unknowns))
    return hashlib.sha256(f"{system.lattice}\n{text}".encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# loading inputs
# --------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def load_system(path: str, demand: str | None = None) -> EquationSystem:
    text = _read(path)
    try:
        if path.endswith(".toy"):
            return build_equations(parse_program(text), demand or "threads")
        return parse_system(text)
    except (ParseError, ProgramError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None


# --------------------------------------------------------------------------
# result envelopes
# --------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, float) and v != v:
        return None
    return v


def envelope(command: str, path: str, system: EquationSystem, sol: Solution, args) -> dict:
    verification = verify_run(system, sol)
    vjson = verification.to_json()
    report = getattr(sol, "fixpoint_report", None)
    if report is not None:
        vjson["fixpoint_report"] = report.labels
    stats = {k: _jsonable(v) for k, v in sol.stats.items() if k != "fixpoint_report"}
    stats["termination"] = dict(sol.termination)
    stats["verification"] = {"ok": verification.ok, "violations": len(verification.violations)}
    return {
        "meta": {
            "tool": "fixlab",
            "version": VERSION,
            "command": command,
            "input": str(path),
            "solver": args.solver,
            "workers": args.workers,
            "seed": args.seed,
            "demand": getattr(args, "demand", None),
            "widen_delay": args.widen_delay,
            "budget": args.budget,
            "lattice": system.lattice,
            "system_id": system_id(system),
            "roots": [u.label for u in system.default_roots()],
        },
        "solution": {
            u.label: {
                "kind": u.kind.value,
                "lattice": L.kind_of(v),
                "value": L.format_value(v),
            }
            for u, v in sorted(sol.values.items(), key=lambda kv: kv[0].label)
        },
        "stats": stats,
        "verification": vjson,
    }


def _print_text(env: dict, out):
    for label, entry in env["solution"].items():
        print(f"{label} = {entry['value']}", file=out)
    st = env["stats"]
    print(
        f"# solver={env['meta']['solver']} workers={env['meta']['workers']} "
        f"rhs_evaluations={st['rhs_evaluations']} unknowns={st['unknowns_reached']} "
        f"wall_time_ms={st['wall_time_ms']:.2f}",
        file=out,
    )
    v = env["verification"]
    print(f"# verified={'yes' if v['ok'] else 'no'} violations={len(v['violations'])}", file=out)
    for viol in v["violations"]:
        print(f"#   {viol['kind']} at {viol['unknown']} (from {viol['source']})", file=out)
    if v.get("fixpoint_report"):
        print(f"# merged non-fixpoint at: {', '.join(v['fixpoint_report'])}", file=out)


def _config(args) -> SolverConfig:
    return SolverConfig(
        widen_delay=args.widen_delay,
        eval_budget=args.budget,
        seed=args.seed,
        demand_strategy=getattr(args, "demand", None) or "threads",
    )


def _run_and_report(command: str, args, system: EquationSystem, out) -> int:
    sol = run_solver(system, args.solver, args.workers, _config(args))
    env = envelope(command, args.file, system, sol, args)
    if args.out == "json":
        json.dump(env, out, indent=2)
        out.write("\n")
    else:
        _print_text(env, out)
    return EXIT_OK if env["verification"]["ok"] else EXIT_UNVERIFIED


def cmd_solve(args, out) -> int:
    return _run_and_report("solve", args, load_system(args.file), out)


def cmd_analyze(args, out) -> int:
    if not args.file.endswith(".toy"):
        # accept any extension, but always read it as a program
        try:
            system = build_equations(parse_program(_read(args.file)), args.demand)
        except (ProgramError, ValueError) as e:
            raise InputError(f"{args.file}: {e}") from None
    else:
        system = load_system(args.file, args.demand)
    return _run_and_report("analyze", args, system, out)


# --------------------------------------------------------------------------
# compare
# --------------------------------------------------------------------------


def load_envelope(path: str) -> dict:
    try:
        env = json.loads(_read(path))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not JSON ({e})") from None
    if not isinstance(env, dict) or not {"meta", "solution"} <= env.keys():
        raise InputError(f"{path}: not a fixlab result envelope")
    return env


def envelope_values(env: dict) -> dict[Unknown, L.LatticeValue]:
    out = {}
    for label, entry in env["solution"].items():
        try:
            value = L.parse_value(entry["value"], entry["lattice"])
            kind = Kind(entry["kind"])
        except (L.ValueSyntaxError, ValueError, KeyError) as e:
            raise InputError(f"bad solution entry {label}: {e}") from None
        out[Unknown(label, kind)] = value
    return out


def cmd_compare(args, out) -> int:
    a, b = load_envelope(args.base), load_envelope(args.other)
    ida, idb = a["meta"].get("system_id"), b["meta"].get("system_id")
    if ida != idb:
        raise InputError(f"results are for different systems ({ida} vs {idb})")
    try:
        rep = compare_precision(envelope_values(a), envelope_values(b))
    except L.DomainError as e:
        raise InputError(f"incompatible values: {e}") from None
    result = {
        "meta": {"tool": "fixlab", "version": VERSION, "command": "compare",
                 "base": args.base, "other": args.other, "system_id": ida},
        "precision": rep.to_json(detail=args.detail),
    }
    if args.out == "json":
        json.dump(result, out, indent=2)
        out.write("\n")
        return EXIT_OK
    print(f"compared {rep.total} unknowns ({args.other} relative to {args.base})", file=out)
    for cls in ("equal", "more_precise", "less_precise", "incomparable"):
        print(f"{cls:>13}: {getattr(rep, cls):6d}  {rep.fraction(cls):.4f}", file=out)
    if args.detail:
        for label, base, other, cls in rep.details:
            if cls != "equal":
                print(f"  {label}: {base} -> {other} ({cls})", file=out)
    return EXIT_OK


# --------------------------------------------------------------------------
# bench
# --------------------------------------------------------------------------


def _suite(spec: str) -> list[tuple[str, object]]:
    """(name, path-or-system) pairs; ``builtin:scaling`` is the scaling fixture."""
    if spec == "builtin:scaling":
        return [("builtin:scaling", generate_synthetic(seed=0, **SCALING_FIXTURE))]
    if spec == "builtin:corpus":
        from fixlab.corpus import corpus

        return [(f"builtin:{it.name}", it) for it in corpus()]
    p = Path(spec)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix in (".eqs", ".toy"))
        if not files:
            raise InputError(f"{spec}: no .eqs or .toy files")
        return [(str(f), str(f)) for f in files]
    if p.is_file():
        return [(str(p), str(p))]
    raise InputError(f"{spec}: no such suite")


def _bench_system(src, demand: str | None) -> EquationSystem:
    if isinstance(src, EquationSystem):
        return src
    if isinstance(src, str):
        return load_system(src, demand)
    return src.system(demand or "threads")


def _is_program(name: str, src) -> bool:
    return (isinstance(src, str) and src.endswith(".toy")) or getattr(src, "kind", None) == "toy"


def bench_rows(args) -> list[dict]:
    rows: list[dict] = []
    for name, src in _suite(args.suite):
        demands = args.demand if _is_program(name, src) else [None]
        for demand in demands:
            system = _bench_system(src, demand)
            for solver in args.solvers:
                for workers in ([1] if solver == "seq" else args.workers):
                    for run in range(args.repeat):
                        seed = None if args.seed is None else args.seed + run
                        cfg = SolverConfig(widen_delay=args.widen_delay, eval_budget=args.budget, seed=seed)
                        sol = run_solver(system, solver, workers, cfg)
                        rows.append({
                            "file": name,
                            "solver": solver,
                            "workers": workers,
                            "demand": demand or "",
                            "run_index": run,
                            "wall_time_ms": round(sol.stats["wall_time_ms"], 3),
                            "verified": verify_run(system, sol).ok,
                            "rhs_evaluations": sol.stats["rhs_evaluations"],
                            "retry_ratio": sol.stats.get("retry_ratio", ""),
                        })
    add_speedups(rows)
    return rows


def add_speedups(rows: list[dict]) -> None:
    """speedup = median 1-worker time of the same (file, solver, demand) / this row's time."""
    base: dict[tuple, list[float]] = {}
    for r in rows:
        if r["workers"] == 1:
            base.setdefault((r["file"], r["solver"], r["demand"]), []).append(r["wall_time_ms"])
    for r in rows:
        b = base.get((r["file"], r["solver"], r["demand"]))
        r["speedup"] = round(statistics.median(b) / r["wall_time_ms"], 4) if b and r["wall_time_ms"] > 0 else ""


def cmd_bench(args, out) -> int:
    for s in args.solvers:
        if s not in SOLVERS:
            raise InputError(f"unknown solver {s!r}")
    for d in args.demand:
        DemandStrategy.parse(d)
    rows = bench_rows(args)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
            w.writeheader()
            w.writerows(rows)
    if args.out == "json":
        json.dump({"meta": {"tool": "fixlab", "version": VERSION, "command": "bench", "suite": args.suite},
                   "rows": rows}, out, indent=2)
        out.write("\n")
    elif not args.csv:
        w = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK if all(r["verified"] for r in rows) else EXIT_UNVERIFIED


def cmd_generate(args, out) -> int:
    params = dict(SCALING_FIXTURE) if args.fixture else {}
    for k in ("components", "chain_length", "globals_per_component", "work_factor"):
        v = getattr(args, k)
        if v is not None:
            params[k] = v
    defaults = dict(components=4, chain_length=100, globals_per_component=1, work_factor=10)
    params = {**defaults, **params}
    try:
        system = generate_synthetic(seed=args.seed or 0, **params)
    except ValueError as e:
        raise InputError(str(e)) from None
    text = serialize_system(system)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fixlab", description="Fixpoint solvers for side-effecting constraint systems.")
    p.add_argument("--version", action="version", version=f"fixlab {VERSION}")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_opts(sp, workers_default):
        sp.add_argument("file")
        sp.add_argument("--solver", choices=SOLVERS, default="seq")
        sp.add_argument("--workers", type=_positive, default=workers_default)
        sp.add_argument("--seed", type=int, default=None, help="scheduler perturbation seed")
        sp.add_argument("--widen-delay", type=int, default=3)
        sp.add_argument("--budget", type=_positive, default=10_000_000, help="max right-hand side evaluations")
        sp.add_argument("--out", choices=("json", "text"), default="text")

    workers_default = default_workers()
    sp = sub.add_parser("solve", help="solve an equation-system file")
    solver_opts(sp, workers_default)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("analyze", help="analyze a toy program")
    solver_opts(sp, workers_default)
    sp.add_argument("--demand", choices=[d.value for d in DemandStrategy], default="threads")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("compare", help="precision of one result relative to another")
    sp.add_argument("base")
    sp.add_argument("other")
    sp.add_argument("--detail", action="store_true")
    sp.add_argument("--out", choices=("json", "text"), default="text")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("bench", help="benchmark sweep, CSV output")
    sp.add_argument("--suite", required=True, help="directory, file, builtin:corpus or builtin:scaling")
    sp.add_argument("--solvers", type=lambda s: [x for x in s.split(",") if x], default=list(SOLVERS))
    sp.add_argument("--workers", type=_int_list, default=sorted({1, 2, 4, workers_default}))
    sp.add_argument("--demand", type=lambda s: [x for x in s.split(",") if x], default=["threads"])
    sp.add_argument("--repeat", type=_positive, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--widen-delay", type=int, default=3)
    sp.add_argument("--budget", type=_positive, default=10_000_000)
    sp.add_argument("--csv", default=None, help="write rows to this file")
    sp.add_argument("--out", choices=("json", "csv"), default="csv")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("generate", help="write a seeded synthetic system")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--components", type=_positive)
    sp.add_argument("--chain-length", type=_positive)
    sp.add_argument("--globals-per-component", type=int)
    sp.add_argument("--work-factor", type=_positive)
    sp.add_argument("--fixture", action="store_true", help="start from the scaling fixture parameters")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_generate)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except InputError as e:
        print(f"fixlab: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as e:  # argparse usage errors exit with 2 already
        return int(e.code or 0)
    try:
        return args.func(args, out)
    except InputError as e:
        print(f"fixlab: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetExceeded as e:
        print(f"fixlab: budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (AnalysisError, EvalError, L.DomainError) as e:
        print(f"fixlab: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:  # e.g. piped into head
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
