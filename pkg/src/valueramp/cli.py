"""Command-line front end: ``simulate``, ``oracle``, ``check`` and ``render``."""

from __future__ import annotations

import argparse
import csv
import io
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from valueramp import analysis as an
from valueramp import checks
from valueramp.core import ValueFunction
from valueramp.data import read_text
from valueramp.gridworld import (
    GridMap,
    MapError,
    compile_map,
    matrix_to_csv,
    matrix_to_pgm,
    parse_map,
    render_state_values,
    render_values,
)
from valueramp.rng import parse_probability
from valueramp.runner import (
    InitSpec,
    RunnerParams,
    RunTrace,
    Simulator,
    fixpoint,
    format_record,
    good_configuration,
    trace_header,
)
from valueramp.task import TaskError, TaskModel, is_deterministic, load_graph_task

# budget when a stop condition other than a plain step count is requested
UNTIL_BUDGET = 50_000_000


class UsageError(Exception):
    pass


# --- inputs ------------------------------------------------------------------


def _read_input(path: str) -> str:
    """Read ``path``; bare names of bundled files (``room.map``) also resolve."""
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    try:
        return read_text(os.path.basename(path))
    except (FileNotFoundError, OSError):
        raise UsageError(f"no such file: {path}") from None


def load_input(args) -> Tuple[TaskModel, Optional[GridMap], str]:
    if args.map:
        gm = parse_map(_read_input(args.map))
        return compile_map(gm), gm, _stem(args.map)
    if args.task:
        return load_graph_task(_read_input(args.task)), None, _stem(args.task)
    raise UsageError("one of --map or --task is required")


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _epsilon(text: str) -> Fraction:
    try:
        return parse_probability(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    n = _natural(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _natural(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a natural number: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _init(text: str) -> InitSpec:
    try:
        return InitSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# --- values file ---------------------------------------------------------------


def values_to_csv(V: ValueFunction, T: TaskModel) -> str:
    """Lossless per-pair table: ``state,<action>...`` header then one row per state."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", *_action_names(T)])
    for s in range(T.n_states):
        w.writerow([_state_name(T, s), *V.row(s)])
    return buf.getvalue()


def csv_to_values(text: str, T: TaskModel) -> ValueFunction:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["state", *_action_names(T)]:
        raise UsageError("values file header does not match the task's actions")
    body = rows[1:]
    if [r[0] for r in body] != [_state_name(T, s) for s in range(T.n_states)]:
        raise UsageError("values file states do not match the task")
    try:
        return ValueFunction.from_rows([[int(x) for x in r[1:]] for r in body])
    except ValueError as exc:
        raise UsageError(f"bad values file: {exc}") from None


def _state_name(T: TaskModel, s: int) -> str:
    return T.state_names[s] if T.state_names else str(s)


def _action_names(T: TaskModel) -> List[str]:
    return list(T.action_names) if T.action_names else [str(a) for a in range(T.n_actions)]


def _write(path: str, data) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"}
    with open(path, mode, **kw) as fh:
        fh.write(data)


# --- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    T, _, stem = load_input(args)
    stop = {
        "steps": (),
        "fixpoint": (fixpoint(),),
        "good-config": (good_configuration(),),
    }[args.stop]
    max_steps = args.steps
    if max_steps is None:
        max_steps = 10_000 if args.stop == "steps" else UNTIL_BUDGET
    params = RunnerParams(epsilon=args.epsilon, seed=args.seed, max_steps=max_steps, init=args.init, stop=stop)
    sim = Simulator.from_params(T, params, args.k)
    trace = RunTrace(T, args.k, params, sim.config.state, sim.config.values.copy())
    out = args.out or stem
    count = 0
    with tempfile.TemporaryFile("w+", encoding="utf-8", newline="\n") as spool:
        def emit(rec):
            nonlocal count
            spool.write(format_record(rec))
            spool.write("\n")
            count += 1

        _, reason = sim.advance(max_steps, stop, record=False, on_record=emit)
        spool.seek(0)
        with open(out + ".trace", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(trace_header(trace)) + "\n")
            fh.write(f"records {count}\n")
            shutil.copyfileobj(spool, fh)
            fh.write(f"end {reason}\n")
    _write(out + ".values.csv", values_to_csv(sim.config.values, T))
    print(f"stop {reason} after {count} steps")
    print(f"wrote {out}.trace {out}.values.csv")
    return 0


def cmd_oracle(args) -> int:
    T, gm, stem = load_input(args)
    if not is_deterministic(T):
        print("error: optimal values are only defined here for deterministic tasks", file=sys.stderr)
        return 2
    opt = an.optimal_values_iterate(T, args.k)
    if gm is None and T.n_states <= 12 and an.optimal_values_enumerate(T, args.k) != opt:
        # small graph tasks are cross-checked against path enumeration
        print("error: enumeration and iteration oracles disagree", file=sys.stderr)
        return 1
    for s in range(T.n_states):
        print(f"{_state_name(T, s)} {opt[s]}")
    if gm is not None:
        out = args.out or stem + ".vstar"
        matrix = render_state_values(opt, gm)
        _write(out + ".csv", matrix_to_csv(matrix))
        _write(out + ".pgm", matrix_to_pgm(matrix))
        print(f"wrote {out}.csv {out}.pgm", file=sys.stderr)
    return 0


def cmd_render(args) -> int:
    if not args.map:
        raise UsageError("render needs --map")
    if not args.values:
        raise UsageError("render needs --values")
    T, gm, stem = load_input(args)
    V = csv_to_values(_read_input(args.values), T)
    matrix = render_values(V, gm)
    out = args.out or stem
    _write(out + ".csv", matrix_to_csv(matrix))
    _write(out + ".pgm", matrix_to_pgm(matrix))
    print(f"wrote {out}.csv {out}.pgm")
    return 0


def _suite_jobs(args) -> List[Tuple[str, tuple, dict]]:
    """Split a suite into independent (function, args, kwargs) jobs, one per seed."""
    suite = args.suite
    seeds = None if args.seeds is None else list(range(args.seed, args.seed + args.seeds))
    jobs = []
    if suite == "explore":
        names = [args.map] if args.map else [m + ".map" for m in checks.DC_MAPS]
        Ks = (args.k,) if args.k_given else (1, 2, 3)
        for name in names:
            for seed in seeds or (0, 1, 2):
                jobs.append(("explore", (_stem(name),), {"Ks": Ks, "seeds": (seed,), "path": name}))
    elif suite == "sprint":
        name = args.map or "room.map"
        for seed in seeds or (0, 1, 2):
            jobs.append(("sprint", (_stem(name),), {"K": args.k, "seeds": (seed,), "path": name}))
    elif suite == "greedy":
        name = args.map or "swamp.map"
        for seed in seeds or range(10):
            jobs.append(("greedy", (_stem(name),), {"K": args.k, "seeds": (seed,), "path": name}))
    elif suite == "fluctuate":
        jobs.append(("fluctuate", (), {"seed": args.seed}))
    else:
        jobs.append((suite, (), {"seed": args.seed}))
    return jobs


def _run_job(job) -> List[str]:
    suite, pos, kw = job
    kw = dict(kw)
    path = kw.pop("path", None)
    if path is not None:
        T = compile_map(parse_map(_read_input(path)))
        pos = (T, *pos)
    return [r.line() for r in checks.SUITES[suite](*pos, **kw)]


def cmd_check(args) -> int:
    jobs = _suite_jobs(args)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(_run_job, jobs))
    else:
        outputs = [_run_job(j) for j in jobs]
    seen = set()  # per-seed jobs repeat their setup lines
    ok = True
    for lines in outputs:
        for line in lines:
            if line in seen:
                continue
            seen.add(line)
            print(line)
            ok = ok and line.split()[2] == "PASS"
    return 0 if ok else 1


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="valueramp", description="Value-Ramp tabular learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def inputs(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--map", help="map v1 file (bundled names such as room.map also work)")
        g.add_argument("--task", help="task v1 file")
        p.add_argument("--k", type=_positive, default=None, help="step size K >= 1 (default 1)")
        p.add_argument("--out", help="output path prefix")

    p = sub.add_parser("simulate", help="run the algorithm and write a trace and final values")
    inputs(p)
    p.add_argument("--epsilon", type=_epsilon, default=Fraction(1), help="exploration probability in [0,1]")
    p.add_argument("--seed", type=_natural, default=0)
    p.add_argument("--steps", type=_natural, default=None, help="step budget")
    p.add_argument("--init", type=_init, default=InitSpec.zero(), help="zero | uniform:LO..HI")
    p.add_argument("--stop", choices=("steps", "fixpoint", "good-config"), default="steps")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="print optimal state values")
    inputs(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check", help="run a property check suite")
    inputs(p)
    p.add_argument("--suite", required=True, choices=sorted(checks.SUITES))
    p.add_argument("--seeds", type=_positive, default=None, help="number of seeds")
    p.add_argument("--seed", type=_natural, default=0, help="first seed")
    p.add_argument("--jobs", type=_positive, default=1, help="worker processes for per-seed runs")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("render", help="export a values file as CSV and PGM heat-maps")
    inputs(p)
    p.add_argument("--values", help="values CSV written by simulate")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.k_given = args.k is not None
    if args.k is None:
        args.k = 1
    if args.command == "check" and args.task:
        parser.error("check takes --map; the fluctuate suite uses its bundled task")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (TaskError, MapError, an.UnsupportedTaskError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
