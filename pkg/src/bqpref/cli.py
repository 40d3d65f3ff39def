"""Command-line interface.

Exit codes: 0 success, 2 config/parse error, 3 numerical failure,
4 limit-terminated search.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (
    BenchConfig,
    default_sense_for,
    render_tables,
    report_gaps,
    rows_to_csv,
    run_bench,
)
from .bnb import METHODS, BnBOptions, build_method, solve_bnb
from .cuts import TRIANGLE
from .errors import (
    BqprefError,
    ConfigError,
    GuardError,
    InputError,
    NumericalFailureError,
    ParseError,
    UndefinedGapError,
)
from .model import (
    brute_force,
    generate_pardalos,
    normalize_diagonal,
    parse_instance,
    relative_gap,
    write_instance,
)
from .reform import dump_reformulation
from .sdp import MCCORMICK, cutting_plane

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_LIMIT = 4

RELAX_FAMILIES = {
    "sdp": ({MCCORMICK}, 0),
    "sdprlt": ({MCCORMICK}, 2),
    "sdprlttri": ({MCCORMICK, TRIANGLE}, 9),
}


def _load(path: str, sense: str | None) -> tuple:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no such file: {path}")
    sense = sense or default_sense_for(p)
    inst = parse_instance(p.read_text(), sense=sense, name=p.name)
    return inst, sense


def cmd_parse(args) -> int:
    inst, sense = _load(args.file, args.sense)
    nnz = int((inst.Q != 0).sum() // 2)
    print(f"name: {inst.meta.name}")
    print(f"n: {inst.n}")
    print(f"sense: {sense} (stored as minimization)")
    print(f"offdiag nonzeros: {nnz}")
    print(f"linear nonzeros: {int((inst.c != 0).sum())}")
    return EXIT_OK


def cmd_gen(args) -> int:
    inst = generate_pardalos(args.n, args.density, args.seed)
    text = write_instance(inst)
    Path(args.output).write_text(text)
    print(f"wrote {args.output} (n={args.n}, density={args.density:g}, seed={args.seed})")
    return EXIT_OK


def cmd_bound(args) -> int:
    inst, _ = _load(args.file, args.sense)
    inst = normalize_diagonal(inst)
    families, default_iters = RELAX_FAMILIES[args.relax]
    iters = default_iters if args.iters is None else args.iters
    res = cutting_plane(inst, families, iters, args.viol_tol, args.max_cuts)
    print(f"relaxation: {args.relax}")
    print(f"iterations run: {len(res.values) - 1}")
    print(f"pooled cuts: {len(res.pool)}")
    print(f"bound: {res.solution.value:.10g}")
    print(f"dual objective: {res.certificate.sigma:.10g}")
    return EXIT_OK


def cmd_gaps(args) -> int:
    inst, _ = _load(args.file, args.sense)
    inst = normalize_diagonal(inst)
    vstar = args.vstar
    if vstar is None:
        try:
            vstar, _ = brute_force(inst)
        except GuardError as e:
            raise ConfigError(f"{e}; pass --vstar explicitly") from e
    try:
        rg = report_gaps(
            inst,
            budgets=(0, args.rlt_iters, args.tri_iters),
            vstar=vstar,
            viol_tol=args.viol_tol,
            max_cuts=args.max_cuts,
        )
    except UndefinedGapError as e:
        raise ConfigError(str(e)) from e
    print(f"v*: {vstar:.10g}")
    for label, val in zip(("sdp", "sdp+rlt", "sdp+rlt+tri"), rg):
        print(f"rg[{label}]: {100.0 * val:.4f}%")
    return EXIT_OK


def cmd_reform(args) -> int:
    inst, _ = _load(args.file, args.sense)
    inst = normalize_diagonal(inst)
    opts = BnBOptions(
        rlt_iters=args.rlt_iters,
        tri_iters=args.tri_iters,
        viol_tol=args.viol_tol,
        max_cuts=args.max_cuts,
    )
    ref = build_method(inst, args.method, opts)
    text = dump_reformulation(ref)
    Path(args.output).write_text(text)
    print(f"wrote {args.output} ({args.method}, {len(ref.constraints)} constraints, "
          f"{len(ref.aux_vars)} aux variables)")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst, _ = _load(args.file, args.sense)
    inst = normalize_diagonal(inst)
    opts = BnBOptions(
        rel_tol=args.tol,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        rlt_iters=args.rlt_iters,
        tri_iters=args.tri_iters,
        viol_tol=args.viol_tol,
        max_cuts=args.max_cuts,
    )
    result = solve_bnb(inst, args.method, opts)
    print(f"status: {result.status}")
    print(f"value: {result.value:.10g}")
    print(f"solution: {''.join(str(v) for v in result.solution.as_tuple())}")
    print(f"nodes: {result.node_count}")
    print(f"root bound: {result.root_bound:.10g}")
    print(f"final relative gap: {result.final_rel_gap:.6g}")
    return EXIT_OK if result.status in ("optimal", "gap-limit") else EXIT_LIMIT


def cmd_bench(args) -> int:
    cfg = BenchConfig.from_json(Path(args.config).read_text())
    rows = run_bench(cfg)
    csv_text = rows_to_csv(rows)
    Path(args.output).write_text(csv_text)
    print(f"wrote {args.output} ({len(rows)} rows)")
    bad = [r for r in rows if r.status == "numerical-failure"]
    if bad:
        print(f"{len(bad)} rows ended in numerical failure", file=sys.stderr)
        return EXIT_NUMERICAL
    limited = [r for r in rows if r.status in ("node-limit", "time-limit")]
    if limited:
        return EXIT_LIMIT
    return EXIT_OK


def cmd_tables(args) -> int:
    print(render_tables(Path(args.csv).read_text()), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bqpref",
        description="Reformulations and exact solving of 0-1 quadratic programs",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, sense=True):
        sp.add_argument("file", help="instance file (sparse triple format)")
        if sense:
            sp.add_argument(
                "--sense", choices=("min", "max"), default=None,
                help="objective sense of the file (default: max for *.sparse, else min)",
            )

    def add_relax_opts(sp):
        sp.add_argument("--rlt-iters", type=int, default=2)
        sp.add_argument("--tri-iters", type=int, default=9)
        sp.add_argument("--viol-tol", type=float, default=1e-6)
        sp.add_argument(
            "--max-cuts", type=int, default=0,
            help="cuts added per family per round (0 = 5n default, -1 = all violated)",
        )

    sp = sub.add_parser("parse", help="validate and summarize an instance file")
    add_common(sp)
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("gen", help="generate a random instance file")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--density", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("bound", help="solve a lifted relaxation for a lower bound")
    add_common(sp)
    sp.add_argument("--relax", choices=tuple(RELAX_FAMILIES), required=True)
    sp.add_argument("--iters", type=int, default=None,
                    help="cutting-plane rounds (default 0/2/9 per relaxation)")
    sp.add_argument("--viol-tol", type=float, default=1e-6)
    sp.add_argument("--max-cuts", type=int, default=0)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("gaps", help="relative gaps of the three relaxations")
    add_common(sp)
    add_relax_opts(sp)
    sp.add_argument("--vstar", type=float, default=None,
                    help="known optimal value (required beyond the enumeration guard)")
    sp.set_defaults(func=cmd_gaps)

    sp = sub.add_parser("reform", help="build a reformulation and dump it")
    add_common(sp)
    sp.add_argument("--method", choices=METHODS, required=True)
    sp.add_argument("-o", "--output", required=True)
    add_relax_opts(sp)
    sp.set_defaults(func=cmd_reform)

    sp = sub.add_parser("solve", help="solve an instance exactly by branch-and-bound")
    add_common(sp)
    sp.add_argument("--method", choices=METHODS, required=True)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--time-limit", type=float, default=None)
    sp.add_argument("--node-limit", type=int, default=None)
    add_relax_opts(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bench", help="run a benchmark config and write a CSV report")
    sp.add_argument("--config", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("tables", help="render a CSV report as text tables")
    sp.add_argument("csv")
    sp.set_defaults(func=cmd_tables)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "max_cuts", None) == -1:
        args.max_cuts = None
    try:
        return args.func(args)
    except (ParseError, ConfigError, InputError, GuardError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BqprefError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
