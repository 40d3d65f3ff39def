"""Experiment driver: per-(instance, method) rows, gap reports, CSV and tables.

The CSV is RFC-4180 quoted with a fixed column order; all data columns are
deterministic for a fixed config except the duration columns.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .bnb import BnBOptions, METHODS, build_method, solve_bnb
from .cuts import TRIANGLE
from .errors import ConfigError, GuardError, NumericalFailureError, UndefinedGapError
from .model import (
    BQPInstance,
    brute_force,
    generate_pardalos,
    normalize_diagonal,
    parse_instance,
    relative_gap,
)
from .sdp import MCCORMICK, cutting_plane

CSV_COLUMNS = [
    "instance",
    "method",
    "root_bound",
    "rg",
    "nodes",
    "time_total_s",
    "time_pre_s",
    "time_bnb_s",
    "status",
    "final_gap",
]


@dataclass
class BenchConfig:
    instances: list[dict] = field(default_factory=list)
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    rlt_iters: int = 2
    tri_iters: int = 9
    viol_tol: float = 1e-6
    max_cuts: int | None = 0
    rel_tol: float = 1e-4
    node_limit: int | None = None
    time_limit: float | None = None
    vstar: str = "brute-force"  # brute-force | none

    @staticmethod
    def from_dict(d: dict) -> "BenchConfig":
        known = {f for f in BenchConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = BenchConfig(**d)
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(text: str) -> "BenchConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(payload, dict):
            raise ConfigError("config must be a JSON object")
        return BenchConfig.from_dict(payload)

    def validate(self):
        if not self.instances:
            raise ConfigError("config needs at least one instance")
        if not self.methods:
            raise ConfigError("config needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.rlt_iters < 0 or self.tri_iters < 0:
            raise ConfigError("iteration budgets must be >= 0")
        for spec in self.instances:
            if not isinstance(spec, dict) or not ({"file", "gen"} & set(spec)):
                raise ConfigError(f"instance spec must carry 'file' or 'gen': {spec!r}")
        if self.vstar not in ("brute-force", "none"):
            raise ConfigError("vstar must be 'brute-force' or 'none'")

    def options(self) -> BnBOptions:
        return BnBOptions(
            rel_tol=self.rel_tol,
            node_limit=self.node_limit,
            time_limit=self.time_limit,
            rlt_iters=self.rlt_iters,
            tri_iters=self.tri_iters,
            viol_tol=self.viol_tol,
            max_cuts=self.max_cuts,
        )


def load_instance_spec(spec: dict) -> BQPInstance:
    if "file" in spec:
        path = Path(spec["file"])
        sense = spec.get("sense") or default_sense_for(path)
        inst = parse_instance(path.read_text(), sense=sense, name=spec.get("name", path.name))
    else:
        g = spec["gen"]
        inst = generate_pardalos(int(g["n"]), float(g["density"]), int(g.get("seed", 0)))
    return normalize_diagonal(inst)


def default_sense_for(path: Path) -> str:
    """Beasley-style .sparse files are historically maximization."""
    return "max" if path.suffix == ".sparse" else "min"


@dataclass(frozen=True)
class BenchRow:
    instance: str
    method: str
    root_bound: float
    rg: float | None
    nodes: int
    time_total_s: float
    time_pre_s: float
    time_bnb_s: float
    status: str
    final_gap: float

    def as_record(self) -> dict[str, str]:
        return {
            "instance": self.instance,
            "method": self.method,
            "root_bound": _fmt(self.root_bound),
            "rg": "" if self.rg is None else _fmt(self.rg),
            "nodes": str(self.nodes),
            "time_total_s": f"{self.time_total_s:.3f}",
            "time_pre_s": f"{self.time_pre_s:.3f}",
            "time_bnb_s": f"{self.time_bnb_s:.3f}",
            "status": self.status,
            "final_gap": _fmt(self.final_gap),
        }


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def run_bench(cfg: BenchConfig) -> list[BenchRow]:
    """One row per (instance, method), instances outer, methods inner."""
    rows: list[BenchRow] = []
    opts = cfg.options()
    for spec in cfg.instances:
        inst = load_instance_spec(spec)
        name = inst.meta.name or spec.get("name", "instance")
        vstar: float | None = None
        if cfg.vstar == "brute-force":
            try:
                vstar, _ = brute_force(inst)
            except GuardError:
                vstar = None
        for method in cfg.methods:
            rows.append(_bench_one(inst, name, method, opts, vstar))
    return rows


def _bench_one(inst, name, method, opts: BnBOptions, vstar) -> BenchRow:
    t0 = time.monotonic()
    try:
        ref = build_method(inst, method, opts)
        t1 = time.monotonic()
        result = solve_bnb(inst, method, opts, reformulation=ref)
        t2 = time.monotonic()
    except NumericalFailureError:
        t = time.monotonic()
        return BenchRow(
            instance=name, method=method, root_bound=float("nan"), rg=None, nodes=0,
            time_total_s=t - t0, time_pre_s=t - t0, time_bnb_s=0.0,
            status="numerical-failure", final_gap=float("nan"),
        )
    rg = None
    if vstar is not None:
        try:
            rg = relative_gap(vstar, result.root_bound)
        except UndefinedGapError:
            rg = None
    return BenchRow(
        instance=name,
        method=method,
        root_bound=result.root_bound,
        rg=rg,
        nodes=result.node_count,
        time_total_s=t2 - t0,
        time_pre_s=t1 - t0,
        time_bnb_s=t2 - t1,
        status=result.status,
        final_gap=result.final_rel_gap,
    )


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_record())
    return buf.getvalue()


def report_gaps(
    inst: BQPInstance,
    budgets: tuple[int, int, int] = (0, 2, 9),
    vstar: float | None = None,
    viol_tol: float = 1e-6,
    max_cuts: int | None = 0,
) -> tuple[float, float, float]:
    """(rg_base, rg_pairs, rg_pairs+triples) at the given iteration budgets.

    The triangle phase continues from the McCormick phase's pool, so the
    three bounds are nested and the gap chain is monotone nonincreasing.
    v* defaults to brute_force and must be supplied beyond its guard.
    """
    if vstar is None:
        vstar, _ = brute_force(inst)
    base_iters, rlt_iters, tri_iters = budgets
    res1 = cutting_plane(inst, {MCCORMICK}, rlt_iters, viol_tol, max_cuts)
    if base_iters == 0:
        base_value = res1.values[0]
    else:
        base_value = cutting_plane(
            inst, {MCCORMICK}, base_iters, viol_tol, max_cuts
        ).solution.value
    res2 = cutting_plane(
        inst, {MCCORMICK, TRIANGLE}, tri_iters, viol_tol, max_cuts,
        initial_pool=res1.pool,
    )
    return (
        relative_gap(vstar, base_value),
        relative_gap(vstar, res1.solution.value),
        relative_gap(vstar, res2.solution.value),
    )


def render_tables(csv_text: str) -> str:
    """Fixed-width text tables from a bench CSV, grouped per method column set."""
    reader = csv.DictReader(io.StringIO(csv_text))
    rows = list(reader)
    if not rows:
        return "(empty report)\n"
    cols = CSV_COLUMNS
    widths = {c: max(len(c), max(len(r[c]) for r in rows)) for c in cols}
    def line(values):
        return "  ".join(str(v).rjust(widths[c]) for c, v in zip(cols, values))
    out = [line(cols), line(["-" * widths[c] for c in cols])]
    for r in rows:
        out.append(line([r[c] for c in cols]))
    return "\n".join(out) + "\n"
