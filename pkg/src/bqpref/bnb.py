"""Deterministic best-bound branch-and-bound over binary variables.

Node bounds come from the relaxation engine; the frontier is ordered by
(bound, depth, fixings) so identical inputs replay identically. Pruning uses
the sign-aware relative gap against the incumbent, matching the reported
final_rel_gap definition.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np

from .cuts import TRIANGLE
from .errors import BoundUnavailableError, InputError, NumericalFailureError
from .model import BinaryPoint, BQPInstance, is_diagonal_normalized
from .reform import (
    ReformulatedProblem,
    build_qcr,
    build_qcre,
    build_qnr,
    build_qnre_agg,
    qcr_params,
    qcre_params,
    qnre_params,
    xvar,
)
from .relax import Fixings, relax_and_solve
from .sdp import MCCORMICK, cutting_plane

METHODS = ("qcr", "qcre", "qnr", "qnr-tri")
FRACTIONAL_EPS = 1e-6
INTEGRALITY_EPS = 1e-6


@dataclass
class BnBOptions:
    rel_tol: float = 1e-4
    node_limit: int | None = None
    time_limit: float | None = None
    gap_limit: float | None = None
    rlt_iters: int = 2
    tri_iters: int = 9
    viol_tol: float = 1e-6
    max_cuts: int | None = 0  # 0 = per-family default budget, None = all violated


@dataclass(frozen=True)
class Node:
    fixings: Fixings
    bound: float
    depth: int


@dataclass(frozen=True)
class BnBResult:
    value: float
    solution: BinaryPoint
    node_count: int
    root_bound: float
    status: str  # optimal | gap-limit | node-limit | time-limit
    final_rel_gap: float


def branch_select(x_frac: np.ndarray) -> int:
    """Most fractional entry (|x_i - 0.5| minimal); ties to the smallest index."""
    x_frac = np.asarray(x_frac, dtype=np.float64)
    frac = np.minimum(x_frac, 1.0 - x_frac)
    if np.all(frac <= FRACTIONAL_EPS):
        raise InputError("branch_select requires at least one fractional entry")
    return int(np.argmin(np.abs(x_frac - 0.5)))


def incumbent_heuristic(
    x_frac: np.ndarray, inst: BQPInstance
) -> tuple[BinaryPoint, float]:
    """Round at 0.5 (ties up), then best-improvement 1-flip descent."""
    x = np.where(np.asarray(x_frac, dtype=np.float64) >= 0.5, 1.0, 0.0)
    val = inst.objective(x)
    improved = True
    while improved:
        improved = False
        best_delta = -1e-12
        best_i = -1
        g = inst.Q @ x + inst.c
        for i in range(inst.n):
            if x[i] == 0.0:
                delta = g[i] + 0.5 * inst.Q[i, i]
            else:
                delta = -g[i] + 0.5 * inst.Q[i, i]
            if delta < best_delta:
                best_delta = delta
                best_i = i
        if best_i >= 0:
            x[best_i] = 1.0 - x[best_i]
            val += best_delta
            improved = True
    return BinaryPoint(x), float(inst.objective(x))


def _prune_margin(incumbent: float, rel_tol: float) -> float:
    return rel_tol * abs(incumbent)


def _rel_gap(incumbent: float, lower: float) -> float:
    if incumbent == 0.0:
        return 0.0 if lower >= -1e-12 else float("inf")
    return max(0.0, (incumbent - lower) / abs(incumbent))


def build_method(
    inst: BQPInstance, method: str, opts: BnBOptions | None = None
) -> ReformulatedProblem:
    """Run the relaxation phase for `method` and build its reformulation."""
    opts = opts or BnBOptions()
    if method not in METHODS:
        raise InputError(f"method must be one of {METHODS}, got {method!r}")
    if method == "qcr":
        res = cutting_plane(inst, {MCCORMICK}, 0, opts.viol_tol, opts.max_cuts)
        return build_qcr(inst, qcr_params(res.certificate, inst))
    if method in ("qcre", "qnr"):
        res = cutting_plane(inst, {MCCORMICK}, opts.rlt_iters, opts.viol_tol, opts.max_cuts)
        params = qcre_params(res.certificate, inst)
        return build_qcre(inst, params) if method == "qcre" else build_qnr(inst, params)
    res = cutting_plane(
        inst, {MCCORMICK, TRIANGLE}, opts.tri_iters, opts.viol_tol, opts.max_cuts
    )
    params = qnre_params(res.certificate, inst)
    return build_qnre_agg(inst, params, res.pool.by_family(TRIANGLE))


def _node_key(node: Node) -> tuple:
    return (node.bound, node.depth, node.fixings.values)


def solve_bnb(
    inst: BQPInstance,
    method: str,
    opts: BnBOptions | None = None,
    reformulation: ReformulatedProblem | None = None,
) -> BnBResult:
    """Exact minimization via best-bound search on the method's relaxation.

    A prebuilt reformulation may be passed to skip the relaxation phase
    (it must match the instance). Limits terminate with the best incumbent
    and the corresponding status; bound failures cause branching with a
    -inf bound rather than pruning.
    """
    if not is_diagonal_normalized(inst):
        raise InputError("instance must be diagonal-normalized")
    opts = opts or BnBOptions()
    ref = reformulation if reformulation is not None else build_method(inst, method, opts)

    start = time.monotonic()
    incumbent_val = float("inf")
    incumbent_x: np.ndarray | None = None
    node_count = 0
    root_bound = float("-inf")

    def evaluate(fixings: Fixings) -> tuple[float, np.ndarray | None]:
        """Bound plus the full-dimensional fractional point (fixings included)."""
        try:
            model, sol = relax_and_solve(ref, fixings)
        except BoundUnavailableError:
            return float("-inf"), None
        pos = {name: i for i, name in enumerate(model.qp.names)}
        xf = np.zeros(inst.n)
        for i, v in fixings.as_dict().items():
            xf[i] = float(v)
        for name in model.free_binary:
            idx = int(name[1:])
            xf[idx] = float(np.clip(sol.point[pos[name]], 0.0, 1.0))
        return float(sol.value), xf

    def register_incumbent(xf: np.ndarray):
        nonlocal incumbent_val, incumbent_x
        point, val = incumbent_heuristic(xf, inst)
        if val < incumbent_val - 1e-12:
            incumbent_val = val
            incumbent_x = point.x.copy()

    root_fix = Fixings()
    root_bound, root_xf = evaluate(root_fix)
    node_count = 1
    if root_xf is not None:
        register_incumbent(root_xf)

    frontier: list[tuple[tuple, int, Node, np.ndarray | None]] = []
    counter = 0
    root = Node(fixings=root_fix, bound=root_bound, depth=0)
    heapq.heappush(frontier, (_node_key(root), counter, root, root_xf))
    counter += 1

    status = "optimal"
    while frontier:
        if opts.node_limit is not None and node_count >= opts.node_limit:
            status = "node-limit"
            break
        if opts.time_limit is not None and time.monotonic() - start > opts.time_limit:
            status = "time-limit"
            break
        best_lower = frontier[0][0][0]
        if incumbent_val < float("inf"):
            gap = _rel_gap(incumbent_val, best_lower)
            if opts.gap_limit is not None and gap <= opts.gap_limit:
                status = "gap-limit"
                break
        _, _, node, xf = heapq.heappop(frontier)
        if incumbent_val < float("inf") and node.bound >= incumbent_val - _prune_margin(
            incumbent_val, opts.rel_tol
        ):
            continue
        if xf is None:  # bound unavailable: branch blindly on the first free index
            free = [i for i in range(inst.n) if i not in node.fixings.as_dict()]
            if not free:
                continue
            bi = free[0]
        else:
            free = [i for i in range(inst.n) if i not in node.fixings.as_dict()]
            if not free:
                continue
            sub = xf[free]
            if np.all(np.minimum(sub, 1.0 - sub) <= INTEGRALITY_EPS):
                continue  # integral relaxation already harvested by the heuristic
            bi = free[int(np.argmin(np.abs(sub - 0.5)))]
        for v in (0, 1):
            child_fix = node.fixings.with_fixed(bi, v)
            cb, cxf = evaluate(child_fix)
            node_count += 1
            if cxf is not None:
                register_incumbent(cxf)
            if incumbent_val < float("inf") and cb >= incumbent_val - _prune_margin(
                incumbent_val, opts.rel_tol
            ):
                continue
            if len(child_fix) == inst.n:
                continue  # leaf: its objective was just harvested exactly
            child = Node(fixings=child_fix, bound=cb, depth=node.depth + 1)
            heapq.heappush(frontier, (_node_key(child), counter, child, cxf))
            counter += 1

    if incumbent_x is None:
        raise NumericalFailureError("search ended without any feasible incumbent")

    final_gap = 0.0 if not frontier else _rel_gap(incumbent_val, frontier[0][0][0])
    return BnBResult(
        value=float(incumbent_val),
        solution=BinaryPoint(incumbent_x),
        node_count=node_count,
        root_bound=float(root_bound),
        status=status,
        final_rel_gap=float(final_gap),
    )
