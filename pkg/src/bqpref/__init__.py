"""Reformulations of 0-1 quadratic programs: SDP-tuned convex (QCR, QCRE) and
nonconvex (QNR, QNRE, QNRE-AGG) forms, McCormick root bounds, and exact
branch-and-bound."""

from .bench import BenchConfig, BenchRow, report_gaps, run_bench
from .bnb import BnBOptions, BnBResult, incumbent_heuristic, solve_bnb
from .cuts import Cut, CutPool, mccormick_family, separate, triangle_family, violation
from .model import (
    BinaryPoint,
    BQPInstance,
    QuadForm,
    brute_force,
    eval_quadform,
    generate_pardalos,
    normalize_diagonal,
    parse_instance,
    relative_gap,
    write_instance,
)
from .numerics import QPModel, QPSolution, eigen_sym, psd_status, solve_qp
from .reform import (
    ReformParams,
    ReformulatedProblem,
    build_qcr,
    build_qcre,
    build_qnr,
    build_qnre,
    build_qnre_agg,
    check_equivalence,
    dump_reformulation,
    load_reformulation,
    qcr_params,
    qcre_params,
    qnre_params,
)
from .relax import Fixings, RelaxedModel, bound, build_relaxation, classify_convexity
from .sdp import (
    CuttingPlaneResult,
    DualCertificate,
    SDPRelaxationModel,
    SDPSolution,
    build_base_sdp,
    cutting_plane,
    solve_sdp,
)

__version__ = "0.1.0"

__all__ = [
    "BQPInstance",
    "BenchConfig",
    "BenchRow",
    "BinaryPoint",
    "BnBOptions",
    "BnBResult",
    "Cut",
    "CutPool",
    "CuttingPlaneResult",
    "DualCertificate",
    "Fixings",
    "QPModel",
    "QPSolution",
    "QuadForm",
    "ReformParams",
    "ReformulatedProblem",
    "RelaxedModel",
    "SDPRelaxationModel",
    "SDPSolution",
    "bound",
    "brute_force",
    "build_base_sdp",
    "build_qcr",
    "build_qcre",
    "build_qnr",
    "build_qnre",
    "build_qnre_agg",
    "build_relaxation",
    "check_equivalence",
    "classify_convexity",
    "cutting_plane",
    "dump_reformulation",
    "eigen_sym",
    "eval_quadform",
    "generate_pardalos",
    "incumbent_heuristic",
    "load_reformulation",
    "mccormick_family",
    "normalize_diagonal",
    "parse_instance",
    "psd_status",
    "qcr_params",
    "qcre_params",
    "qnre_params",
    "relative_gap",
    "report_gaps",
    "run_bench",
    "separate",
    "solve_bnb",
    "solve_qp",
    "solve_sdp",
    "triangle_family",
    "violation",
    "write_instance",
]
