"""Reformulation builders and SDP-dual parameter extraction.

All five builders produce problems whose objective agrees with the original
instance on every binary point once the auxiliary variables sit at their
defining values (w = x'Zx, v_t = g_t(x), v = sum gamma_t g_t(x),
X_ij = x_i x_j). The convexified Hessian Q + 2 diag(lam) - 2Z (+ weighted
constraint quadratics) is re-certified PSD on every build.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cuts import Cut, cut_by_identity
from .errors import BuildError, InputError, ParameterExtractionError
from .model import BQPInstance, QuadForm, enumerate_binary_points, eval_quadform
from .numerics import psd_status
from .sdp import DualCertificate

PSD_TOL = 1e-6
RIDGE_FLOOR = 1e-8
RIDGE_CAP = 1e-4
ZPAIR_EPS = 1e-9

QCR = "qcr"
QCRE = "qcre"
QNR = "qnr"
QNRE = "qnre"
QNRE_AGG = "qnre-agg"


def xvar(i: int) -> str:
    return f"x{i}"


def pairvar(i: int, j: int) -> str:
    return f"X{i}_{j}"


@dataclass(frozen=True)
class ReformParams:
    """Perturbation weights extracted from a dual certificate.

    lam shifts diagonal curvature, zmat (symmetric, zero diagonal) moves
    bilinear weight into the w-epigraph, gamma weights the valid-inequality
    cuts. The perturbed Hessian must be PSD within tolerance.
    """

    lam: np.ndarray
    zmat: np.ndarray
    gamma: dict[tuple, float]
    source: str

    def __post_init__(self):
        z = np.asarray(self.zmat, dtype=np.float64)
        if np.any(np.diag(z)):
            raise InputError("zmat must have a zero diagonal")
        if any(g < 0 for g in self.gamma.values()):
            raise InputError("gamma weights must be nonnegative")


@dataclass(frozen=True)
class Constraint:
    form: QuadForm
    sense: str  # "<=" or "=="
    convexity: str  # linear | convex | nonconvex


@dataclass(frozen=True)
class ReformulatedProblem:
    method: str
    n: int
    objective: QuadForm
    constraints: tuple[Constraint, ...]
    binary_vars: tuple[str, ...]
    aux_vars: tuple[str, ...]
    params: ReformParams
    vi_cuts: tuple[Cut, ...] = ()

    @property
    def all_vars(self) -> tuple[str, ...]:
        return self.binary_vars + self.aux_vars


def perturbed_hessian(inst: BQPInstance, params: ReformParams) -> np.ndarray:
    H = inst.Q + 2.0 * np.diag(params.lam) - 2.0 * params.zmat
    for key, g in params.gamma.items():
        if g != 0.0:
            A, _, _ = cut_by_identity(*key).binary_space()
            k = A.shape[0]
            H[:k, :k] += g * A
    return H


def _norm2(Q: np.ndarray) -> float:
    return float(np.linalg.norm(Q, 2)) if Q.size else 0.0


def _ridge_repair(inst: BQPInstance, lam: np.ndarray, zmat: np.ndarray,
                  gamma: dict[tuple, float], source: str) -> ReformParams:
    """Certify the perturbed Hessian, lifting lam uniformly if dual slack
    left it marginally indefinite; repair beyond the cap is refused."""
    scale = 1.0 + _norm2(inst.Q)
    params = ReformParams(lam=lam, zmat=zmat, gamma=gamma, source=source)
    H = perturbed_hessian(inst, params)
    ok, mu = psd_status(H, PSD_TOL)
    if ok and mu >= 0.0:
        return params
    ridge = max(0.0, -mu) + RIDGE_FLOOR * scale
    if ridge > RIDGE_CAP * scale:
        raise ParameterExtractionError(
            f"perturbed Hessian has min eigenvalue {mu:.3e}; ridge {ridge:.3e} "
            f"exceeds the cap {RIDGE_CAP * scale:.3e}"
        )
    return ReformParams(lam=lam + ridge, zmat=zmat, gamma=gamma, source=source)


def qcr_params(cert: DualCertificate, inst: BQPInstance) -> ReformParams:
    """Diagonal-only weights from a base (empty-pool) relaxation certificate."""
    if cert.cut_multipliers:
        raise InputError("qcr_params requires a certificate from a cut-free solve")
    n = len(cert.lam)
    return _ridge_repair(inst, cert.lam.copy(), np.zeros((n, n)), {}, "sdp")


def qcre_params(cert: DualCertificate, inst: BQPInstance) -> ReformParams:
    """Diagonal + pair weights from a McCormick-pooled certificate."""
    if cert.gamma:
        raise InputError("qcre_params requires a McCormick-only cut pool")
    return _ridge_repair(inst, cert.lam.copy(), cert.zmat(), {}, "sdp+rlt")


def qnre_params(cert: DualCertificate, inst: BQPInstance) -> ReformParams:
    """Diagonal + pair + valid-inequality weights from a triangle-pooled certificate."""
    gamma = {k: max(0.0, v) for k, v in cert.gamma.items()}
    return _ridge_repair(inst, cert.lam.copy(), cert.zmat(), gamma, "sdp+rlt+tri")


def _convexity_of(A: np.ndarray) -> str:
    if not np.any(A):
        return "linear"
    ok, _ = psd_status(A, PSD_TOL)
    return "convex" if ok else "nonconvex"


def _check_hessian(inst: BQPInstance, params: ReformParams) -> np.ndarray:
    H = perturbed_hessian(inst, params)
    ok, mu = psd_status(H, PSD_TOL)
    if not ok:
        raise BuildError(
            f"perturbed Hessian is not PSD (min eigenvalue {mu:.3e}); "
            "extract parameters through the params helpers"
        )
    return H


def build_qcr(inst: BQPInstance, params: ReformParams) -> ReformulatedProblem:
    """Convex objective via diagonal shift only; no constraints, no aux."""
    if np.any(params.zmat) or params.gamma:
        raise BuildError("qcr takes diagonal-only parameters (zmat = 0, gamma empty)")
    H = _check_hessian(inst, params)
    n = inst.n
    xs = tuple(xvar(i) for i in range(n))
    obj = QuadForm(vars=xs, A=H, b=inst.c - params.lam, d=0.0)
    return ReformulatedProblem(
        method=QCR, n=n, objective=obj, constraints=(), binary_vars=xs,
        aux_vars=(), params=params,
    )


def _mccormick_constraints(i: int, j: int) -> list[Constraint]:
    xi, xj, xij = xvar(i), xvar(j), pairvar(i, j)
    rows = [
        ((0.0, {xij: -1.0}), "<="),
        ((-1.0, {xi: 1.0, xj: 1.0, xij: -1.0}), "<="),
        ((0.0, {xi: -1.0, xij: 1.0}), "<="),
        ((0.0, {xj: -1.0, xij: 1.0}), "<="),
    ]
    out = []
    for (d0, lin), sense in rows:
        names = tuple(lin)
        out.append(
            Constraint(
                form=QuadForm(vars=names, A=np.zeros((len(names), len(names))),
                              b=np.array([lin[v] for v in names]), d=d0),
                sense=sense,
                convexity="linear",
            )
        )
    return out


def build_qcre(inst: BQPInstance, params: ReformParams) -> ReformulatedProblem:
    """Extended-space convex form: explicit X_ij with pair inequalities.

    A pair variable is introduced only where |Z_ij| exceeds a small
    threshold; the bilinear weight moves to a linear X_ij term.
    """
    if params.gamma:
        raise BuildError("qcre takes gamma-free parameters")
    H = _check_hessian(inst, params)
    n = inst.n
    xs = tuple(xvar(i) for i in range(n))
    pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if abs(params.zmat[i, j]) > ZPAIR_EPS
    ]
    aux = tuple(pairvar(i, j) for i, j in pairs)
    names = xs + aux
    k = len(names)
    A = np.zeros((k, k))
    A[:n, :n] = H
    b = np.zeros(k)
    b[:n] = inst.c - params.lam
    for t, (i, j) in enumerate(pairs):
        b[n + t] = 2.0 * params.zmat[i, j]
    obj = QuadForm(vars=names, A=A, b=b, d=0.0)
    cons: list[Constraint] = []
    for i, j in pairs:
        cons.extend(_mccormick_constraints(i, j))
    return ReformulatedProblem(
        method=QCRE, n=n, objective=obj, constraints=tuple(cons), binary_vars=xs,
        aux_vars=aux, params=params,
    )


def _w_constraint(n: int, zmat: np.ndarray) -> Constraint:
    """x'Zx - w <= 0 (the epigraph of the removed bilinear weight)."""
    names = tuple(xvar(i) for i in range(n)) + ("w",)
    k = n + 1
    A = np.zeros((k, k))
    A[:n, :n] = 2.0 * zmat
    b = np.zeros(k)
    b[n] = -1.0
    tag = "nonconvex" if np.any(zmat) else "linear"
    return Constraint(form=QuadForm(vars=names, A=A, b=b, d=0.0), sense="<=", convexity=tag)


def build_qnr(inst: BQPInstance, params: ReformParams) -> ReformulatedProblem:
    """Convex objective plus one nonconvex epigraph constraint w >= x'Zx."""
    if params.gamma:
        raise BuildError("qnr takes gamma-free parameters")
    H = _check_hessian(inst, params)
    n = inst.n
    xs = tuple(xvar(i) for i in range(n))
    names = xs + ("w",)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = H
    b = np.concatenate([inst.c - params.lam, [1.0]])
    obj = QuadForm(vars=names, A=A, b=b, d=0.0)
    cons = (_w_constraint(n, params.zmat),)
    return ReformulatedProblem(
        method=QNR, n=n, objective=obj, constraints=cons, binary_vars=xs,
        aux_vars=("w",), params=params,
    )


def _binary_space_checked(cut: Cut, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    A, c, b0 = cut.binary_space()
    k = A.shape[0]
    if k > n:
        raise BuildError(f"cut indices exceed instance dimension {n}")
    Af = np.zeros((n, n))
    Af[:k, :k] = A
    cf = np.zeros(n)
    cf[:k] = c
    if np.any(np.diag(Af)):
        raise BuildError("valid-inequality quadratic must have zero diagonal after "
                         "x_i^2 -> x_i rewriting")
    return Af, cf, b0


def _gt_constraint(n: int, A: np.ndarray, c: np.ndarray, b0: float,
                   extra: dict[str, float] | None = None, sense: str = "<=") -> Constraint:
    names = tuple(xvar(i) for i in range(n)) + tuple(extra or ())
    k = len(names)
    Af = np.zeros((k, k))
    Af[:n, :n] = A
    bf = np.zeros(k)
    bf[:n] = c
    for t, (name, coef) in enumerate((extra or {}).items()):
        bf[n + t] = coef
    return Constraint(
        form=QuadForm(vars=names, A=Af, b=bf, d=b0),
        sense=sense,
        convexity=_convexity_of(Af),
    )


def build_qnre(
    inst: BQPInstance, params: ReformParams, cuts: list[Cut]
) -> ReformulatedProblem:
    """Per-cut auxiliary form: v_t pinned to g_t(x) with the redundant v_t <= 0 kept.

    The objective carries + sum gamma_t (g_t(x) - v_t); gamma defaults to 0
    for listed cuts absent from params.gamma.
    """
    n = inst.n
    H = _check_hessian(inst, params)
    xs = tuple(xvar(i) for i in range(n))
    vnames = tuple(f"v{t}" for t in range(len(cuts)))
    names = xs + ("w",) + vnames
    k = len(names)
    A = np.zeros((k, k))
    b = np.zeros(k)
    d0 = 0.0
    A[:n, :n] = inst.Q + 2.0 * np.diag(params.lam) - 2.0 * params.zmat
    b[:n] = inst.c - params.lam
    b[n] = 1.0
    cons: list[Constraint] = [_w_constraint(n, params.zmat)]
    for t, cut in enumerate(cuts):
        At, ct, bt = _binary_space_checked(cut, n)
        g = params.gamma.get(cut.key, 0.0)
        A[:n, :n] += g * At
        b[:n] += g * ct
        d0 += g * bt
        b[n + 1 + t] = -g
        cons.append(_gt_constraint(n, At, ct, bt, {f"v{t}": -1.0}, sense="=="))
        cons.append(
            Constraint(
                form=QuadForm(vars=(f"v{t}",), A=np.zeros((1, 1)), b=np.array([1.0]), d=0.0),
                sense="<=", convexity="linear",
            )
        )
    ok, mu = psd_status(A[:n, :n], PSD_TOL)
    if not ok:
        raise BuildError(f"objective Hessian with weighted cuts is not PSD ({mu:.3e})")
    obj = QuadForm(vars=names, A=A, b=b, d=d0)
    return ReformulatedProblem(
        method=QNRE, n=n, objective=obj, constraints=tuple(cons), binary_vars=xs,
        aux_vars=("w",) + vnames, params=params, vi_cuts=tuple(cuts),
    )


def build_qnre_agg(
    inst: BQPInstance, params: ReformParams, cuts: list[Cut], filtered: bool = True
) -> ReformulatedProblem:
    """Aggregated form: one v with v <= sum gamma_t g_t(x), plus g_t(x) <= 0 rows.

    With filtered=True (the production default) only cuts with gamma_t > 0
    contribute g_t <= 0 rows; filtered=False keeps every listed cut's row.
    """
    n = inst.n
    _check_hessian(inst, params)
    xs = tuple(xvar(i) for i in range(n))
    names = xs + ("w", "v")
    k = len(names)
    A = np.zeros((k, k))
    b = np.zeros(k)
    d0 = 0.0
    A[:n, :n] = inst.Q + 2.0 * np.diag(params.lam) - 2.0 * params.zmat
    b[:n] = inst.c - params.lam
    b[n] = 1.0
    b[n + 1] = -1.0

    agg_A = np.zeros((n, n))
    agg_c = np.zeros(n)
    agg_b = 0.0
    cons: list[Constraint] = [_w_constraint(n, params.zmat)]
    for cut in cuts:
        At, ct, bt = _binary_space_checked(cut, n)
        g = params.gamma.get(cut.key, 0.0)
        A[:n, :n] += g * At
        b[:n] += g * ct
        d0 += g * bt
        agg_A += g * At
        agg_c += g * ct
        agg_b += g * bt
        if (not filtered) or g > 0.0:
            cons.append(_gt_constraint(n, At, ct, bt))
    # v - sum gamma_t g_t(x) <= 0
    cons.append(_gt_constraint(n, -agg_A, -agg_c, -agg_b, {"v": 1.0}))
    ok, mu = psd_status(A[:n, :n], PSD_TOL)
    if not ok:
        raise BuildError(f"objective Hessian with weighted cuts is not PSD ({mu:.3e})")
    obj = QuadForm(vars=names, A=A, b=b, d=d0)
    return ReformulatedProblem(
        method=QNRE_AGG, n=n, objective=obj, constraints=tuple(cons), binary_vars=xs,
        aux_vars=("w", "v"), params=params, vi_cuts=tuple(cuts),
    )


def defining_assignment(ref: ReformulatedProblem, x: np.ndarray) -> dict[str, float]:
    """Aux values that make the reformulated objective equal the original at binary x."""
    out = {xvar(i): float(x[i]) for i in range(ref.n)}
    z = ref.params.zmat
    if "w" in ref.aux_vars:
        out["w"] = float(x @ z @ x)
    for name in ref.aux_vars:
        if name.startswith("X"):
            i, j = (int(s) for s in name[1:].split("_"))
            out[name] = float(x[i] * x[j])
    if ref.method == QNRE:
        for t, cut in enumerate(ref.vi_cuts):
            A, c, b0 = cut.binary_space()
            k = A.shape[0]
            out[f"v{t}"] = float(0.5 * x[:k] @ A @ x[:k] + c @ x[:k] + b0)
    if ref.method == QNRE_AGG:
        total = 0.0
        for cut in ref.vi_cuts:
            A, c, b0 = cut.binary_space()
            k = A.shape[0]
            g = ref.params.gamma.get(cut.key, 0.0)
            total += g * float(0.5 * x[:k] @ A @ x[:k] + c @ x[:k] + b0)
        out["v"] = total
    return out


@dataclass(frozen=True)
class EquivalenceReport:
    points_tested: int
    max_deviation: float
    failures: tuple[tuple[tuple[int, ...], float], ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def check_equivalence(
    ref: ReformulatedProblem,
    inst: BQPInstance,
    mode: str = "exhaustive",
    rel_tol: float = 1e-9,
    samples: int = 128,
    seed: int = 0,
) -> EquivalenceReport:
    """Compare reformulated and original objectives over binary points.

    Exhaustive mode enumerates all 2^n points (n <= 15); sampled mode draws
    `samples` seeded points. Failures are reported, not raised.
    """
    if mode == "exhaustive":
        if inst.n > 15:
            raise InputError("exhaustive equivalence check limited to n <= 15")
        points = enumerate_binary_points(inst.n)
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        points = (rng.random((samples, inst.n)) < 0.5).astype(np.float64)
    else:
        raise InputError(f"mode must be 'exhaustive' or 'sampled', got {mode!r}")
    max_dev = 0.0
    failures: list[tuple[tuple[int, ...], float]] = []
    for row in points:
        orig = inst.objective(row)
        val = eval_quadform(ref.objective, defining_assignment(ref, row))
        dev = abs(val - orig)
        max_dev = max(max_dev, dev)
        if dev > rel_tol * (1.0 + abs(orig)):
            failures.append((tuple(int(v) for v in row), dev))
    return EquivalenceReport(
        points_tested=len(points), max_deviation=max_dev, failures=tuple(failures)
    )


# ---------------------------------------------------------------------------
# Serialization: a JSON dump with deterministic key order and 17-digit float
# round-tripping, for inspection and cross-run diffing.
# ---------------------------------------------------------------------------


def _quadform_to_dict(f: QuadForm) -> dict:
    triplets = [
        [int(i), int(j), float(f.A[i, j])]
        for i in range(len(f.vars))
        for j in range(i, len(f.vars))
        if f.A[i, j] != 0.0
    ]
    return {
        "vars": list(f.vars),
        "quad_upper": triplets,
        "lin": [float(v) for v in f.b],
        "const": float(f.d),
    }


def _quadform_from_dict(d: dict) -> QuadForm:
    names = tuple(d["vars"])
    k = len(names)
    A = np.zeros((k, k))
    for i, j, v in d["quad_upper"]:
        A[i, j] = v
        A[j, i] = v
    return QuadForm(vars=names, A=A, b=np.array(d["lin"], dtype=np.float64), d=d["const"])


def dump_reformulation(ref: ReformulatedProblem) -> str:
    payload = {
        "method": ref.method,
        "n": ref.n,
        "binary_vars": list(ref.binary_vars),
        "aux_vars": list(ref.aux_vars),
        "objective": _quadform_to_dict(ref.objective),
        "constraints": [
            {
                "form": _quadform_to_dict(c.form),
                "sense": c.sense,
                "convexity": c.convexity,
            }
            for c in ref.constraints
        ],
        "params": {
            "lam": [float(v) for v in ref.params.lam],
            "zmat_upper": [
                [i, j, float(ref.params.zmat[i, j])]
                for i in range(ref.n)
                for j in range(i + 1, ref.n)
                if ref.params.zmat[i, j] != 0.0
            ],
            "gamma": [
                {"family": k[0], "indices": list(k[1]), "variant": k[2], "weight": float(v)}
                for k, v in sorted(ref.params.gamma.items())
            ],
            "source": ref.params.source,
        },
        "vi_cuts": [
            {"family": c.family, "indices": list(c.indices), "variant": c.variant}
            for c in ref.vi_cuts
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_reformulation(text: str) -> ReformulatedProblem:
    d = json.loads(text)
    n = d["n"]
    zmat = np.zeros((n, n))
    for i, j, v in d["params"]["zmat_upper"]:
        zmat[i, j] = zmat[j, i] = v
    gamma = {
        (g["family"], tuple(g["indices"]), g["variant"]): g["weight"]
        for g in d["params"]["gamma"]
    }
    params = ReformParams(
        lam=np.array(d["params"]["lam"], dtype=np.float64),
        zmat=zmat,
        gamma=gamma,
        source=d["params"]["source"],
    )
    cons = tuple(
        Constraint(
            form=_quadform_from_dict(c["form"]),
            sense=c["sense"],
            convexity=c["convexity"],
        )
        for c in d["constraints"]
    )
    vi = tuple(
        cut_by_identity(c["family"], tuple(c["indices"]), c["variant"]) for c in d["vi_cuts"]
    )
    return ReformulatedProblem(
        method=d["method"],
        n=n,
        objective=_quadform_from_dict(d["objective"]),
        constraints=cons,
        binary_vars=tuple(d["binary_vars"]),
        aux_vars=tuple(d["aux_vars"]),
        params=params,
        vi_cuts=vi,
    )
