"""Dense symmetric eigenroutines and the convex QP engine used by every relaxation.

The QP engine wraps cvxopt's cone QP interior-point method behind the
package's model types. It never reports "optimal" without solver
certification; infeasibility is confirmed with an LP probe (HiGHS) so a
diverging QP cannot masquerade as infeasible or vice versa.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers
from scipy.optimize import linprog

from .errors import InputError
from .model import QuadForm, symmetrize_exact

_QP_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-9,
    "reltol": 3e-8,
    "feastol": 1e-9,
    "maxiters": 200,
}

FEAS_TOL = 1e-7
GAP_TOL = 1e-7
DUAL_NEG_TOL = 1e-9


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # orthonormal columns


def eigen_sym(a: np.ndarray) -> EigenResult:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"matrix must be square, got {a.shape}")
    if not np.isfinite(a).all():
        raise InputError("matrix entries must be finite")
    w, v = np.linalg.eigh(symmetrize_exact(a))
    return EigenResult(values=w, vectors=v)


def psd_status(a: np.ndarray, tol: float = 1e-9) -> tuple[bool, float]:
    """(is_psd, smallest eigenvalue); psd iff min_eig >= -tol * (1 + ||A||_2)."""
    if tol < 0:
        raise InputError("tol must be nonnegative")
    res = eigen_sym(a)
    min_eig = float(res.values[0])
    norm2 = float(max(abs(res.values[0]), abs(res.values[-1])))
    return min_eig >= -tol * (1.0 + norm2), min_eig


@dataclass
class QPModel:
    """min p'(P/2)p + q'p + d  s.t.  G p <= h, E p = f, lo <= p <= hi.

    P must be PSD (within psd_status tolerance). `quad_ineqs` optionally
    holds convex quadratic rows g(p) <= 0 of the single-square shape
    alpha*p_i^2 + (linear) <= 0 with alpha > 0; they are lowered to
    second-order-cone rows inside solve_qp.
    """

    names: tuple[str, ...]
    P: np.ndarray
    q: np.ndarray
    d: float = 0.0
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None
    lo: np.ndarray | None = None  # -inf where free
    hi: np.ndarray | None = None  # +inf where free
    quad_ineqs: list[QuadForm] = field(default_factory=list)

    def __post_init__(self):
        k = len(self.names)
        self.P = symmetrize_exact(np.asarray(self.P, dtype=np.float64))
        self.q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        if self.P.shape != (k, k) or self.q.shape != (k,):
            raise InputError("objective dimensions do not match variable list")
        for mat, vec, label in ((self.G, self.h, "inequality"), (self.E, self.f, "equality")):
            if (mat is None) != (vec is None):
                raise InputError(f"{label} matrix and rhs must be given together")
            if mat is not None and (
                np.asarray(mat).ndim != 2
                or np.asarray(mat).shape[1] != k
                or np.asarray(vec).reshape(-1).shape[0] != np.asarray(mat).shape[0]
            ):
                raise InputError(f"{label} constraint dimensions are inconsistent")
        if self.lo is None:
            self.lo = np.full(k, -np.inf)
        if self.hi is None:
            self.hi = np.full(k, np.inf)
        self.lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if self.lo.shape != (k,) or self.hi.shape != (k,):
            raise InputError("bound vectors must match the variable count")

    @property
    def nvars(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class QPSolution:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    point: np.ndarray | None
    value: float | None
    ineq_duals: np.ndarray | None = None  # aligned with model.G rows
    eq_duals: np.ndarray | None = None  # aligned with model.E rows
    bound_duals_lo: np.ndarray | None = None
    bound_duals_hi: np.ndarray | None = None


def _stack_rows(model: QPModel) -> tuple[np.ndarray, np.ndarray, int, list[slice]]:
    """All <=-rows: user G, then finite lower bounds (-p <= -lo), then upper."""
    k = model.nvars
    blocks_g: list[np.ndarray] = []
    blocks_h: list[np.ndarray] = []
    ng = 0
    if model.G is not None and len(model.G):
        blocks_g.append(np.asarray(model.G, dtype=np.float64))
        blocks_h.append(np.asarray(model.h, dtype=np.float64).reshape(-1))
        ng = blocks_g[0].shape[0]
    lo_idx = np.flatnonzero(np.isfinite(model.lo))
    hi_idx = np.flatnonzero(np.isfinite(model.hi))
    if len(lo_idx):
        rows = np.zeros((len(lo_idx), k))
        rows[np.arange(len(lo_idx)), lo_idx] = -1.0
        blocks_g.append(rows)
        blocks_h.append(-model.lo[lo_idx])
    if len(hi_idx):
        rows = np.zeros((len(hi_idx), k))
        rows[np.arange(len(hi_idx)), hi_idx] = 1.0
        blocks_g.append(rows)
        blocks_h.append(model.hi[hi_idx])
    if blocks_g:
        G = np.vstack(blocks_g)
        h = np.concatenate(blocks_h)
    else:
        G = np.zeros((0, k))
        h = np.zeros(0)
    slices = [slice(0, ng), slice(ng, ng + len(lo_idx)), slice(ng + len(lo_idx), len(h))]
    return G, h, ng, slices


def _soc_blocks(model: QPModel) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Lower each convex quadratic row to a 3-dim second-order cone block.

    Supported shape: alpha*v^2 + (linear in p) <= 0 with alpha > 0 for a
    single variable v, i.e. v^2 <= t-expression. Rewritten with
    s = -(linear)/alpha >= v^2 as the cone ||(2v, s-1)|| <= s+1.
    """
    k = model.nvars
    G_rows: list[np.ndarray] = []
    h_rows: list[float] = []
    dims: list[int] = []
    for qf in model.quad_ineqs:
        A = qf.A
        nz = np.flatnonzero(np.abs(np.diag(A)) > 0)
        if len(nz) != 1 or np.any(A - np.diag(np.diag(A))):
            raise InputError("quad_ineqs rows must be single-square convex forms")
        vloc = int(nz[0])
        alpha = 0.5 * A[vloc, vloc]
        if alpha <= 0:
            raise InputError("quad_ineqs rows must have positive curvature")
        col = {name: i for i, name in enumerate(model.names)}
        lin = np.zeros(k)
        for name, coef in zip(qf.vars, qf.b):
            lin[col[name]] += coef
        d0 = qf.d
        vglob = col[qf.vars[vloc]]
        # s = -(lin.p + d0)/alpha ; cone vector u = (s+1, 2v, s-1) = h - G p
        row_s = lin / alpha
        const_s = -d0 / alpha
        g0 = row_s.copy()
        h0 = const_s + 1.0
        g1 = np.zeros(k)
        g1[vglob] = -2.0
        h1 = 0.0
        g2 = row_s.copy()
        h2 = const_s - 1.0
        G_rows.extend([g0, g1, g2])
        h_rows.extend([h0, h1, h2])
        dims.append(3)
    if G_rows:
        return np.vstack(G_rows), np.asarray(h_rows), dims
    return np.zeros((0, k)), np.zeros(0), dims


def _lp_probe_status(model: QPModel) -> str:
    """Classify feasibility of the constraint set with HiGHS (objective 0)."""
    G, h, _, _ = _stack_rows(model)
    k = model.nvars
    res = linprog(
        np.zeros(k),
        A_ub=G if len(G) else None,
        b_ub=h if len(h) else None,
        A_eq=np.asarray(model.E, dtype=np.float64) if model.E is not None and len(model.E) else None,
        b_eq=np.asarray(model.f, dtype=np.float64).reshape(-1)
        if model.f is not None and len(np.atleast_1d(model.f))
        else None,
        bounds=[(None, None)] * k,
        method="highs",
    )
    if res.status == 2:
        return "infeasible"
    return "numerical-failure"


def solve_qp(model: QPModel) -> QPSolution:
    """Solve the convex QP; statuses are certified, never best-guess optimal."""
    k = model.nvars
    if k == 0:
        return QPSolution(status="optimal", point=np.zeros(0), value=model.d)

    G, h, ng, slices = _stack_rows(model)
    Gq, hq, qdims = _soc_blocks(model)
    has_eq = model.E is not None and len(np.atleast_2d(model.E))
    A = np.asarray(model.E, dtype=np.float64) if has_eq else None
    b = np.asarray(model.f, dtype=np.float64).reshape(-1) if has_eq else None

    dims = {"l": len(h), "q": qdims, "s": []}
    Gall = np.vstack([G, Gq]) if len(Gq) else G
    hall = np.concatenate([h, hq]) if len(hq) else h

    kwargs = {}
    if has_eq:
        kwargs = {"A": _cvxmat(A), "b": _cvxmat(b)}
    sol = None
    for kktsolver in (None, "ldl"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                extra = {} if kktsolver is None else {"kktsolver": kktsolver}
                sol = _cvxsolvers.coneqp(
                    _cvxmat(model.P),
                    _cvxmat(model.q),
                    _cvxmat(Gall),
                    _cvxmat(hall),
                    dims=dims,
                    options=_QP_OPTIONS,
                    **kwargs,
                    **extra,
                )
            except (ValueError, ZeroDivisionError, ArithmeticError):
                sol = None
        accepted = _verify_iterate(model, Gall, hall, dims, A, b, sol)
        if accepted is not None:
            p, z, y = accepted
            if not dims["q"]:
                polished = _polish(model, G, h, A, b, p, z)
                if polished is not None:
                    p, zlin_p, y = polished
                    z = np.concatenate([zlin_p, z[len(h):]])
            zlin = np.maximum(z[: len(h)], 0.0)
            return QPSolution(
                status="optimal",
                point=p,
                value=float(0.5 * p @ model.P @ p + model.q @ p + model.d),
                ineq_duals=zlin[slices[0]],
                eq_duals=y,
                bound_duals_lo=_scatter(zlin[slices[1]], np.isfinite(model.lo), k),
                bound_duals_hi=_scatter(zlin[slices[2]], np.isfinite(model.hi), k),
            )

    status = _lp_probe_status(model)
    if status != "infeasible" and not len(hall) and not has_eq:
        # totally unconstrained convex QP that the IPM rejected: flat directions
        status = "unbounded" if _has_descent_ray(model) else "numerical-failure"
    return QPSolution(status=status, point=None, value=None)


def _verify_iterate(model, Gall, hall, dims, A, b, sol):
    """Accept an iterate only if its own residuals certify optimality.

    cvxopt's status label is trusted neither way: an "unknown" iterate that
    satisfies the feasibility and duality-gap contracts is optimal for our
    purposes, and an "optimal" one is re-checked.
    """
    if sol is None or sol.get("x") is None or sol.get("z") is None:
        return None
    p = np.array(sol["x"]).ravel()
    z = np.array(sol["z"]).ravel()
    y = np.array(sol["y"]).ravel() if A is not None else None
    if not (np.isfinite(p).all() and np.isfinite(z).all()):
        return None
    nl = dims["l"]
    scale_h = 1.0 + (float(np.max(np.abs(hall))) if len(hall) else 0.0)
    if nl:
        res_lin = float(np.max(Gall[:nl] @ p - hall[:nl], initial=0.0))
        if res_lin > FEAS_TOL * scale_h:
            return None
    off = nl
    for qd in dims["q"]:
        u = hall[off : off + qd] - Gall[off : off + qd] @ p
        if np.linalg.norm(u[1:]) - u[0] > FEAS_TOL * scale_h:
            return None
        off += qd
    if A is not None and len(A):
        res_eq = float(np.max(np.abs(A @ p - b)))
        if res_eq > FEAS_TOL * (1.0 + float(np.max(np.abs(b)))):
            return None
    value = float(0.5 * p @ model.P @ p + model.q @ p)
    gap = sol.get("gap")
    if gap is None or not np.isfinite(gap) or abs(gap) > GAP_TOL * (1.0 + abs(value)):
        return None
    if len(z) and float(np.min(z[:nl], initial=0.0)) < -DUAL_NEG_TOL:
        return None
    return p, z, y


def _polish(model, G, h, A, b, p, z):
    """Active-set refinement of the IPM iterate.

    Repeatedly solves the equality-constrained KKT system for a working set
    seeded from the iterate's tight rows, dropping the most negative active
    dual and admitting violated rows, until a KKT-certified point emerges
    (feasible to 1e-9, stationary, duals nonnegative). A KKT point of a
    convex QP is globally optimal, so no value comparison is needed; if the
    loop does not settle, the verified interior-point iterate is kept.
    """
    k = model.nvars
    nrows = len(h)
    scale = 1.0 + (float(np.max(np.abs(h))) if nrows else 0.0)
    has_eq = A is not None and len(A)
    Aeq = np.asarray(A, dtype=np.float64) if has_eq else np.zeros((0, k))
    beq = np.asarray(b, dtype=np.float64).reshape(-1) if has_eq else np.zeros(0)
    qscale = 1.0 + float(np.max(np.abs(model.q), initial=0.0))

    slack = h - G @ p if nrows else np.zeros(0)
    zlin = np.maximum(z[:nrows], 0.0)
    # complementarity split: a row is active where its dual dominates its slack
    act = set(np.flatnonzero(zlin * scale > slack).tolist())
    act |= set(np.flatnonzero(slack <= 1e-9 * scale).tolist())

    seen: set[frozenset] = set()
    for _ in range(12):
        key = frozenset(act)
        if key in seen:
            return None  # cycling; keep the IPM iterate
        seen.add(key)
        act_idx = np.array(sorted(act), dtype=np.int64)
        Ga = G[act_idx] if len(act_idx) else np.zeros((0, k))
        Ae = np.vstack([Ga, Aeq])
        be = np.concatenate([h[act_idx] if len(act_idx) else np.zeros(0), beq])
        m = Ae.shape[0]
        K = np.zeros((k + m, k + m))
        K[:k, :k] = model.P
        K[:k, k:] = Ae.T
        K[k:, :k] = Ae
        r = np.concatenate([-model.q, be])
        sol = _kkt_solve(K, r, k)
        if sol is None:
            return None
        p2 = sol[:k]
        mult = sol[k:]
        if not np.isfinite(p2).all() or not np.isfinite(mult).all():
            return None
        if np.max(np.abs(model.P @ p2 + model.q + Ae.T @ mult), initial=0.0) > 1e-7 * qscale:
            return None  # working-set system inconsistent; keep the IPM iterate
        if m and float(np.max(np.abs(Ae @ p2 - be), initial=0.0)) > 1e-8 * scale:
            return None
        mu = mult[: len(act_idx)]
        changed = False
        neg = np.flatnonzero(mu < -1e-9)
        if len(neg):
            for i in neg:
                act.discard(int(act_idx[int(i)]))
            changed = True
        viol = G @ p2 - h if nrows else np.zeros(0)
        bad = np.flatnonzero(viol > 1e-9 * scale)
        new_rows = [int(i) for i in bad if i not in act]
        if new_rows:
            act.update(new_rows)
            changed = True
        if changed:
            continue
        zfull = np.zeros(nrows)
        if len(act_idx):
            zfull[act_idx] = np.maximum(mu, 0.0)
        y2 = mult[len(act_idx):] if has_eq else None
        return p2, zfull, y2
    return None


def _kkt_solve(K: np.ndarray, r: np.ndarray, k: int) -> np.ndarray | None:
    """Solve the (possibly singular) KKT system via a quasi-definite
    regularization, refining against the true matrix; falls back to SVD
    least squares only if refinement stalls."""
    from scipy.linalg import lu_factor, lu_solve

    delta = 1e-10
    n = K.shape[0]
    Kreg = K.copy()
    idx = np.arange(n)
    Kreg[idx[:k], idx[:k]] += delta
    Kreg[idx[k:], idx[k:]] -= delta
    rscale = 1.0 + float(np.max(np.abs(r), initial=0.0))
    try:
        lu = lu_factor(Kreg, check_finite=False)
        sol = lu_solve(lu, r, check_finite=False)
        for _ in range(3):
            res = r - K @ sol
            if float(np.max(np.abs(res), initial=0.0)) <= 1e-12 * rscale:
                break
            sol = sol + lu_solve(lu, res, check_finite=False)
        if (
            np.isfinite(sol).all()
            and float(np.max(np.abs(r - K @ sol), initial=0.0)) <= 1e-8 * rscale
        ):
            return sol
    except (np.linalg.LinAlgError, ValueError):
        pass
    try:
        sol, *_ = np.linalg.lstsq(K, r, rcond=None)
        return sol if np.isfinite(sol).all() else None
    except np.linalg.LinAlgError:
        return None


def _scatter(vals: np.ndarray, mask: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(k)
    out[np.flatnonzero(mask)] = vals
    return out


def _has_descent_ray(model: QPModel) -> bool:
    w, v = np.linalg.eigh(model.P)
    null = v[:, w < 1e-10]
    return bool(len(null.T) and np.any(np.abs(null.T @ model.q) > 1e-9))
