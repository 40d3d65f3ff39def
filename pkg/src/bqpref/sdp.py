"""Lifted semidefinite relaxations and the iterative cutting-plane loop.

The relaxation minimizes (Q/2).X + c'x over the moment matrix
[[1, x'], [x, X]] >= 0 with X_ii = x_i and an accumulating pool of linear
cuts on (x, X). The diagonal equalities are eliminated structurally (x_i is
placed at both border and diagonal positions of the moment matrix), so the
free variables are x plus the strict upper triangle of X; the eliminated
equality's dual multiplier reappears as the diagonal of the dual matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers
from cvxopt import spmatrix as _cvxsp

from .cuts import MCCORMICK, TRIANGLE, Cut, CutPool, separate
from .errors import InputError, NumericalFailureError
from .model import BQPInstance, is_diagonal_normalized

_SDP_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-9,
    "reltol": 1e-9,
    "feastol": 1e-9,
    "maxiters": 200,
}

DEFAULT_VIOL_TOL = 1e-6


def default_max_cuts(n: int) -> int:
    return 5 * n


@dataclass(frozen=True)
class SDPRelaxationModel:
    instance: BQPInstance
    pool: CutPool

    @property
    def n(self) -> int:
        return self.instance.n


@dataclass(frozen=True)
class SDPSolution:
    x: np.ndarray
    X: np.ndarray  # full symmetric, diagonal set to x
    value: float
    status: str  # optimal | numerical-failure


@dataclass(frozen=True)
class DualCertificate:
    """Dual data of a lifted relaxation solve.

    sigma is the dual objective (equals the primal value by strong duality).
    lam holds the multipliers of the X_ii = x_i equalities. cut_multipliers
    maps each pooled cut to its nonnegative multiplier; the pair-inequality
    multipliers are also grouped (halved, mirrored) into the zero-diagonal
    matrices M, N, R, S for variants 1..4, and gamma keeps the triangle-cut
    multipliers. qhat/chat/bhat are the reduced stationarity data: the
    bordered matrix [[2*bhat - 2*sigma, chat'], [chat, qhat]] equals twice
    the dual matrix of the conic constraint and is PSD up to solver slack.
    """

    sigma: float
    lam: np.ndarray
    cut_multipliers: dict[tuple, float]
    M: np.ndarray
    N: np.ndarray
    R: np.ndarray
    S: np.ndarray
    gamma: dict[tuple, float]
    qhat: np.ndarray
    chat: np.ndarray
    bhat: float
    omega: np.ndarray  # dual matrix of the conic constraint, (n+1)x(n+1)

    def bordered_matrix(self) -> np.ndarray:
        n = len(self.lam)
        B = np.zeros((n + 1, n + 1))
        B[0, 0] = 2.0 * self.bhat - 2.0 * self.sigma
        B[0, 1:] = self.chat
        B[1:, 0] = self.chat
        B[1:, 1:] = self.qhat
        return B

    def zmat(self) -> np.ndarray:
        return self.M + self.N - self.R - self.S


def build_base_sdp(inst: BQPInstance) -> SDPRelaxationModel:
    """Relaxation with an empty cut pool; requires a diagonal-normalized instance."""
    if not is_diagonal_normalized(inst):
        raise InputError("instance must be diagonal-normalized (Q_ii = 0) before lifting")
    return SDPRelaxationModel(instance=inst, pool=CutPool())


def _pair_index(n: int) -> dict[tuple[int, int], int]:
    out = {}
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            out[(i, j)] = k
            k += 1
    return out


def _assemble(model: SDPRelaxationModel):
    n = model.n
    pidx = _pair_index(n)
    N = n + len(pidx)
    d = n + 1
    inst = model.instance

    g = np.zeros(N)
    g[:n] = inst.c
    for (i, j), k in pidx.items():
        g[k] = inst.Q[i, j]

    cuts = list(model.pool)
    rows = len(cuts)
    Gl = np.zeros((rows, N))
    hl = np.zeros(rows)
    for t, cut in enumerate(cuts):
        hl[t] = -cut.a0
        for i, a in cut.x_terms:
            Gl[t, i] += a
        for p, a in cut.xx_terms:
            Gl[t, pidx[p]] += a

    # LMI columns: moment matrix = E00 + sum_i x_i (E_0i + E_i0 + E_ii)
    #                        + sum_{i<j} X_ij (E_ij + E_ji), column-major vec
    sp_i: list[int] = []
    sp_j: list[int] = []
    sp_v: list[float] = []

    def put(col, r, c_, v):
        sp_i.append(r + c_ * d)
        sp_j.append(col)
        sp_v.append(v)

    for i in range(n):
        put(i, 0, i + 1, -1.0)
        put(i, i + 1, 0, -1.0)
        put(i, i + 1, i + 1, -1.0)
    for (i, j), k in pidx.items():
        put(k, i + 1, j + 1, -1.0)
        put(k, j + 1, i + 1, -1.0)
    Gs = _cvxsp(sp_v, sp_i, sp_j, (d * d, N))
    hs = np.zeros(d * d)
    hs[0] = 1.0
    return g, Gl, hl, Gs, hs, cuts, pidx, N, d


def _solve_conelp(g, Gl, hl, Gs, hs, N, d):
    from cvxopt import sparse as _cvxsparse

    rows = Gl.shape[0]
    if rows:
        Gl_sp = _cvxmat(Gl)
        G = _cvxsparse([Gl_sp, Gs])
        h = _cvxmat(np.concatenate([hl, hs]))
    else:
        G = _cvxsparse([Gs])
        h = _cvxmat(hs)
    dims = {"l": rows, "q": [], "s": [d]}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            sol = _cvxsolvers.conelp(_cvxmat(g), G, h, dims, options=_SDP_OPTIONS)
        except (ValueError, ZeroDivisionError, ArithmeticError) as e:
            raise NumericalFailureError(f"conelp raised {e!r}") from e
    return sol


def solve_sdp(model: SDPRelaxationModel) -> tuple[SDPSolution, DualCertificate]:
    """Solve the lifted relaxation; returns the primal point and dual certificate."""
    n = model.n
    inst = model.instance
    g, Gl, hl, Gs, hs, cuts, pidx, N, d = _assemble(model)
    try:
        sol = _solve_conelp(g, Gl, hl, Gs, hs, N, d)
    except NumericalFailureError:
        empty = np.zeros((n, n))
        return (
            SDPSolution(x=np.zeros(n), X=empty, value=float("nan"), status="numerical-failure"),
            _empty_certificate(n),
        )
    status = sol["status"]
    if status != "optimal":
        # x = X = 0 is always feasible, so infeasibility signals a numerics bug
        if status in ("primal infeasible", "dual infeasible"):
            warnings.warn(
                f"lifted relaxation reported {status}; this model is feasible by "
                "construction, treating as a numerics failure",
                RuntimeWarning,
                stacklevel=2,
            )
        empty = np.zeros((n, n))
        return (
            SDPSolution(x=np.zeros(n), X=empty, value=float("nan"), status="numerical-failure"),
            _empty_certificate(n),
        )

    v = np.array(sol["x"]).ravel()
    z = np.array(sol["z"]).ravel()
    rows = len(cuts)
    eta = np.maximum(z[:rows], 0.0)
    omega = z[rows:].reshape(d, d, order="F")
    omega = 0.5 * (omega + omega.T)

    x = v[:n].copy()
    X = np.zeros((n, n))
    for (i, j), k in pidx.items():
        X[i, j] = X[j, i] = v[k]
    np.fill_diagonal(X, x)
    value = float(g @ v)

    lam = np.diag(omega)[1:].copy()
    M = np.zeros((n, n))
    Nm = np.zeros((n, n))
    R = np.zeros((n, n))
    S = np.zeros((n, n))
    gamma: dict[tuple, float] = {}
    mult: dict[tuple, float] = {}
    for cut, mu in zip(cuts, eta):
        mu = float(mu)
        mult[cut.key] = mu
        if cut.family == MCCORMICK:
            i, j = cut.indices
            target = (M, Nm, R, S)[cut.variant - 1]
            target[i, j] += 0.5 * mu
            target[j, i] += 0.5 * mu
        else:
            gamma[cut.key] = mu

    bhat = 0.0
    for cut in cuts:
        mu = mult[cut.key]
        if cut.family == MCCORMICK and cut.variant == 2:
            bhat += -mu
        elif cut.family != MCCORMICK:
            bhat += mu * cut.a0
    qhat = 2.0 * omega[1:, 1:]
    chat = 2.0 * omega[0, 1:]
    sigma = float(sol["dual objective"])

    cert = DualCertificate(
        sigma=sigma,
        lam=lam,
        cut_multipliers=mult,
        M=M,
        N=Nm,
        R=R,
        S=S,
        gamma=gamma,
        qhat=qhat,
        chat=chat,
        bhat=bhat,
        omega=omega,
    )
    return SDPSolution(x=x, X=X, value=value, status="optimal"), cert


def _empty_certificate(n: int) -> DualCertificate:
    zero = np.zeros((n, n))
    return DualCertificate(
        sigma=float("nan"),
        lam=np.zeros(n),
        cut_multipliers={},
        M=zero.copy(),
        N=zero.copy(),
        R=zero.copy(),
        S=zero.copy(),
        gamma={},
        qhat=zero.copy(),
        chat=np.zeros(n),
        bhat=0.0,
        omega=np.zeros((n + 1, n + 1)),
    )


@dataclass(frozen=True)
class CuttingPlaneResult:
    solution: SDPSolution
    certificate: DualCertificate
    pool: CutPool
    values: tuple[float, ...]  # per-solve objective values, base solve first


def cutting_plane(
    inst: BQPInstance,
    families: set[str],
    iters: int,
    viol_tol: float = DEFAULT_VIOL_TOL,
    max_cuts: int | None = 0,
    initial_pool: CutPool | None = None,
) -> CuttingPlaneResult:
    """Iterative tightening: solve, separate, add, re-solve.

    max_cuts=0 selects the default budget (5n per family per round); None
    adds every violated cut. The final solve's primal, dual, and accumulated
    pool are returned, together with the per-solve value history (monotone
    nondecreasing). The loop exits early when a round separates nothing.
    """
    if iters < 0:
        raise InputError("iters must be >= 0")
    bad = families - {MCCORMICK, TRIANGLE}
    if bad or MCCORMICK not in families:
        raise InputError(
            "families must be {mccormick} or {mccormick, triangle}, got " + repr(families)
        )
    if max_cuts == 0:
        max_cuts = default_max_cuts(inst.n)

    pool = initial_pool.copy() if initial_pool is not None else CutPool()
    model = SDPRelaxationModel(instance=inst, pool=pool)
    solution, cert = solve_sdp(model)
    values = [solution.value]
    if solution.status != "optimal":
        raise NumericalFailureError(
            f"base relaxation solve failed after {len(values)} solves; partial values {values}"
        )

    for _ in range(iters):
        budget = None if max_cuts is None else max_cuts
        new_cuts = []
        for family in sorted(families):
            fam_cuts = separate({family}, solution.x, solution.X, viol_tol, budget)
            new_cuts.extend(c for c in fam_cuts if c not in pool)
        if not new_cuts:
            break
        pool.add_all(new_cuts)
        solution, cert = solve_sdp(model)
        values.append(solution.value)
        if solution.status != "optimal":
            raise NumericalFailureError(
                f"relaxation re-solve failed with {len(pool)} pooled cuts; "
                f"partial values {values}"
            )

    return CuttingPlaneResult(
        solution=solution, certificate=cert, pool=pool, values=tuple(values)
    )
