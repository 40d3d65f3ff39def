"""Solver-side lower-bound emulation: fixing substitution, convexity
classification, linearization of nonconvex quadratics through pair variables,
envelope inequalities with the same-sign reduction, and the box relaxation.

The pipeline mirrors how a general-purpose solver treats a mixed-binary
quadratic model at a node: fixed binaries become constants (products with a
fixed side collapse to linear terms, so no pair variable is spawned for
them), free binaries relax to [0,1], convex quadratics stay quadratic,
nonconvex ones are rewritten over pair variables X_ij bounded by the four
envelope inequalities. When every coefficient on some X_ij shares one sign,
only the binding-side pair of envelope inequalities is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundUnavailableError, BuildError, InputError
from .model import QuadForm
from .numerics import QPModel, QPSolution, psd_status, solve_qp
from .reform import Constraint, ReformulatedProblem, xvar

PSD_TOL = 1e-6


@dataclass(frozen=True)
class Fixings:
    """Partial assignment of binary variables (0-based index -> 0/1)."""

    values: tuple[tuple[int, int], ...] = ()

    @staticmethod
    def of(mapping: dict[int, int] | None) -> "Fixings":
        if not mapping:
            return Fixings()
        items = sorted(mapping.items())
        for i, v in items:
            if v not in (0, 1):
                raise InputError(f"fixing value must be 0 or 1, got x{i}={v}")
        if len({i for i, _ in items}) != len(items):
            raise InputError("conflicting duplicate fixings")
        return Fixings(tuple(items))

    def as_dict(self) -> dict[int, int]:
        return dict(self.values)

    def with_fixed(self, i: int, v: int) -> "Fixings":
        d = self.as_dict()
        if d.get(i, v) != v:
            raise InputError(f"conflicting fixing for x{i}")
        d[i] = v
        return Fixings.of(d)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class RelaxedModel:
    qp: QPModel
    free_binary: tuple[str, ...]  # names of still-free binary variables
    pair_vars: dict[str, tuple[int, int]]  # introduced X name -> (i, j)
    diag_vars: dict[str, int]  # introduced X_ii name -> i


def classify_convexity(q: QuadForm) -> str:
    """linear | convex | nonconvex, judged on the <= 0 orientation."""
    if q.is_linear:
        return "linear"
    ok, _ = psd_status(q.A, PSD_TOL)
    return "convex" if ok else "nonconvex"


def _substitute(form: QuadForm, fixed: dict[str, float]) -> QuadForm:
    """Substitute fixed variables; products with a fixed side turn linear."""
    keep = [i for i, v in enumerate(form.vars) if v not in fixed]
    gone = [i for i, v in enumerate(form.vars) if v in fixed]
    if not gone:
        return form
    z = np.array([fixed[form.vars[i]] for i in gone])
    A = form.A
    b = form.b
    kk = np.ix_(keep, keep)
    kg = np.ix_(keep, gone)
    gg = np.ix_(gone, gone)
    new_b = b[keep] + A[kg] @ z
    new_d = form.d + float(b[gone] @ z) + 0.5 * float(z @ A[gg] @ z)
    return QuadForm(
        vars=tuple(form.vars[i] for i in keep), A=A[kk], b=new_b, d=new_d
    )


def _pairvar_name(i: int, j: int) -> str:
    return f"X{i}_{j}" if i < j else f"X{j}_{i}"


def _diagvar_name(i: int) -> str:
    return f"Xd{i}"


class _Assembler:
    """Accumulates linear rows / quadratic pieces over a growing variable set."""

    def __init__(self, binary_names: list[str]):
        self.order: list[str] = list(binary_names)
        self.index: dict[str, int] = {v: k for k, v in enumerate(self.order)}
        self.rows: list[tuple[dict[str, float], float]] = []  # lin <= const
        self.eq_rows: list[tuple[dict[str, float], float]] = []
        self.pair_vars: dict[str, tuple[int, int]] = {}
        self.diag_vars: dict[str, int] = {}
        self.pair_signs: dict[str, set[int]] = {}  # sign set: {-1, +1}
        self.quad_ineqs: list[QuadForm] = []

    def var(self, name: str) -> int:
        if name not in self.index:
            self.index[name] = len(self.order)
            self.order.append(name)
        return self.index[name]

    def note_sign(self, name: str, coef: float, equality: bool):
        s = self.pair_signs.setdefault(name, set())
        if coef > 0:
            s.add(1)
        elif coef < 0:
            s.add(-1)
        if equality and coef != 0:
            s.update((-1, 1))

    def linearize(
        self, form: QuadForm, binary_pos: dict[str, int], equality: bool
    ) -> tuple[dict[str, float], float]:
        """Rewrite p'(A/2)p + b'p + d over (x, X); returns (coeffs, const)."""
        coeffs: dict[str, float] = {}
        for name, coef in zip(form.vars, form.b):
            if coef != 0.0:
                coeffs[name] = coeffs.get(name, 0.0) + coef
        nloc = len(form.vars)
        for a in range(nloc):
            for bcol in range(a, nloc):
                aval = form.A[a, bcol]
                if aval == 0.0:
                    continue
                va, vb = form.vars[a], form.vars[bcol]
                if va not in binary_pos or vb not in binary_pos:
                    raise BuildError(
                        f"quadratic term on non-binary variables ({va}, {vb}) "
                        "cannot be linearized"
                    )
                if a == bcol:
                    name = _diagvar_name(binary_pos[va])
                    self.var(name)
                    self.diag_vars[name] = binary_pos[va]
                    coeffs[name] = coeffs.get(name, 0.0) + 0.5 * aval
                else:
                    i, j = binary_pos[va], binary_pos[vb]
                    name = _pairvar_name(i, j)
                    self.var(name)
                    self.pair_vars[name] = (min(i, j), max(i, j))
                    # A is symmetric; the (a,b) and (b,a) cells together give
                    # aval * x_a * x_b, i.e. coefficient aval on X_ij
                    coeffs[name] = coeffs.get(name, 0.0) + aval
                    self.note_sign(name, aval, equality)
        return coeffs, form.d


def build_relaxation(
    ref: ReformulatedProblem,
    fix: Fixings | dict[int, int] | None = None,
    use_reduction: bool = True,
) -> RelaxedModel:
    """Box relaxation of the reformulation under the given fixings."""
    if isinstance(fix, dict) or fix is None:
        fix = Fixings.of(fix)
    fixed_idx = fix.as_dict()
    for i in fixed_idx:
        if not 0 <= i < ref.n:
            raise InputError(f"fixing index {i} out of range for n={ref.n}")
    fixed = {xvar(i): float(v) for i, v in fixed_idx.items()}

    free_binary = [xvar(i) for i in range(ref.n) if i not in fixed_idx]
    binary_pos = {xvar(i): i for i in range(ref.n)}
    asm = _Assembler(free_binary)

    objective = _substitute(ref.objective, fixed)
    obj_kind = classify_convexity(objective)
    if obj_kind == "nonconvex":
        raise BuildError("objective must be certified convex before relaxation")
    for name in objective.vars:  # register aux vars appearing in the objective
        asm.var(name)

    kept_quadratic: list[tuple[QuadForm, str]] = []
    linearized: list[tuple[QuadForm, str]] = []
    for con in ref.constraints:
        form = _substitute(con.form, fixed)
        kind = classify_convexity(form)
        if con.sense == "==":
            if kind == "linear":
                coeffs = dict(zip(form.vars, form.b))
                asm.eq_rows.append(({k: v for k, v in coeffs.items() if v != 0.0}, -form.d))
                for name in form.vars:
                    asm.var(name)
            else:
                linearized.append((form, "=="))
        else:
            if kind == "linear":
                coeffs = dict(zip(form.vars, form.b))
                asm.rows.append(({k: v for k, v in coeffs.items() if v != 0.0}, -form.d))
                for name in form.vars:
                    asm.var(name)
            elif kind == "convex":
                kept_quadratic.append((form, "<="))
            else:
                linearized.append((form, "<="))

    for form, sense in linearized:
        coeffs, const = asm.linearize(form, binary_pos, equality=(sense == "=="))
        if sense == "==":
            asm.eq_rows.append((coeffs, -const))
        else:
            asm.rows.append((coeffs, -const))

    # envelope rows for introduced pair variables
    for name, (i, j) in sorted(asm.pair_vars.items(), key=lambda kv: kv[1]):
        xi, xj = xvar(i), xvar(j)
        signs = asm.pair_signs.get(name, {-1, 1})
        lower = [({name: -1.0}, 0.0), ({xi: 1.0, xj: 1.0, name: -1.0}, 1.0)]
        upper = [({name: 1.0, xi: -1.0}, 0.0), ({name: 1.0, xj: -1.0}, 0.0)]
        if use_reduction and signs == {1}:
            chosen = lower
        elif use_reduction and signs == {-1}:
            chosen = upper
        else:
            chosen = lower + upper
        asm.rows.extend(chosen)

    # diagonal lifts keep their convex side quadratic: x_i^2 <= Xd_i <= x_i
    for name, i in sorted(asm.diag_vars.items(), key=lambda kv: kv[1]):
        xi = xvar(i)
        q = QuadForm(
            vars=(xi, name), A=np.array([[2.0, 0.0], [0.0, 0.0]]),
            b=np.array([0.0, -1.0]), d=0.0,
        )
        asm.quad_ineqs.append(q)
        asm.rows.append(({name: 1.0, xi: -1.0}, 0.0))

    names = tuple(asm.order)
    k = len(names)
    pos = asm.index
    P = np.zeros((k, k))
    q = np.zeros(k)
    for a, va in enumerate(objective.vars):
        q[pos[va]] += objective.b[a]
        for b2, vb in enumerate(objective.vars):
            P[pos[va], pos[vb]] += objective.A[a, b2]

    G_rows = []
    h_vals = []
    for coeffs, rhs in asm.rows:
        if not coeffs:
            if rhs >= 0.0:  # vacuous row fully resolved by fixings
                continue
        row = np.zeros(k)
        for nm, cv in coeffs.items():
            row[pos[nm]] = cv
        G_rows.append(row)
        h_vals.append(rhs)
    E_rows = []
    f_vals = []
    for coeffs, rhs in asm.eq_rows:
        if not coeffs and rhs == 0.0:
            continue
        row = np.zeros(k)
        for nm, cv in coeffs.items():
            row[pos[nm]] = cv
        E_rows.append(row)
        f_vals.append(rhs)

    lo = np.full(k, -np.inf)
    hi = np.full(k, np.inf)
    for nm in free_binary:
        lo[pos[nm]] = 0.0
        hi[pos[nm]] = 1.0

    qp = QPModel(
        names=names,
        P=P,
        q=q,
        d=objective.d,
        G=np.array(G_rows) if G_rows else None,
        h=np.array(h_vals) if h_vals else None,
        E=np.array(E_rows) if E_rows else None,
        f=np.array(f_vals) if f_vals else None,
        lo=lo,
        hi=hi,
        quad_ineqs=asm.quad_ineqs,
    )
    return RelaxedModel(
        qp=qp,
        free_binary=tuple(free_binary),
        pair_vars=dict(asm.pair_vars),
        diag_vars=dict(asm.diag_vars),
    )


def bound(
    ref: ReformulatedProblem,
    fix: Fixings | dict[int, int] | None = None,
    use_reduction: bool = True,
) -> float:
    """Relaxation optimum for the fixed subproblem (a valid lower bound)."""
    _, sol = relax_and_solve(ref, fix, use_reduction)
    return float(sol.value)


def relax_and_solve(
    ref: ReformulatedProblem,
    fix: Fixings | dict[int, int] | None = None,
    use_reduction: bool = True,
) -> tuple[RelaxedModel, QPSolution]:
    """build_relaxation + solve_qp; raises BoundUnavailableError on failure."""
    model = build_relaxation(ref, fix, use_reduction)
    sol = solve_qp(model.qp)
    if sol.status != "optimal":
        raise BoundUnavailableError(
            f"relaxation solve ended with status {sol.status!r}"
        )
    return model, sol
