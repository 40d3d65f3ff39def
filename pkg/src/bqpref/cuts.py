"""McCormick and triangle cut families over the lifted pair (x, X), plus separation.

Every cut is a linear form a0 + sum a_i x_i + sum a_ij X_ij required <= 0,
valid at every lifted binary point (X_ij = x_i x_j). Indices are 0-based and
X is addressed on the strict upper triangle only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InputError

MCCORMICK = "mccormick"
TRIANGLE = "triangle"
_FAMILY_RANK = {MCCORMICK: 0, TRIANGLE: 1}


@dataclass(frozen=True)
class Cut:
    family: str
    indices: tuple[int, ...]
    variant: int
    a0: float = field(compare=False)
    x_terms: tuple[tuple[int, float], ...] = field(compare=False)
    xx_terms: tuple[tuple[tuple[int, int], float], ...] = field(compare=False)

    @property
    def key(self) -> tuple:
        return (self.family, self.indices, self.variant)

    def lhs(self, x: np.ndarray, X: np.ndarray) -> float:
        v = self.a0
        for i, a in self.x_terms:
            v += a * x[i]
        for (i, j), a in self.xx_terms:
            v += a * X[i, j]
        return float(v)

    def binary_space(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(A_t, c_t, b_t) of the x-space form x'(A_t/2)x + c_t'x + b_t <= 0.

        Obtained by substituting X_ij -> x_i x_j; A_t is symmetric with zero
        diagonal because cuts never touch X_ii.
        """
        n = max(max((i for i, _ in self.x_terms), default=-1),
                max((max(p) for p, _ in self.xx_terms), default=-1)) + 1
        A = np.zeros((n, n))
        c = np.zeros(n)
        for (i, j), a in self.xx_terms:
            A[i, j] += a
            A[j, i] += a
        for i, a in self.x_terms:
            c[i] += a
        return A, c, self.a0


def mccormick_family(i: int, j: int) -> list[Cut]:
    """The four pair inequalities: X >= 0, X >= x_i + x_j - 1, X <= x_i, X <= x_j."""
    if not 0 <= i < j:
        raise InputError(f"mccormick_family requires 0 <= i < j, got ({i}, {j})")
    p = (i, j)
    return [
        Cut(MCCORMICK, p, 1, 0.0, (), ((p, -1.0),)),
        Cut(MCCORMICK, p, 2, -1.0, ((i, 1.0), (j, 1.0)), ((p, -1.0),)),
        Cut(MCCORMICK, p, 3, 0.0, ((i, -1.0),), ((p, 1.0),)),
        Cut(MCCORMICK, p, 4, 0.0, ((j, -1.0),), ((p, 1.0),)),
    ]


def triangle_family(i: int, j: int, k: int) -> list[Cut]:
    """The four triple inequalities valid on {0,1}^n after lifting."""
    if not 0 <= i < j < k:
        raise InputError(f"triangle_family requires 0 <= i < j < k, got ({i}, {j}, {k})")
    t = (i, j, k)
    ij, ik, jk = (i, j), (i, k), (j, k)
    return [
        Cut(TRIANGLE, t, 1, 0.0, ((i, -1.0),), ((ij, 1.0), (ik, 1.0), (jk, -1.0))),
        Cut(TRIANGLE, t, 2, 0.0, ((j, -1.0),), ((ij, 1.0), (jk, 1.0), (ik, -1.0))),
        Cut(TRIANGLE, t, 3, 0.0, ((k, -1.0),), ((ik, 1.0), (jk, 1.0), (ij, -1.0))),
        Cut(
            TRIANGLE, t, 4, -1.0,
            ((i, 1.0), (j, 1.0), (k, 1.0)),
            ((ij, -1.0), (ik, -1.0), (jk, -1.0)),
        ),
    ]


def cut_by_identity(family: str, indices: tuple[int, ...], variant: int) -> Cut:
    if family == MCCORMICK:
        return mccormick_family(*indices)[variant - 1]
    if family == TRIANGLE:
        return triangle_family(*indices)[variant - 1]
    raise InputError(f"unknown cut family {family!r}")


def violation(cut: Cut, x: np.ndarray, X: np.ndarray) -> float:
    """Left-hand-side value of the cut; positive means violated by that amount."""
    return cut.lhs(np.asarray(x, dtype=np.float64), np.asarray(X, dtype=np.float64))


def _index_tuples(family: str, n: int) -> np.ndarray:
    if family == MCCORMICK:
        iu, ju = np.triu_indices(n, k=1)
        return np.column_stack([iu, ju])
    i, j = np.triu_indices(n, k=1)
    out = []
    for a, b in zip(i, j):
        ks = np.arange(b + 1, n)
        if len(ks):
            out.append(np.column_stack([np.full(len(ks), a), np.full(len(ks), b), ks]))
    if not out:
        return np.zeros((0, 3), dtype=np.int64)
    return np.vstack(out)


def separate(
    families: set[str],
    x: np.ndarray,
    X: np.ndarray,
    viol_tol: float = 1e-6,
    max_cuts: int | None = None,
) -> list[Cut]:
    """Most-violated cuts above viol_tol, violation-descending.

    Exhaustive scan over the selected families; ties are broken by the
    canonical (family, indices, variant) order. max_cuts=None returns every
    violated cut.
    """
    if viol_tol <= 0:
        raise InputError("viol_tol must be positive")
    if max_cuts is not None and max_cuts < 1:
        raise InputError("max_cuts must be >= 1")
    x = np.ascontiguousarray(x, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    candidates: list[tuple[float, int, tuple, int]] = []
    for family in sorted(families, key=lambda f: _FAMILY_RANK.get(f, -1)):
        if family not in _FAMILY_RANK:
            raise InputError(f"unknown cut family {family!r}")
        scan = _kernels.mccormick_violations if family == MCCORMICK else _kernels.triangle_violations
        viols = scan(x, X)
        hits = np.flatnonzero(viols > viol_tol)
        if not len(hits):
            continue
        tuples = _index_tuples(family, x.shape[0])
        for flat in hits:
            ind = tuple(int(v) for v in tuples[flat // 4])
            candidates.append((-float(viols[flat]), _FAMILY_RANK[family], ind, int(flat % 4) + 1))
    candidates.sort()
    if max_cuts is not None:
        candidates = candidates[:max_cuts]
    fam_names = {v: k for k, v in _FAMILY_RANK.items()}
    return [cut_by_identity(fam_names[fr], ind, var) for _, fr, ind, var in candidates]


class CutPool:
    """Insertion-ordered, deduplicated collection of cuts."""

    def __init__(self, cuts: list[Cut] | None = None):
        self._cuts: dict[tuple, Cut] = {}
        for c in cuts or []:
            self.add(c)

    def add(self, cut: Cut) -> bool:
        if cut.key in self._cuts:
            return False
        self._cuts[cut.key] = cut
        return True

    def add_all(self, cuts: list[Cut]) -> int:
        return sum(self.add(c) for c in cuts)

    def __len__(self) -> int:
        return len(self._cuts)

    def __iter__(self):
        return iter(self._cuts.values())

    def __contains__(self, cut: Cut) -> bool:
        return cut.key in self._cuts

    def copy(self) -> "CutPool":
        return CutPool(list(self))

    def by_family(self, family: str) -> list[Cut]:
        return [c for c in self if c.family == family]
