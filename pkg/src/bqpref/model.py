"""Instance representation, file ingestion, random generation, and exact oracles.

An instance is the minimization of x'(Q/2)x + c'x over binary x with Q
symmetric. Maximization inputs are negated on ingestion so everything
downstream works with minimization only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Mapping

import numpy as np

from . import _kernels
from .errors import GuardError, InputError, ParseError, UndefinedGapError

BRUTE_FORCE_GUARD = 30


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def symmetrize_exact(m: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle (diagonal kept) so M == M.T bit-exactly."""
    m = np.asarray(m, dtype=np.float64)
    out = np.triu(m)
    out = out + np.triu(m, k=1).T
    return out


@dataclass(frozen=True)
class InstanceMeta:
    name: str = ""
    sense_original: str = "min"
    density: float | None = None
    seed: int | None = None


@dataclass(frozen=True)
class BQPInstance:
    """Minimize x'(Q/2)x + c'x over x in {0,1}^n; Q symmetric, all data finite."""

    n: int
    Q: np.ndarray
    c: np.ndarray
    meta: InstanceMeta = field(default_factory=InstanceMeta)

    def __post_init__(self):
        if self.n < 1:
            raise InputError(f"n must be >= 1, got {self.n}")
        Q = symmetrize_exact(np.asarray(self.Q, dtype=np.float64))
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if Q.shape != (self.n, self.n):
            raise InputError(f"Q must be {self.n}x{self.n}, got {Q.shape}")
        if c.shape != (self.n,):
            raise InputError(f"c must have length {self.n}, got {c.shape}")
        if not (np.isfinite(Q).all() and np.isfinite(c).all()):
            raise InputError("instance coefficients must be finite")
        object.__setattr__(self, "Q", _frozen(Q))
        object.__setattr__(self, "c", _frozen(c))

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(0.5 * x @ self.Q @ x + self.c @ x)


@dataclass(frozen=True)
class BinaryPoint:
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if not np.all((x == 0.0) | (x == 1.0)):
            raise InputError("BinaryPoint entries must be exactly 0 or 1")
        object.__setattr__(self, "x", _frozen(x))

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.x)


@dataclass(frozen=True)
class QuadForm:
    """One quadratic expression p'(A/2)p + b'p + d over named variables."""

    vars: tuple[str, ...]
    A: np.ndarray
    b: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        k = len(self.vars)
        A = symmetrize_exact(np.asarray(self.A, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if A.shape != (k, k) or b.shape != (k,):
            raise InputError("QuadForm dimensions must match the variable list")
        object.__setattr__(self, "vars", tuple(self.vars))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "d", float(self.d))

    @property
    def is_linear(self) -> bool:
        return not np.any(self.A)


def eval_quadform(f: QuadForm, assignment: Mapping[str, float]) -> float:
    """Evaluate f at a point given as a name -> value mapping."""
    try:
        p = np.array([assignment[v] for v in f.vars], dtype=np.float64)
    except KeyError as e:
        raise InputError(f"assignment is missing variable {e.args[0]!r}") from e
    return float(0.5 * p @ f.A @ p + f.b @ p + f.d)


def normalize_diagonal(inst: BQPInstance) -> BQPInstance:
    """Fold Q's diagonal into c (x_i^2 == x_i on binaries); returns Q with zero diagonal."""
    d = np.diag(inst.Q).copy()
    if not np.any(d):
        return inst
    Q = inst.Q.copy()
    np.fill_diagonal(Q, 0.0)
    return BQPInstance(inst.n, Q, inst.c + 0.5 * d, inst.meta)


def is_diagonal_normalized(inst: BQPInstance) -> bool:
    return not np.any(np.diag(inst.Q))


# ---------------------------------------------------------------------------
# Sparse triple file format.
#
# Line 1: "n m". Then m entry lines "i j v" with 1-based indices, i <= j.
# An off-diagonal entry (i < j) sets Q_ij = Q_ji = v, so x'(Q/2)x picks up
# v*x_i*x_j. A diagonal entry adds v to c_i (x_i^2 == x_i on binaries).
# '#'-prefixed lines are comments; blank lines are skipped; LF or CRLF.
# ---------------------------------------------------------------------------


def parse_instance(text: str | bytes | IO, sense: str = "min", name: str = "") -> BQPInstance:
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if sense not in ("min", "max"):
        raise InputError(f"sense must be 'min' or 'max', got {sense!r}")

    lines = text.splitlines()
    data_lines: list[tuple[int, str]] = []
    for lineno, raw in enumerate(lines, start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        data_lines.append((lineno, s))
    if not data_lines:
        raise ParseError("empty file: missing 'n m' header")

    lineno, header = data_lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise ParseError(f"header must be 'n m', got {header!r}", lineno)
    try:
        n, m = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError(f"non-integer header token in {header!r}", lineno) from None
    if n < 1 or m < 0:
        raise ParseError(f"invalid header values n={n} m={m}", lineno)
    if len(data_lines) - 1 != m:
        raise ParseError(
            f"header declares {m} entries but file has {len(data_lines) - 1}", lineno
        )

    Q = np.zeros((n, n))
    c = np.zeros(n)
    seen: set[tuple[int, int]] = set()
    for lineno, s in data_lines[1:]:
        parts = s.split()
        if len(parts) != 3:
            raise ParseError(f"entry must be 'i j v', got {s!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[2])
        except ValueError:
            raise ParseError(f"non-numeric token in {s!r}", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError(f"index out of [1, {n}] in {s!r}", lineno)
        if i > j:
            raise ParseError(f"entries must have i <= j, got ({i}, {j})", lineno)
        if not np.isfinite(v):
            raise ParseError(f"non-finite value in {s!r}", lineno)
        if (i, j) in seen:
            raise ParseError(f"duplicate entry ({i}, {j})", lineno)
        seen.add((i, j))
        if i == j:
            c[i - 1] += v
        else:
            Q[i - 1, j - 1] = v
            Q[j - 1, i - 1] = v

    if sense == "max":
        Q = -Q
        c = -c
    meta = InstanceMeta(name=name, sense_original=sense)
    return BQPInstance(n, Q, c, meta)


def _fmt_value(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_instance(inst: BQPInstance) -> str:
    """Serialize in the sparse triple format (stored minimization coefficients).

    Diagonal entries carry c_i + Q_ii/2 so that parsing the output with
    sense='min' reproduces the instance up to diagonal normalization; for a
    diagonal-normalized instance the round-trip is exact.
    """
    entries: list[tuple[int, int, float]] = []
    for i in range(inst.n):
        v = inst.c[i] + 0.5 * inst.Q[i, i]
        if v != 0.0:
            entries.append((i + 1, i + 1, v))
    for i in range(inst.n):
        for j in range(i + 1, inst.n):
            if inst.Q[i, j] != 0.0:
                entries.append((i + 1, j + 1, inst.Q[i, j]))
    entries.sort()
    out = ["# bqpref instance; stored as minimization", f"{inst.n} {len(entries)}"]
    for i, j, v in entries:
        out.append(f"{i} {j} {_fmt_value(v)}")
    return "\n".join(out) + "\n"


def generate_pardalos(n: int, density: float, seed: int) -> BQPInstance:
    """Random instance with integer half-coefficients.

    For each pair i < j, with probability `density` the entry (Q/2)_ij is a
    uniform integer in {-50, ..., 50}, else 0; (Q/2)_ii is a uniform integer
    in {-100, ..., 100}; c = 0. Deterministic for fixed (n, density, seed):
    the PCG64 stream is seeded from (seed, n, round(density * 1e6)) and draws
    the pair selectors first, then the pair values, then the diagonal.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if not (0.0 <= density <= 1.0):
        raise InputError(f"density must be in [0, 1], got {density}")
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed), int(n), int(round(density * 1e6))]))
    )
    npairs = n * (n - 1) // 2
    keep = rng.random(npairs) < density
    vals = rng.integers(-50, 51, size=npairs).astype(np.float64)
    diag = rng.integers(-100, 101, size=n).astype(np.float64)
    half = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    half[iu, ju] = np.where(keep, vals, 0.0)
    half = half + half.T
    np.fill_diagonal(half, diag)
    meta = InstanceMeta(
        name=f"pardalos-n{n}-d{density:g}-s{seed}", density=float(density), seed=int(seed)
    )
    return BQPInstance(n, 2.0 * half, np.zeros(n), meta)


def brute_force(
    inst: BQPInstance, guard: int = BRUTE_FORCE_GUARD
) -> tuple[float, BinaryPoint]:
    """Exact optimum by exhaustive enumeration; ties go to the lex-smallest point."""
    if inst.n > guard:
        raise GuardError(
            f"brute_force refused: n={inst.n} exceeds guard {guard} (2^n enumeration)"
        )
    qhalf = 0.5 * inst.Q
    val, x = _kernels.brute_force_kernel(np.ascontiguousarray(qhalf), inst.c.copy())
    return float(val), BinaryPoint(x)


def relative_gap(v_star: float, lower: float) -> float:
    """Remark-3-style gap (v* - lower) / |v*|; v* == 0 signals undefined."""
    if v_star == 0.0:
        raise UndefinedGapError("relative gap undefined for v* = 0; report absolute gap")
    return (v_star - lower) / abs(v_star)


def enumerate_binary_points(n: int) -> np.ndarray:
    """All 2^n binary rows in lexicographic order (x_1 is the most significant bit)."""
    ms = np.arange(1 << n, dtype=np.int64)
    return ((ms[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.float64)
