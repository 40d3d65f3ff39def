"""Hot numeric kernels: exhaustive 0-1 enumeration and cut-violation scans.

Each kernel has a numba @njit implementation and a pure-numpy fallback.
The fallback is selected when numba is unavailable or when the environment
variable BQPREF_DISABLE_NUMBA is set to a non-empty value other than "0";
`active_backend()` reports which path is live. Both paths are exercised by
the test suite and compared by benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("BQPREF_DISABLE_NUMBA", "") not in ("", "0")

try:  # pragma: no cover - import guard
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and not _DISABLE


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Exhaustive minimization of x'(Q/2)x + c'x over {0,1}^n.
#
# Points are visited in binary-counter order with bit 0 of the counter mapped
# to x[n-1], so the visit order is lexicographic on (x_1, ..., x_n) and a
# strict-improvement update yields the lexicographically smallest argmin.
# The objective is maintained incrementally: flipping x_k changes the value
# by +-g[k] + qhalf[k,k] where g = Q x + c is updated alongside.
# ---------------------------------------------------------------------------


def _brute_force_py(qhalf: np.ndarray, c: np.ndarray) -> tuple[float, np.ndarray]:
    n = c.shape[0]
    total = 1 << n
    best_val = 0.0
    best_m = 0
    chunk = 1 << 14
    # enumerate in counter order; rows of the chunk matrix follow that order,
    # so the first strict minimum is the lexicographically smallest argmin
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        ms = np.arange(start, stop, dtype=np.int64)
        bits = ((ms[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.float64)
        vals = np.einsum("ij,jk,ik->i", bits, qhalf, bits) + bits @ c
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_m = start + k
    x = ((best_m >> np.arange(n - 1, -1, -1)) & 1).astype(np.float64)
    return best_val, x


def _brute_force_impl(qhalf, c):  # shared body, jitted below
    n = c.shape[0]
    total = 1 << n
    g = c.copy()
    x = np.zeros(n, dtype=np.int64)
    cur = 0.0
    best_val = 0.0
    best_x = np.zeros(n, dtype=np.int64)
    for m in range(1, total):
        mm = m
        k = 0
        while mm & 1 == 0:
            mm >>= 1
            k += 1
        # incrementing the counter flips bits 0..k: trailing ones to 0, bit k to 1
        for b in range(k + 1):
            i = n - 1 - b
            if x[i] == 0:
                cur += g[i] + qhalf[i, i]
                x[i] = 1
                for t in range(n):
                    if t != i:
                        g[t] += 2.0 * qhalf[i, t]
            else:
                cur -= g[i] - qhalf[i, i]
                x[i] = 0
                for t in range(n):
                    if t != i:
                        g[t] -= 2.0 * qhalf[i, t]
        if cur < best_val:
            best_val = cur
            best_x[:] = x
    return best_val, best_x.astype(np.float64)


# ---------------------------------------------------------------------------
# Violation scans.  Both return flat arrays of the <=0 left-hand sides in
# canonical order (index tuple lex-ascending, variant 1..4 within it).
# ---------------------------------------------------------------------------


def _mccormick_violations_py(x: np.ndarray, X: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    xij = X[iu, ju]
    out = np.empty((iu.shape[0], 4))
    out[:, 0] = -xij
    out[:, 1] = x[iu] + x[ju] - 1.0 - xij
    out[:, 2] = xij - x[iu]
    out[:, 3] = xij - x[ju]
    return out.ravel()


def _mccormick_violations_impl(x, X):
    n = x.shape[0]
    out = np.empty(n * (n - 1) * 2)
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            v = X[i, j]
            out[p] = -v
            out[p + 1] = x[i] + x[j] - 1.0 - v
            out[p + 2] = v - x[i]
            out[p + 3] = v - x[j]
            p += 4
    return out


def _triangle_violations_py(x: np.ndarray, X: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    idx = np.array(
        [(i, j, k) for i in range(n) for j in range(i + 1, n) for k in range(j + 1, n)],
        dtype=np.int64,
    ).reshape(-1, 3)
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    xij, xik, xjk = X[i, j], X[i, k], X[j, k]
    out = np.empty((idx.shape[0], 4))
    out[:, 0] = xij + xik - xjk - x[i]
    out[:, 1] = xij + xjk - xik - x[j]
    out[:, 2] = xik + xjk - xij - x[k]
    out[:, 3] = x[i] + x[j] + x[k] - xij - xik - xjk - 1.0
    return out.ravel()


def _triangle_violations_impl(x, X):
    n = x.shape[0]
    m = n * (n - 1) * (n - 2) // 6
    out = np.empty(4 * m)
    p = 0
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                xij = X[i, j]
                xik = X[i, k]
                xjk = X[j, k]
                out[p] = xij + xik - xjk - x[i]
                out[p + 1] = xij + xjk - xik - x[j]
                out[p + 2] = xik + xjk - xij - x[k]
                out[p + 3] = x[i] + x[j] + x[k] - xij - xik - xjk - 1.0
                p += 4
    return out


if USE_NUMBA:
    brute_force_kernel = njit(cache=True)(_brute_force_impl)
    mccormick_violations = njit(cache=True)(_mccormick_violations_impl)
    triangle_violations = njit(cache=True)(_triangle_violations_impl)
else:
    brute_force_kernel = _brute_force_py
    mccormick_violations = _mccormick_violations_py
    triangle_violations = _triangle_violations_py

# always-available references for the cross-backend benchmark and tests
numpy_brute_force = _brute_force_py
numpy_mccormick_violations = _mccormick_violations_py
numpy_triangle_violations = _triangle_violations_py
