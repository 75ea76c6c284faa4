"""Elimination kernels shared by the construction code.

Two routes are provided on purpose: floating-point Gauss-Jordan with full
pivoting for production use, and exact elimination (integers or any exact
field such as :class:`fractions.Fraction`) used as an oracle and as a fallback
when the input is rational.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

RANK_RTOL = 1e-10


def bareiss_determinant(rows: Sequence[Sequence[int]]) -> int:
    """Determinant of an integer matrix by fraction-free (Bareiss) elimination."""
    a = [[int(v) for v in r] for r in rows]
    n = len(a)
    if any(len(r) != n for r in a):
        raise ValueError("matrix must be square")
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1] if n else 1


def exact_rref(rows: Sequence[Sequence]) -> tuple[list[list], list[int]]:
    """Reduced row echelon form over an exact field.

    Integers are promoted to :class:`Fraction`; other entries (e.g. sympy
    numbers) are used as given and must support exact ``==``, ``/`` and ``-``.
    Returns the reduced rows and the pivot column indices.
    """
    m = [[Fraction(v) if isinstance(v, int) else v for v in r] for r in rows]
    if not m:
        return [], []
    nrows, ncols = len(m), len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, nrows) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(nrows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return m, pivots


def exact_rank(rows: Sequence[Sequence]) -> int:
    return len(exact_rref(rows)[1])


def exact_nullspace(rows: Sequence[Sequence]) -> list[list]:
    """Basis of the right kernel, one vector per free column."""
    red, pivots = exact_rref(rows)
    ncols = len(rows[0])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -red[r][fc]
        basis.append(v)
    return basis


def numeric_rref(a: np.ndarray, rtol: float = RANK_RTOL) -> tuple[np.ndarray, list[int]]:
    """Gauss-Jordan elimination with full pivoting in double precision.

    A pivot is accepted while its magnitude exceeds ``rtol`` times the first
    (largest) pivot. Returns the reduced matrix, whose leading rows carry the
    identity on the pivot columns, and the pivot columns in elimination order.
    """
    m = np.array(a, dtype=float, copy=True)
    nrows, ncols = m.shape
    pivots: list[int] = []
    active = list(range(ncols))
    first = None
    for r in range(min(nrows, ncols)):
        sub = np.abs(m[r:, active])
        if sub.size == 0:
            break
        i, jj = np.unravel_index(np.argmax(sub), sub.shape)
        val = sub[i, jj]
        if first is None:
            first = val
        if first == 0 or val <= rtol * first:
            break
        c = active.pop(jj)
        m[[r, r + i]] = m[[r + i, r]]
        m[r] /= m[r, c]
        col = m[:, c].copy()
        col[r] = 0.0
        m -= np.outer(col, m[r])
        pivots.append(c)
    return m, pivots


def numeric_nullspace(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Kernel basis (columns) from :func:`numeric_rref`.

    Each basis vector has a unit entry on its own free column and zeros on the
    other free columns.
    """
    a = np.asarray(a, dtype=float)
    ncols = a.shape[1]
    red, pivots = numeric_rref(a, rtol)
    free = [c for c in range(ncols) if c not in pivots]
    basis = np.zeros((ncols, len(free)))
    for k, fc in enumerate(free):
        basis[fc, k] = 1.0
        for r, pc in enumerate(pivots):
            basis[pc, k] = -red[r, fc]
    return basis
