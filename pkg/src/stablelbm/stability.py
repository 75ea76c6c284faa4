"""Partially relative collision operators with a certified stability structure.

Pipeline for a background state ``bg``::

    m1 = build_moment_matrix(vs)                  raw moments
    m3 = build_relative_m3(m1, eq)                consistency rows made relative
    a = constraint_matrix(m3)                     <r_i, r_j>_Lambda = 0 as A lam = 0
    lam = solve_weights_lp(kernel_basis(a))       positive kernel element
    mt = gram_schmidt_tail(m3, lam)               tail rows Lambda-orthogonal to conserved span
    op = assemble_collision(mt, tau)

:func:`certify` runs all of it and checks the residuals of ``J Lam = Lam J^T``
and ``H^2 = H``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from stablelbm.equilibrium import BackgroundState, EquilibriumMap, lee_equilibrium_map
from stablelbm.errors import ConstructionError, Infeasible, InputError
from stablelbm.lattice import (
    MomentMatrix,
    SECOND_MOMENT_PAIRS,
    VelocitySet,
    _roles,
    build_moment_matrix,
    build_velocity_set,
    regularity_check,
)
from stablelbm.linalg import RANK_RTOL, exact_nullspace, exact_rank, numeric_nullspace
from stablelbm.simplex import simplex

CERT_TOL = 1e-10
LP_TOL = 1e-9
GS_RTOL = 1e-12


@dataclass(frozen=True)
class CollisionOperator:
    """BGK collision ``f -> f + (R m_cons - f) / tau`` with ``m_cons = C f``.

    ``reduced_equilibrium`` (``R``) holds the first gamma columns of the
    inverse modified moment matrix, ``conserved_rows`` (``C``) its first gamma
    rows.
    """

    reduced_equilibrium: np.ndarray = field(repr=False)
    conserved_rows: np.ndarray = field(repr=False)
    moment_matrix: MomentMatrix = field(repr=False)
    tau: float
    full_matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.reduced_equilibrium.shape[0]

    @property
    def gamma(self) -> int:
        return self.reduced_equilibrium.shape[1]

    def equilibrium(self, f: np.ndarray) -> np.ndarray:
        m = np.tensordot(self.conserved_rows, f, axes=(1, 0))
        return np.tensordot(self.reduced_equilibrium, m, axes=(1, 0))

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Post-collision densities; ``f`` is ``(n,)`` or ``(n, ...)``."""
        f = np.asarray(f, dtype=float)
        return f + (self.equilibrium(f) - f) / self.tau

    def update_matrix(self) -> np.ndarray:
        """``I + J``: the dense per-node collision map."""
        if self.full_matrix is None:
            raise InputError("full_matrix not materialized")
        return np.eye(self.n) + self.full_matrix


@dataclass(frozen=True)
class StabilityCertificate:
    lam: np.ndarray = field(repr=False)
    symmetrization_residual: float
    idempotency_residual: float
    relaxation_rates: tuple[float, ...]
    tau: float
    rank_h: int
    tolerance: float = CERT_TOL

    @property
    def certified(self) -> bool:
        return (
            bool((self.lam > 0).all())
            and self.symmetrization_residual <= self.tolerance
            and self.idempotency_residual <= self.tolerance
        )

    @property
    def stable(self) -> bool:
        """Pre-stability structure plus tau >= 1/2, i.e. all rates in [0, 2]."""
        return self.certified and self.tau >= 0.5


def _shifted(m1: MomentMatrix, e: np.ndarray, lo: int, hi: int) -> np.ndarray:
    g = m1.gamma
    if e.shape != (hi - lo, g):
        raise InputError(f"equilibrium block has shape {e.shape}, expected {(hi - lo, g)}")
    rows = np.asarray(m1.entries, dtype=float).copy()
    rows[lo:hi] -= e @ rows[:g]
    return rows


def build_relative_m3(m1: MomentMatrix, eq: EquilibriumMap) -> MomentMatrix:
    """Shift only the consistency rows by their equilibrium maps."""
    g, b = m1.gamma, m1.beta
    return m1.with_entries(_shifted(m1, eq.e21, g, g + b))


def build_fully_relative_m2(m1: MomentMatrix, eq: EquilibriumMap) -> MomentMatrix:
    """Shift consistency and tail rows; every non-conserved equilibrium moment vanishes."""
    if eq.e31 is None:
        raise InputError("fully relative construction needs the tail equilibrium map e31")
    g, b, n = m1.gamma, m1.beta, m1.n
    rows = _shifted(m1, eq.e21, g, g + b)
    if eq.e31.shape != (n - g - b, g):
        raise InputError(f"e31 has shape {eq.e31.shape}, expected {(n - g - b, g)}")
    rows[g + b:] -= eq.e31 @ np.asarray(m1.entries[:g], dtype=float)
    return m1.with_entries(rows)


def constraint_matrix(m3: MomentMatrix) -> np.ndarray:
    """Row ``(i, j)`` holds ``r_i * r_j`` elementwise, so ``A @ lam`` lists
    ``<r_i, r_j>_Lambda`` for conserved ``i`` and consistency ``j`` (i-major)."""
    g, b = m3.gamma, m3.beta
    r = m3.entries
    return np.array([r[i] * r[j] for i in range(g) for j in range(g, g + b)])


def kernel_basis(a: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Columns spanning ``ker(a)``.

    Object arrays of exact numbers (ints, Fractions) are eliminated exactly;
    float input goes through full-pivoting Gauss-Jordan.
    """
    a = np.asarray(a)
    if a.dtype == object or np.issubdtype(a.dtype, np.integer):
        vecs = exact_nullspace(a.tolist())
        if not vecs:
            return np.zeros((a.shape[1], 0))
        return np.array([[float(v) for v in vec] for vec in vecs]).T
    return numeric_nullspace(a, rtol)


def exact_kernel_dimension(
    u0_over_sqrt3: Sequence[Fraction], velocity_set: str | VelocitySet = "D3Q33", cs2: Fraction = Fraction(1, 3)
) -> int:
    """``dim ker(A)`` in exact arithmetic for ``u0 = u0_over_sqrt3 / sqrt(3)``.

    Entries of ``A`` lie in Q(sqrt 3). Writing each as ``a + b sqrt3`` and
    embedding it as the rational block ``[[a, 3b], [b, a]]`` doubles the rank,
    so the rank over Q(sqrt 3) is half the rational rank of the block matrix.
    """
    vs = velocity_set if isinstance(velocity_set, VelocitySet) else build_velocity_set(velocity_set)
    m1 = build_moment_matrix(vs)
    g, b = m1.gamma, m1.beta
    ent = [[(Fraction(int(v)), Fraction(0)) for v in row] for row in m1.entries]
    u = [(Fraction(0), Fraction(c) / 3) for c in u0_over_sqrt3]  # q / sqrt3 = (q/3) sqrt3

    def mul(x, y):
        return (x[0] * y[0] + 3 * x[1] * y[1], x[0] * y[1] + x[1] * y[0])

    def add(x, y):
        return (x[0] + y[0], x[1] + y[1])

    def sub(x, y):
        return (x[0] - y[0], x[1] - y[1])

    zero = (Fraction(0), Fraction(0))
    rows = ent[:g]
    for k, (p, q) in enumerate(SECOND_MOMENT_PAIRS):
        # same closed form as lee_equilibrium_map
        coef = [sub((Fraction(cs2) if p == q else Fraction(0), Fraction(0)), mul(u[p], u[q]))]
        coef += [add(u[p] if q == d else zero, u[q] if p == d else zero) for d in range(3)]
        row = []
        for n in range(vs.n):
            v = ent[g + k][n]
            for t in range(g):
                v = sub(v, mul(coef[t], ent[t][n]))
            row.append(v)
        rows.append(row)
    block = []
    for i in range(g):
        for j in range(g, g + b):
            prod = [mul(x, y) for x, y in zip(rows[i], rows[j])]
            block.append([w for a_, b_ in prod for w in (a_, 3 * b_)])
            block.append([w for a_, b_ in prod for w in (b_, a_)])
    rank2 = exact_rank(block)
    return vs.n - rank2 // 2


def solve_weights_lp(basis: np.ndarray, tol: float = LP_TOL) -> np.ndarray:
    """``min sum(lam)`` over ``lam = basis @ alpha`` with ``lam >= 1``.

    The free coordinates ``alpha`` are split into positive and negative parts
    and the ``n`` inequalities get surplus variables.

    Raises
    ------
    Infeasible
        If no kernel element lies in the positive orthant.
    """
    basis = np.asarray(basis, dtype=float)
    n, d = basis.shape
    if d == 0:
        raise Infeasible("kernel is trivial")
    a_eq = np.hstack([basis, -basis, -np.eye(n)])
    obj = basis.sum(axis=0)
    cost = np.concatenate([obj, -obj, np.zeros(n)])
    res = simplex(cost, a_eq, np.ones(n), tol=tol)
    alpha = res.x[:d] - res.x[d:2 * d]
    return basis @ alpha


def separating_vector(a: np.ndarray, tol: float = LP_TOL) -> np.ndarray | None:
    """A vector ``y`` with ``a.T @ y >= 1`` if one exists, else ``None``.

    By Gordan's alternative such ``y`` exists exactly when ``ker(a)`` misses
    the open positive orthant, so it is a checkable certificate of
    infeasibility for :func:`solve_weights_lp`.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    at = a.T
    a_eq = np.hstack([at, -at, -np.eye(n)])
    try:
        res = simplex(np.zeros(2 * m + n), a_eq, np.ones(n), tol=tol)
    except Infeasible:
        return None
    return res.x[:m] - res.x[m:2 * m]


def _lam_inner(x: np.ndarray, y: np.ndarray, lam: np.ndarray) -> float:
    return float(np.sum(x * lam * y))


def conserved_orthogonal_basis(rows: np.ndarray, lam: np.ndarray, rtol: float = GS_RTOL) -> np.ndarray:
    """Lambda-orthogonal, unnormalized basis of the span of ``rows`` (classical
    Gram-Schmidt with one re-orthogonalization pass)."""
    basis: list[np.ndarray] = []
    for r in rows:
        v = np.asarray(r, dtype=float).copy()
        for _ in range(2):
            for o in basis:
                v -= _lam_inner(v, o, lam) / _lam_inner(o, o, lam) * o
        norm2 = _lam_inner(v, v, lam)
        ref = _lam_inner(r, r, lam)
        if norm2 <= (rtol**2) * ref or norm2 == 0.0:
            raise ConstructionError("conserved rows are linearly dependent in the Lambda inner product")
        basis.append(v)
    return np.array(basis)


def gram_schmidt_tail(m3: MomentMatrix, lam: np.ndarray, rtol: float = GS_RTOL) -> MomentMatrix:
    """Project the tail rows onto the Lambda-orthogonal complement of the conserved span."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (m3.n,) or not (lam > 0).all():
        raise InputError("lam must be a positive vector of length n")
    g, b = m3.gamma, m3.beta
    rows = np.asarray(m3.entries, dtype=float)
    ortho = conserved_orthogonal_basis(rows[:g], lam, rtol)
    norms = np.einsum("ij,j,ij->i", ortho, lam, ortho)
    out = rows.copy()
    for i in range(g + b, m3.n):
        v = rows[i].copy()
        for _ in range(2):
            coef = (ortho @ (lam * v)) / norms
            v -= coef @ ortho
        out[i] = v
    mt = m3.with_entries(out)
    if not regularity_check(mt).regular:
        raise ConstructionError("modified moment matrix is singular")
    return mt


def assemble_collision(mt: MomentMatrix, tau: float, materialize: bool = True) -> CollisionOperator:
    if not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    entries = np.asarray(mt.entries, dtype=float)
    try:
        inv = np.linalg.inv(entries)
    except np.linalg.LinAlgError as exc:
        raise ConstructionError("modified moment matrix is singular") from exc
    g = mt.gamma
    r = inv[:, :g].copy()
    c = entries[:g].copy()
    full = None
    if materialize:
        # J = M^-1 (E - I) M / tau with E = diag(I_gamma, 0)
        full = (r @ c - np.eye(mt.n)) / tau
    return CollisionOperator(r, c, mt, float(tau), full)


def verify_prestability(op: CollisionOperator | np.ndarray, lam: np.ndarray) -> float:
    j = op.full_matrix if isinstance(op, CollisionOperator) else np.asarray(op)
    if j is None:
        raise InputError("full_matrix not materialized")
    lam = np.asarray(lam, dtype=float)
    return float(np.abs(j * lam[None, :] - (j * lam[None, :]).T).max())


def projection_matrix(op: CollisionOperator) -> np.ndarray:
    if op.full_matrix is None:
        raise InputError("full_matrix not materialized")
    return np.eye(op.n) + op.tau * op.full_matrix


def verify_projection(op: CollisionOperator) -> float:
    h = projection_matrix(op)
    return float(np.abs(h @ h - h).max())


def relaxation_rates(op: CollisionOperator, decimals: int = 8) -> tuple[float, ...]:
    ev = np.linalg.eigvals(op.full_matrix)
    return tuple(sorted(set(np.round(np.abs(ev), decimals).tolist())))


@dataclass(frozen=True)
class Construction:
    """Every intermediate of the pipeline for one background state."""

    background: BackgroundState
    velocity_set: VelocitySet
    m1: MomentMatrix
    m3: MomentMatrix
    constraint: np.ndarray
    basis: np.ndarray
    lam: np.ndarray
    modified: MomentMatrix
    operator: CollisionOperator
    certificate: StabilityCertificate


def relative_setup(bg: BackgroundState, velocity_set: str | VelocitySet = "D3Q33"):
    vs = velocity_set if isinstance(velocity_set, VelocitySet) else build_velocity_set(velocity_set)
    m1 = build_moment_matrix(vs)
    m3 = build_relative_m3(m1, lee_equilibrium_map(bg))
    return vs, m1, m3


def find_weights(bg: BackgroundState, velocity_set: str | VelocitySet = "D3Q33") -> np.ndarray:
    """Positive weights for ``bg`` or :class:`Infeasible`."""
    _, _, m3 = relative_setup(bg, velocity_set)
    return solve_weights_lp(kernel_basis(constraint_matrix(m3)))


def is_feasible(bg: BackgroundState, velocity_set: str | VelocitySet = "D3Q33") -> bool:
    try:
        find_weights(bg, velocity_set)
    except Infeasible:
        return False
    return True


def certify(
    bg: BackgroundState,
    velocity_set: str | VelocitySet = "D3Q33",
    tau: float = 0.5,
    tol: float = CERT_TOL,
) -> Construction:
    vs, m1, m3 = relative_setup(bg, velocity_set)
    if not regularity_check(m1).regular:
        raise ConstructionError(f"raw moment matrix of {vs.name} is singular")
    a = constraint_matrix(m3)
    basis = kernel_basis(a)
    lam = solve_weights_lp(basis)
    if lam.min() < 1 - LP_TOL:
        raise ConstructionError(f"weight solution violates lam >= 1 (min {lam.min():.3e})")
    mt = gram_schmidt_tail(m3, lam)
    op = assemble_collision(mt, tau)
    h = projection_matrix(op)
    cert = StabilityCertificate(
        lam=lam,
        symmetrization_residual=verify_prestability(op, lam),
        idempotency_residual=verify_projection(op),
        relaxation_rates=relaxation_rates(op),
        tau=float(tau),
        rank_h=int(np.linalg.matrix_rank(h, tol=1e-8)),
        tolerance=tol,
    )
    return Construction(bg, vs, m1, m3, a, basis, lam, mt, op, cert)


# -- plain-text serialization ------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_construction(path: str | Path, c: Construction) -> None:
    """Row-major decimal dump: header lines ``key value...`` then named blocks."""
    op, bg, cert = c.operator, c.background, c.certificate
    lines = [
        "# stablelbm operator v1",
        f"velocity_set {c.velocity_set.name}",
        f"n {op.n}",
        f"gamma {c.modified.gamma}",
        f"beta {c.modified.beta}",
        f"tau {_fmt(op.tau)}",
        "u0 " + " ".join(_fmt(v) for v in bg.u0),
        f"rho0 {_fmt(bg.rho0)}",
        f"cs2 {_fmt(bg.cs2)}",
        f"symmetrization_residual {_fmt(cert.symmetrization_residual)}",
        f"idempotency_residual {_fmt(cert.idempotency_residual)}",
        f"rank_h {cert.rank_h}",
        f"vector lambda {op.n}",
        " ".join(_fmt(v) for v in c.lam),
        f"matrix moment_matrix {op.n} {op.n}",
    ]
    lines += [" ".join(_fmt(v) for v in row) for row in np.asarray(c.modified.entries)]
    lines.append(f"matrix reduced_equilibrium {op.n} {op.gamma}")
    lines += [" ".join(_fmt(v) for v in row) for row in op.reduced_equilibrium]
    Path(path).write_text("\n".join(lines) + "\n")


def read_construction(path: str | Path) -> dict:
    """Parse :func:`write_construction` output into header values and arrays."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    out: dict = {}
    i = 0
    while i < len(lines):
        key, *rest = lines[i].split()
        if key == "vector":
            out[rest[0]] = np.array([float(v) for v in lines[i + 1].split()])
            i += 2
        elif key == "matrix":
            nr = int(rest[1])
            out[rest[0]] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + nr]])
            i += 1 + nr
        else:
            vals = []
            for v in rest:
                try:
                    vals.append(int(v))
                except ValueError:
                    try:
                        vals.append(float(v))
                    except ValueError:
                        vals.append(v)
            out[key] = vals[0] if len(vals) == 1 else tuple(vals)
            i += 1
    return out


def operator_from_file(path: str | Path) -> tuple[CollisionOperator, np.ndarray, BackgroundState]:
    data = read_construction(path)
    n, g, b = data["n"], data["gamma"], data["beta"]
    mt = MomentMatrix(data["moment_matrix"], _roles(n, g, b))
    op = assemble_collision(mt, data["tau"])
    bg = BackgroundState(data["rho0"], data["u0"], data["cs2"])
    return op, data["lambda"], bg


__all__ = [
    "CERT_TOL",
    "CollisionOperator",
    "Construction",
    "StabilityCertificate",
    "assemble_collision",
    "build_fully_relative_m2",
    "build_relative_m3",
    "certify",
    "constraint_matrix",
    "exact_kernel_dimension",
    "find_weights",
    "gram_schmidt_tail",
    "is_feasible",
    "kernel_basis",
    "operator_from_file",
    "read_construction",
    "separating_vector",
    "solve_weights_lp",
    "verify_prestability",
    "verify_projection",
    "write_construction",
]
