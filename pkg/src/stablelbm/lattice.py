"""Discrete velocity sets and raw moment matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple, Sequence

import numpy as np

from stablelbm.errors import ConfigurationError, InputError

# c_1 ... c_33 in the published order; every other set is a symmetric subset.
D3Q33_VELOCITIES = (
    (0, 0, 0),
    (-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1),
    (-1, -1, 0), (-1, 1, 0), (1, -1, 0), (1, 1, 0),
    (-1, 0, -1), (-1, 0, 1), (1, 0, -1), (1, 0, 1),
    (0, -1, -1), (0, -1, 1), (0, 1, -1), (0, 1, 1),
    (-1, -1, -1), (-1, -1, 1), (-1, 1, -1), (-1, 1, 1),
    (1, -1, -1), (1, -1, 1), (1, 1, -1), (1, 1, 1),
    (-2, 0, 0), (2, 0, 0), (0, -2, 0), (0, 2, 0), (0, 0, -2), (0, 0, 2),
)

_REST = [0]
_AXIS = list(range(1, 7))
_EDGE = list(range(7, 19))
_CORNER = list(range(19, 27))
_AXIS2 = list(range(27, 33))

_SUBSETS = {
    "D3Q7": _REST + _AXIS,
    "D3Q13": _REST + _EDGE,
    "D3Q15": _REST + _AXIS + _CORNER,
    "D3Q19": _REST + _AXIS + _EDGE,
    "D3Q21": _REST + _EDGE + _CORNER,
    "D3Q27": _REST + _AXIS + _EDGE + _CORNER,
    "D3Q33": list(range(33)),
}

# Rows of the published D3Q33 raw moment matrix: density, momentum, the six
# second moments (xx, xy, xz, yy, yz, zz), then the 23 tail monomials.
D3Q33_EXPONENTS = (
    (0, 0, 0),
    (1, 0, 0), (0, 1, 0), (0, 0, 1),
    (2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2),
    (3, 0, 0), (0, 3, 0), (0, 0, 3),
    (2, 1, 0), (2, 0, 1), (1, 2, 0), (0, 2, 1), (1, 0, 2), (0, 1, 2), (1, 1, 1),
    (4, 0, 0), (0, 4, 0), (0, 0, 4),
    (2, 2, 0), (2, 0, 2), (0, 2, 2),
    (2, 1, 1), (1, 2, 1), (1, 1, 2),
    (2, 2, 1), (2, 1, 2), (1, 2, 2),
    (2, 2, 2),
)

SECOND_MOMENT_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

CONSERVED, CONSISTENCY, TAIL = "conserved", "consistency", "tail"


@dataclass(frozen=True)
class VelocitySet:
    name: str
    velocities: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InputError(f"{self.name}: velocities must be an (n, 3) array")
        keys = [tuple(c) for c in v.tolist()]
        if len(set(keys)) != len(keys):
            raise InputError(f"{self.name}: duplicate velocities")
        lookup = {k: i for i, k in enumerate(keys)}
        try:
            opposite = np.array([lookup[tuple(-c for c in k)] for k in keys])
        except KeyError as exc:
            raise InputError(f"{self.name}: velocity set is not symmetric") from exc
        v.setflags(write=False)
        opposite.setflags(write=False)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "_opposite", opposite)

    @property
    def n(self) -> int:
        return len(self.velocities)

    @property
    def opposite(self) -> np.ndarray:
        """Index of -c_i for every i."""
        return self._opposite

    @property
    def max_displacement(self) -> int:
        return int(np.abs(self.velocities).max())


def build_velocity_set(name: str) -> VelocitySet:
    key = name.upper()
    if key not in _SUBSETS:
        raise ConfigurationError(
            f"unknown velocity set {name!r}; expected one of {sorted(_SUBSETS)}"
        )
    c = np.array(D3Q33_VELOCITIES)[_SUBSETS[key]]
    return VelocitySet(key, c)


VELOCITY_SET_NAMES = tuple(_SUBSETS)


def raw_moment_row(vs: VelocitySet, exponents: Sequence[int]) -> np.ndarray:
    """Weights prod_j c_ij**k_j of the raw moment with the given exponents."""
    k = np.asarray(exponents, dtype=np.int64)
    if k.shape != (3,) or (k < 0).any():
        raise InputError(f"exponents must be three non-negative integers, got {exponents}")
    # numpy integer power gives 0**0 == 1
    return np.prod(vs.velocities**k, axis=1)


@dataclass(frozen=True)
class MomentMatrix:
    """Regular n x n moment matrix with per-row roles.

    ``entries`` is an int64 array for raw moment matrices and float64 once
    equilibrium shifts or orthogonalization have been applied.
    """

    entries: np.ndarray = field(repr=False)
    row_roles: tuple[str, ...]
    exponents: tuple[tuple[int, int, int], ...] | None = None

    def __post_init__(self):
        e = np.array(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise InputError(f"moment matrix must be square, got shape {e.shape}")
        if len(self.row_roles) != e.shape[0]:
            raise InputError("one role per row required")
        roles = tuple(self.row_roles)
        order = {CONSERVED: 0, CONSISTENCY: 1, TAIL: 2}
        if any(r not in order for r in roles):
            raise InputError(f"unknown row role in {set(roles)}")
        if [order[r] for r in roles] != sorted(order[r] for r in roles):
            raise InputError("rows must be ordered conserved, consistency, tail")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "row_roles", roles)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def gamma(self) -> int:
        return self.row_roles.count(CONSERVED)

    @property
    def beta(self) -> int:
        return self.row_roles.count(CONSISTENCY)

    def with_entries(self, entries: np.ndarray) -> "MomentMatrix":
        return MomentMatrix(entries, self.row_roles, self.exponents)


def _roles(n: int, gamma: int, beta: int) -> tuple[str, ...]:
    if gamma + beta > n:
        raise InputError(f"gamma + beta = {gamma + beta} exceeds n = {n}")
    return (CONSERVED,) * gamma + (CONSISTENCY,) * beta + (TAIL,) * (n - gamma - beta)


def default_exponents(vs: VelocitySet) -> tuple[tuple[int, int, int], ...]:
    """Exponent tuples for a raw moment matrix of ``vs``.

    D3Q33 uses the published row order. Other sets keep the ten rows up to
    second order and fill the tail greedily with the lowest-degree monomials
    that increase the rank. The result is regular whenever the first ten rows
    are independent on ``vs``.
    """
    if vs.name == "D3Q33":
        return D3Q33_EXPONENTS
    chosen = list(D3Q33_EXPONENTS[:10])
    rows = [raw_moment_row(vs, k) for k in chosen]
    rank = np.linalg.matrix_rank(np.array(rows, dtype=float))
    if rank < len(chosen):
        raise ConfigurationError(
            f"{vs.name} cannot carry independent moments up to second order (rank {rank} < {len(chosen)})"
        )
    top = 2 * vs.max_displacement + 2
    candidates = sorted(
        (k for k in itertools.product(range(top + 1), repeat=3) if sum(k) > 2),
        key=lambda k: (sum(k), -k[0], -k[1]),
    )
    for k in candidates:
        if len(chosen) == vs.n:
            break
        row = raw_moment_row(vs, k)
        trial = np.linalg.matrix_rank(np.array(rows + [row], dtype=float))
        if trial > rank:
            chosen.append(k)
            rows.append(row)
            rank = trial
    return tuple(chosen)


def build_moment_matrix(
    vs: VelocitySet,
    exponents: Sequence[Sequence[int]] | None = None,
    gamma: int = 4,
    beta: int = 6,
) -> MomentMatrix:
    exps = tuple(tuple(int(v) for v in k) for k in (exponents or default_exponents(vs)))
    if len(exps) != vs.n:
        raise InputError(f"{len(exps)} exponent tuples for {vs.n} velocities")
    entries = np.array([raw_moment_row(vs, k) for k in exps], dtype=np.int64)
    return MomentMatrix(entries, _roles(vs.n, gamma, beta), exps)


def build_m1_d3q33() -> MomentMatrix:
    return build_moment_matrix(build_velocity_set("D3Q33"), D3Q33_EXPONENTS)


def load_golden_m1() -> np.ndarray:
    """The published D3Q33 raw moment matrix as shipped in ``data/m1_d3q33.csv``."""
    text = resources.files("stablelbm").joinpath("data/m1_d3q33.csv").read_text()
    return np.array([[int(v) for v in line.split(",")] for line in text.split()], dtype=np.int64)


class Regularity(NamedTuple):
    regular: bool
    condition: float


def regularity_check(m: MomentMatrix | np.ndarray, rtol: float = 1e-12) -> Regularity:
    a = np.asarray(m.entries if isinstance(m, MomentMatrix) else m, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return Regularity(False, float("inf"))
    regular = bool(s[-1] > rtol * s[0] * max(a.shape))
    return Regularity(regular, float(s[0] / s[-1]) if s[-1] > 0 else float("inf"))
