"""Periodic stream-collide evolution on a 3D lattice with spacing dx = dt = 1/grid_n.

Densities are stored structure-of-arrays: ``data[i, x, y, z]`` is ``f_i`` at
node ``(x, y, z)``. One step collides at every node and then moves ``f_i`` to
``x + c_i`` with periodic wrap.

A lattice axis may have length 1. Streaming along such an axis is the
identity, so fields that are uniform in that direction evolve exactly as on
the full cube; the convergence studies use this for pseudo-1D data.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from stablelbm.equilibrium import BackgroundState, macro_fields, momentum
from stablelbm.errors import ConfigurationError, InputError, SimulationError
from stablelbm.lattice import VelocitySet
from stablelbm.stability import CollisionOperator

_GATHER_LIMIT = 1 << 23


@dataclass(frozen=True)
class SimConfig:
    grid_n: int
    tau: float
    background: BackgroundState
    steps: int
    operator: CollisionOperator = field(repr=False)
    velocity_set: VelocitySet = field(repr=False)
    shape: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.grid_n < 2 * self.velocity_set.max_displacement + 1:
            raise ConfigurationError(
                f"grid_n={self.grid_n} too small for displacements of "
                f"{self.velocity_set.max_displacement} (need >= {2 * self.velocity_set.max_displacement + 1})"
            )
        if self.steps < 0:
            raise ConfigurationError("steps must be non-negative")
        if self.operator.n != self.velocity_set.n:
            raise ConfigurationError("operator and velocity set sizes differ")
        if not math.isclose(self.operator.tau, self.tau):
            raise ConfigurationError(f"operator was assembled for tau={self.operator.tau}, config has {self.tau}")
        shape = self.shape or (self.grid_n,) * 3
        if shape[0] != self.grid_n or any(s not in (1, self.grid_n) for s in shape):
            raise ConfigurationError(f"lattice shape {shape} must be grid_n or 1 along each axis")
        object.__setattr__(self, "shape", tuple(shape))

    @property
    def dt(self) -> float:
        return 1.0 / self.grid_n


@dataclass
class LatticeField:
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 4:
            raise InputError(f"field data must be (n, nx, ny, nz), got {self.data.shape}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    def copy(self) -> "LatticeField":
        return LatticeField(self.data.copy())


def node_coordinates(shape: tuple[int, int, int], grid_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Broadcastable coordinates ``x_i = i / grid_n`` (no half-cell offset)."""
    axes = [np.arange(s) / grid_n for s in shape]
    return (
        axes[0][:, None, None],
        axes[1][None, :, None],
        axes[2][None, None, :],
    )


def _check(field_: LatticeField, cfg: SimConfig):
    if field_.data.shape != (cfg.velocity_set.n, *cfg.shape):
        raise InputError(f"field shape {field_.data.shape} does not match config {(cfg.velocity_set.n, *cfg.shape)}")


def init_equilibrium_field(cfg: SimConfig, rho_field, u_field) -> LatticeField:
    """Equilibrium densities of the sampled macros ``rho'`` and ``u'`` (components first)."""
    rho = np.broadcast_to(np.asarray(rho_field, dtype=float), cfg.shape)
    u = np.broadcast_to(np.asarray(u_field, dtype=float), (3, *cfg.shape))
    j = momentum(rho, u, cfg.background)
    m = np.concatenate([rho[None], j], axis=0)
    f = np.tensordot(cfg.operator.reduced_equilibrium, m, axes=(1, 0))
    return LatticeField(f)


class Streamer:
    """Periodic shift of each velocity slice by its lattice displacement."""

    def __init__(self, velocities: np.ndarray, shape: tuple[int, int, int]):
        self.velocities = np.asarray(velocities)
        self.shape = tuple(shape)
        n = len(self.velocities)
        self._index = None
        if n * math.prod(self.shape) <= _GATHER_LIMIT:
            grids = np.meshgrid(*[np.arange(s) for s in self.shape], indexing="ij")
            idx = np.empty((n, *self.shape), dtype=np.intp)
            for i, c in enumerate(self.velocities):
                src = [(g - ci) % s for g, ci, s in zip(grids, c, self.shape)]
                idx[i] = np.ravel_multi_index((np.full(self.shape, i), *src), (n, *self.shape))
            self._index = idx

    def __call__(self, data: np.ndarray) -> np.ndarray:
        if self._index is not None:
            return data.reshape(-1)[self._index]
        out = np.empty_like(data)
        for i, c in enumerate(self.velocities):
            out[i] = np.roll(data[i], tuple(int(v) for v in c), axis=(0, 1, 2))
        return out


def collide(data: np.ndarray, op: CollisionOperator) -> np.ndarray:
    n = data.shape[0]
    flat = data.reshape(n, -1)
    m = op.conserved_rows @ flat
    feq = op.reduced_equilibrium @ m
    out = flat * (1.0 - 1.0 / op.tau)
    out += feq / op.tau
    return out.reshape(data.shape)


class Simulator:
    """Holds the streaming tables for one configuration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.stream = Streamer(cfg.velocity_set.velocities, cfg.shape)

    def step(self, field_: LatticeField) -> LatticeField:
        _check(field_, self.cfg)
        return LatticeField(self.stream(collide(field_.data, self.cfg.operator)))

    def run(self, field_: LatticeField, lam: np.ndarray | None = None, monitor: bool = True):
        """Apply ``cfg.steps`` steps; returns the final field and per-step monitors.

        Monitors hold ``steps + 1`` rows (initial state included) of weighted
        energy (when ``lam`` is given), total ``rho'`` and total ``j``.
        """
        _check(field_, self.cfg)
        f = field_.data
        records: list[dict] = []
        if monitor:
            records.append(monitors(f, self.cfg.operator, lam))
        for k in range(1, self.cfg.steps + 1):
            f = self.stream(collide(f, self.cfg.operator))
            if monitor:
                rec = monitors(f, self.cfg.operator, lam)
                records.append(rec)
                bad = not all(math.isfinite(v) for v in rec["sums"])
            else:
                bad = k % 16 == 0 and not np.isfinite(f).all()
            if bad:
                raise SimulationError(f"non-finite densities after step {k} of {self.cfg.steps}")
        if not monitor and not np.isfinite(f).all():
            raise SimulationError("non-finite densities at end of run")
        return LatticeField(f), records


def step(field_: LatticeField, cfg: SimConfig) -> LatticeField:
    return Simulator(cfg).step(field_)


def run(cfg: SimConfig, field_: LatticeField, lam: np.ndarray | None = None, monitor: bool = True):
    return Simulator(cfg).run(field_, lam, monitor)


def _slice_sums(values: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape[0], -1).sum(axis=1)


def weighted_energy(field_: LatticeField | np.ndarray, lam: np.ndarray) -> float:
    """``sum_x sum_i f_i(x)^2 / lam_i``.

    Per-velocity sums are pairwise; the sum over velocities is exact (fsum).
    """
    f = field_.data if isinstance(field_, LatticeField) else np.asarray(field_)
    lam = np.asarray(lam, dtype=float)
    if (lam <= 0).any():
        raise InputError("weights must be positive")
    return math.fsum((_slice_sums(f * f) / lam).tolist())


def conserved_totals(f: np.ndarray, op: CollisionOperator) -> tuple[float, float, float, float]:
    per_velocity = _slice_sums(f)
    return tuple(math.fsum((row * per_velocity).tolist()) for row in op.conserved_rows)


def monitors(f: np.ndarray, op: CollisionOperator, lam: np.ndarray | None) -> dict:
    rec = {"sums": conserved_totals(f, op)}
    if lam is not None:
        rec["energy"] = weighted_energy(f, lam)
    return rec


def field_macros(field_: LatticeField, op: CollisionOperator, bg: BackgroundState):
    """``(rho', u')`` at every node; ``u'`` has the component index first."""
    n = field_.n
    mom = (op.conserved_rows @ field_.data.reshape(n, -1)).reshape(4, *field_.shape)
    return macro_fields(mom[0], mom[1:], bg)


# -- snapshots -----------------------------------------------------------------

def write_snapshot_csv(path: str | Path, field_: LatticeField, op: CollisionOperator, bg: BackgroundState) -> None:
    rho, u = field_macros(field_, op, bg)
    idx = np.indices(field_.shape).reshape(3, -1).T
    cols = np.column_stack([rho.ravel(), u.reshape(3, -1).T])
    with open(path, "w") as fh:
        fh.write("ix,iy,iz,rho,u1,u2,u3\n")
        for (ix, iy, iz), row in zip(idx, cols):
            fh.write(f"{ix},{iy},{iz}," + ",".join(repr(float(v)) for v in row) + "\n")


_RAW_MAGIC = b"SLBM"


def write_raw(path: str | Path, field_: LatticeField) -> None:
    """Little-endian: ``b'SLBM'``, int32 n, nx, ny, nz, then float64 densities
    in (velocity, x, y, z) C order."""
    with open(path, "wb") as fh:
        fh.write(_RAW_MAGIC)
        fh.write(struct.pack("<4i", field_.n, *field_.shape))
        fh.write(np.ascontiguousarray(field_.data, dtype="<f8").tobytes())


def read_raw(path: str | Path) -> LatticeField:
    raw = Path(path).read_bytes()
    if raw[:4] != _RAW_MAGIC:
        raise InputError(f"{path}: not a stablelbm raw field")
    n, nx, ny, nz = struct.unpack("<4i", raw[4:20])
    data = np.frombuffer(raw[20:], dtype="<f8")
    if data.size != n * nx * ny * nz:
        raise InputError(f"{path}: truncated payload")
    return LatticeField(data.reshape(n, nx, ny, nz).astype(float))
