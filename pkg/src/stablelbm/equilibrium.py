"""Target system: isothermal linearized Euler equations in fluctuation variables.

The conserved moments are the density fluctuation ``rho'`` and the momentum
fluctuation ``j = rho0 * u' + u0 * rho'``. Equilibrium second moments are
linear in ``(rho', j)``::

    Pi_ab = u0_a j_b + u0_b j_a + (cs2 delta_ab - u0_a u0_b) rho'
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from stablelbm.errors import ConfigurationError, InputError
from stablelbm.lattice import SECOND_MOMENT_PAIRS, MomentMatrix

CS2_D3Q33 = 1.0 / 3.0

# Background velocities of the published test runs, as (numerator tuple) / sqrt(3).
PRESET_FRACTIONS = {
    "preset-1": (Fraction(3, 20), Fraction(1, 10), Fraction(1, 5)),
    "preset-2": (Fraction(-1, 4), Fraction(1, 4), Fraction(1, 2)),
    "preset-3": (Fraction(2, 5), Fraction(9, 10), Fraction(3, 4)),
    "preset-4": (Fraction(3, 4), Fraction(5, 8), Fraction(1)),
}
PRESETS = {
    name: tuple(float(c) / math.sqrt(3.0) for c in frac) for name, frac in PRESET_FRACTIONS.items()
}


@dataclass(frozen=True)
class BackgroundState:
    rho0: float = 1.0
    u0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    cs2: float = CS2_D3Q33

    def __post_init__(self):
        u0 = tuple(float(v) for v in self.u0)
        if len(u0) != 3 or not all(math.isfinite(v) for v in u0):
            raise ConfigurationError(f"u0 must be three finite numbers, got {self.u0}")
        if not self.rho0 > 0:
            raise ConfigurationError(f"rho0 must be positive, got {self.rho0}")
        if not self.cs2 > 0:
            raise ConfigurationError(f"cs2 must be positive, got {self.cs2}")
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "rho0", float(self.rho0))
        object.__setattr__(self, "cs2", float(self.cs2))

    @property
    def u0_array(self) -> np.ndarray:
        return np.array(self.u0)


@dataclass(frozen=True)
class EquilibriumMap:
    """Equilibrium moments as linear maps of the conserved moments.

    ``e21`` (beta x gamma) gives the consistency moments; ``e31`` the tail
    moments and is only set for fully relative constructions.
    """

    e21: np.ndarray = field(repr=False)
    e31: np.ndarray | None = field(default=None, repr=False)

    @property
    def beta(self) -> int:
        return self.e21.shape[0]

    @property
    def gamma(self) -> int:
        return self.e21.shape[1]


def lee_equilibrium_map(bg: BackgroundState) -> EquilibriumMap:
    u = bg.u0_array
    e21 = np.zeros((6, 4))
    for row, (a, b) in enumerate(SECOND_MOMENT_PAIRS):
        e21[row, 0] = (bg.cs2 if a == b else 0.0) - u[a] * u[b]
        e21[row, 1 + b] += u[a]
        e21[row, 1 + a] += u[b]
    return EquilibriumMap(e21)


def conserved_moments(densities: np.ndarray, m: MomentMatrix) -> tuple[np.ndarray, np.ndarray]:
    """``(rho', j)`` of densities shaped ``(n,)`` or ``(n, ...)``."""
    f = np.asarray(densities, dtype=float)
    if f.shape[:1] != (m.n,):
        raise InputError(f"expected {m.n} densities along axis 0, got shape {f.shape}")
    rows = np.asarray(m.entries[:4], dtype=float)
    mom = np.tensordot(rows, f, axes=(1, 0))
    return mom[0], mom[1:4]


def momentum(rho_prime, u_prime, bg: BackgroundState) -> np.ndarray:
    """``j = rho0 u' + u0 rho'``; ``u_prime`` has the component index first."""
    u_prime = np.asarray(u_prime, dtype=float)
    u0 = bg.u0_array.reshape((3,) + (1,) * (u_prime.ndim - 1))
    return bg.rho0 * u_prime + u0 * np.asarray(rho_prime, dtype=float)


def macro_fields(rho_prime, j, bg: BackgroundState) -> tuple[np.ndarray, np.ndarray]:
    j = np.asarray(j, dtype=float)
    u0 = bg.u0_array.reshape((3,) + (1,) * (j.ndim - 1))
    return np.asarray(rho_prime, dtype=float), (j - u0 * np.asarray(rho_prime)) / bg.rho0
