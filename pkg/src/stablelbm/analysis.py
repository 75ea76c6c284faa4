"""Reference solutions, error norms, convergence studies and the stability-domain scanner."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from stablelbm import modal
from stablelbm.equilibrium import BackgroundState, macro_fields, momentum
from stablelbm.errors import ConfigurationError, Infeasible, InputError
from stablelbm.lattice import VelocitySet, build_velocity_set
from stablelbm.simulator import (
    SimConfig,
    Simulator,
    field_macros,
    init_equilibrium_field,
    node_coordinates,
)
from stablelbm.stability import Construction, certify, is_feasible

SQRT3 = math.sqrt(3.0)

# Default bytes allowed for one direct simulation (densities only).
MEMORY_CAP = 1 << 30


def _zeros_like(x, y, z):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(z)))


def _rho_1(x, y, z):
    return np.cos(4 * np.pi * x) + _zeros_like(x, y, z)


def _u_1(x, y, z):
    zero = _zeros_like(x, y, z)
    return np.stack([5 / SQRT3 * np.cos(2 * np.pi * x) + zero, zero, zero])


def _rho_2(x, y, z):
    p = np.pi
    val = 0.7 * np.sin(2 * p * x) * np.sin(4 * p * x) * np.cos(4 * p * x) * np.cos(8 * p * x)
    return val + _zeros_like(x, y, z)


def _u_2(x, y, z):
    zero = _zeros_like(x, y, z)
    return np.stack([5 / (2 * SQRT3) * np.sin(8 * np.pi * x) * np.cos(2 * np.pi * x) + zero, zero, zero])


PULSE_CENTERS = [(0.5, 0.5, 0.5)] + [
    (a / 20, b / 20, c / 20) for a in (7, 13) for b in (7, 13) for c in (7, 13)
]
PULSE_WIDTH = 100.0


def _periodic_gaussian_1d(x, center: float, images: int = 2):
    x = np.asarray(x, dtype=float)
    return sum(np.exp(-PULSE_WIDTH * (x - center + s) ** 2) for s in range(-images, images + 1))


def _rho_3(x, y, z):
    """Nine Gaussian pulses, summed over periodic images so the data is smooth on the torus."""
    total = 0.0
    for cx, cy, cz in PULSE_CENTERS:
        total = total + _periodic_gaussian_1d(x, cx) * _periodic_gaussian_1d(y, cy) * _periodic_gaussian_1d(z, cz)
    return total + _zeros_like(x, y, z)


def _u_3(x, y, z):
    zero = _zeros_like(x, y, z)
    return np.stack([zero, zero, zero])


@dataclass(frozen=True)
class TestCase:
    id: int
    rho0: float
    rho_init: Callable = field(repr=False)
    u_init: Callable = field(repr=False)
    reference: str
    final_time: float

    __test__ = False  # not a pytest class

    @property
    def pseudo1d(self) -> bool:
        return self.id in (1, 2)

    def background(self, u0: Sequence[float], cs2: float = 1.0 / 3.0) -> BackgroundState:
        return BackgroundState(self.rho0, tuple(u0), cs2)


TEST_CASES = {
    1: TestCase(1, 2 / 5, _rho_1, _u_1, "fourier_exact", 1.0),
    2: TestCase(2, 1 / 5, _rho_2, _u_2, "fourier_exact", 1.0),
    3: TestCase(3, 1 / 5, _rho_3, _u_3, "high_resolution", 0.25),
}


def get_test_case(tc: int | TestCase) -> TestCase:
    if isinstance(tc, TestCase):
        return tc
    if tc not in TEST_CASES:
        raise ConfigurationError(f"unknown test case {tc}; expected 1, 2 or 3")
    return TEST_CASES[tc]


# -- exact solution of the pseudo-1D problems ---------------------------------

def flux_jacobian(bg: BackgroundState, axis: int = 0) -> np.ndarray:
    """Jacobian of the flux along ``axis`` for the state ``(rho', j1, j2, j3)``."""
    u = bg.u0_array
    a = np.zeros((4, 4))
    a[0, 1 + axis] = 1.0
    for comp in range(3):
        # momentum flux Pi[axis, comp]
        a[1 + comp, 0] = (bg.cs2 if comp == axis else 0.0) - u[axis] * u[comp]
        a[1 + comp, 1 + comp] += u[axis]
        a[1 + comp, 1 + axis] += u[comp]
    return a


def evolve_fourier_1d(state: np.ndarray, bg: BackgroundState, t: float, band_tol: float = 1e-12) -> np.ndarray:
    """Exact LEE evolution of periodic x-only data sampled at ``i / M``.

    ``state`` is ``(4, M)`` holding ``rho'`` and ``j``. Each Fourier mode is
    advanced with ``exp(-2 pi i k A_x t)``. Data with content in the upper half
    of the resolvable band is rejected as not band-limited.
    """
    state = np.asarray(state, dtype=float)
    m = state.shape[1]
    spectrum = np.fft.fft(state, axis=1)
    k = np.fft.fftfreq(m, d=1.0 / m)
    mag = np.abs(spectrum).max(axis=0)
    if mag.max() > 0 and (mag[np.abs(k) >= m // 4] > band_tol * mag.max()).any():
        raise ConfigurationError("initial data is not band-limited at this sampling")
    a = flux_jacobian(bg, 0)
    out = np.empty_like(spectrum)
    for idx, kk in enumerate(k):
        if mag[idx] == 0:
            out[:, idx] = 0
            continue
        out[:, idx] = expm(-2j * np.pi * kk * t * a) @ spectrum[:, idx]
    return np.fft.ifft(out, axis=1).real


def exact_pseudo1d(tc: int | TestCase, bg: BackgroundState, t: float, grid_n: int, samples: int = 256):
    """Exact ``(rho', u')`` at nodes ``i / grid_n`` for test cases 1 and 2."""
    tc = get_test_case(tc)
    if not tc.pseudo1d:
        raise ConfigurationError(f"test case {tc.id} has no closed-form solution")
    m = math.lcm(samples, grid_n)
    x = np.arange(m) / m
    zero = np.zeros(1)
    rho = tc.rho_init(x, zero, zero)
    u = tc.u_init(x, zero, zero)
    j = momentum(rho, u, bg)
    state = evolve_fourier_1d(np.vstack([rho[None], j]), bg, t)
    sub = state[:, :: m // grid_n]
    return macro_fields(sub[0], sub[1:], bg)


# -- errors and reports -------------------------------------------------------

def _stack(macros) -> np.ndarray:
    rho, u = macros
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (3, *rho.shape):
        raise InputError(f"velocity shape {u.shape} does not match density shape {rho.shape}")
    return np.concatenate([rho[None], u])


def linf_error(sim_macros, ref_macros) -> float:
    """Max over nodes and the four components ``rho', u'_1, u'_2, u'_3``."""
    a, b = _stack(sim_macros), _stack(ref_macros)
    if a.shape != b.shape:
        raise InputError(f"grid mismatch: {a.shape[1:]} vs {b.shape[1:]}")
    return float(np.abs(a - b).max())


def observed_order(e_coarse: float, e_fine: float, ratio: float = 2.0) -> float:
    if e_fine <= 0 or e_coarse <= 0:
        return math.nan
    return math.log(e_coarse / e_fine) / math.log(ratio)


@dataclass
class ConvergenceReport:
    test_case: int
    u0: tuple[float, float, float]
    final_time: float
    grids: list[int]
    errors: list[float]

    @property
    def orders(self) -> list[float]:
        """``orders[i]`` compares ``grids[i]`` with ``grids[i+1]``."""
        return [
            observed_order(self.errors[i], self.errors[i + 1], self.grids[i + 1] / self.grids[i])
            for i in range(len(self.grids) - 1)
        ]

    def rows(self):
        orders = [math.nan] + self.orders
        return list(zip(self.grids, self.errors, orders))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grid_n", "error", "order"])
            for g, e, o in self.rows():
                w.writerow([g, repr(e), "" if math.isnan(o) else repr(o)])


def simulate_test_case(
    tc: int | TestCase,
    construction: Construction,
    grid_n: int,
    final_time: float | None = None,
    reduced: bool | None = None,
):
    """Run the lattice scheme for a test case; returns ``(rho', u')`` on the lattice.

    Pseudo-1D cases run on a ``grid_n x 1 x 1`` lattice unless ``reduced`` is
    False.
    """
    tc = get_test_case(tc)
    t = tc.final_time if final_time is None else final_time
    steps = round(t * grid_n)
    if not math.isclose(steps, t * grid_n, abs_tol=1e-9):
        raise ConfigurationError(f"final time {t} is not a whole number of steps at grid {grid_n}")
    if reduced is None:
        reduced = tc.pseudo1d
    shape = (grid_n, 1, 1) if reduced else (grid_n,) * 3
    bg = construction.background
    cfg = SimConfig(grid_n, construction.operator.tau, bg, steps, construction.operator, construction.velocity_set, shape)
    x, y, z = node_coordinates(shape, grid_n)
    f0 = init_equilibrium_field(cfg, tc.rho_init(x, y, z), tc.u_init(x, y, z))
    f, _ = Simulator(cfg).run(f0, monitor=False)
    return field_macros(f, construction.operator, bg)


def restrict(macros, factor: int):
    """Node-coincident restriction: keep every ``factor``-th node along each axis of length > 1."""
    rho, u = macros
    sl = tuple(slice(None, None, factor) if s > 1 else slice(None) for s in np.shape(rho))
    return np.asarray(rho)[sl], np.asarray(u)[(slice(None),) + sl]


def highres_reference(
    tc: int | TestCase,
    construction: Construction,
    grid_n_ref: int,
    sample_n: int,
    final_time: float | None = None,
    method: str = "auto",
    memory_cap: int = MEMORY_CAP,
    cutoff: float = 1e-15,
):
    """Lattice solution at ``grid_n_ref`` restricted to the nodes of a ``sample_n`` grid.

    ``method="direct"`` runs the simulator and refuses lattices whose densities
    exceed ``memory_cap`` bytes. ``method="modal"`` evaluates the same lattice
    scheme exactly per Fourier mode (see :mod:`stablelbm.modal`), dropping modes
    whose initial amplitude is below ``cutoff`` relative to the peak.
    ``"auto"`` picks direct when it fits.
    """
    tc = get_test_case(tc)
    t = tc.final_time if final_time is None else final_time
    if grid_n_ref % sample_n:
        raise ConfigurationError(f"reference grid {grid_n_ref} is not a multiple of {sample_n}")
    n = construction.velocity_set.n
    need = n * grid_n_ref**3 * 8
    if method == "auto":
        method = "direct" if need <= memory_cap else "modal"
    if method == "direct":
        if need > memory_cap:
            raise ConfigurationError(
                f"direct reference at {grid_n_ref}^3 needs {need / 2**30:.1f} GiB > cap {memory_cap / 2**30:.1f} GiB"
            )
        fine = simulate_test_case(tc, construction, grid_n_ref, t, reduced=False)
        return restrict(fine, grid_n_ref // sample_n)
    if method != "modal":
        raise ConfigurationError(f"unknown reference method {method!r}")

    steps = round(t * grid_n_ref)
    bg = construction.background
    x, y, z = node_coordinates((grid_n_ref,) * 3, grid_n_ref)
    rho = tc.rho_init(x, y, z)
    u = tc.u_init(x, y, z)
    j = momentum(rho, u, bg)
    spectra = np.empty((4, grid_n_ref, grid_n_ref, grid_n_ref), dtype=complex)
    for comp, fld in enumerate([rho, *j]):
        spectra[comp] = np.fft.fftn(fld) if np.any(fld) else 0.0
    del rho, u, j
    modes = modal.significant_modes(spectra, cutoff)
    coeffs = spectra[(slice(None), *np.mod(modes, grid_n_ref).T)].T
    del spectra
    final = modal.propagate_modes(
        construction.operator, construction.velocity_set.velocities, grid_n_ref, steps, modes, coeffs
    )
    vals = modal.evaluate_on_grid(modes, final, grid_n_ref, sample_n)
    return macro_fields(vals[0], vals[1:], bg)


def convergence_study(
    tc: int | TestCase,
    u0: Sequence[float],
    grids: Sequence[int],
    final_time: float | None = None,
    tau: float = 0.5,
    velocity_set: str | VelocitySet = "D3Q33",
    reference_grid: int | None = None,
    reference_method: str = "auto",
) -> ConvergenceReport:
    """L-infinity errors of the certified scheme on successively refined grids.

    Raises :class:`Infeasible` when no operator can be constructed for ``u0``.
    """
    tc = get_test_case(tc)
    t = tc.final_time if final_time is None else final_time
    construction = certify(tc.background(u0), velocity_set, tau)
    grids = list(grids)
    errors = []
    if tc.pseudo1d:
        for g in grids:
            sim = simulate_test_case(tc, construction, g, t)
            rho_ex, u_ex = exact_pseudo1d(tc, construction.background, t, g)
            errors.append(linf_error(sim, (rho_ex[:, None, None], u_ex[:, :, None, None])))
    else:
        ref_n = reference_grid or 4 * max(grids)
        if ref_n < 4 * max(grids):
            raise ConfigurationError("reference grid must be at least 4x the finest study grid")
        for g in grids:
            sim = simulate_test_case(tc, construction, g, t)
            ref = highres_reference(tc, construction, ref_n, g, t, method=reference_method)
            errors.append(linf_error(sim, ref))
    return ConvergenceReport(tc.id, tuple(construction.background.u0), t, grids, errors)


# -- stability-domain scan ----------------------------------------------------

@dataclass
class DomainMap:
    u01: float
    u02: np.ndarray
    u03: np.ndarray
    feasible: np.ndarray  # feasible[i, j] for (u02[i], u03[j])
    velocity_set: str = "D3Q33"

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u02", "u03", "feasible"])
            for i, a in enumerate(self.u02):
                for j, b in enumerate(self.u03):
                    w.writerow([repr(float(a)), repr(float(b)), int(self.feasible[i, j])])


def scan_stability_domain(
    u01: float,
    resolution: int = 41,
    extent: float = 1.0,
    velocity_set: str = "D3Q33",
    cs2: float = 1.0 / 3.0,
    threads: int = 1,
) -> DomainMap:
    """Feasibility of the weight LP on a ``resolution x resolution`` grid over
    ``(u02, u03)`` in ``[-extent, extent]^2``."""
    if resolution < 2:
        raise ConfigurationError("scan resolution must be at least 2")
    vs = build_velocity_set(velocity_set)
    axis = np.linspace(-extent, extent, resolution)
    cells = [(i, j) for i in range(resolution) for j in range(resolution)]

    def job(cell):
        i, j = cell
        return is_feasible(BackgroundState(1.0, (u01, axis[i], axis[j]), cs2), vs)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, cells))
    else:
        results = [job(c) for c in cells]
    feasible = np.array(results, dtype=bool).reshape(resolution, resolution)
    return DomainMap(float(u01), axis, axis.copy(), feasible, vs.name)


__all__ = [
    "ConvergenceReport",
    "DomainMap",
    "Infeasible",
    "TEST_CASES",
    "TestCase",
    "convergence_study",
    "evolve_fourier_1d",
    "exact_pseudo1d",
    "flux_jacobian",
    "highres_reference",
    "linf_error",
    "restrict",
    "scan_stability_domain",
    "simulate_test_case",
]
