"""Command-line entry point.

Exit codes: 0 success, 2 the weight LP is infeasible for the requested
background state, 1 any other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from stablelbm.analysis import (
    TEST_CASES,
    convergence_study,
    get_test_case,
    scan_stability_domain,
)
from stablelbm.equilibrium import PRESETS, BackgroundState
from stablelbm.errors import ConfigurationError, Infeasible, StableLBMError
from stablelbm.lattice import VELOCITY_SET_NAMES
from stablelbm.simulator import (
    SimConfig,
    Simulator,
    init_equilibrium_field,
    LatticeField,
    node_coordinates,
    write_raw,
    write_snapshot_csv,
)
from stablelbm.stability import (
    CERT_TOL,
    certify,
    operator_from_file,
    verify_prestability,
    verify_projection,
    write_construction,
)

log = logging.getLogger("stablelbm")

COMMANDS = ("construct", "verify", "simulate", "converge", "scan")
EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    u0: tuple[float, float, float] | None = None
    preset: str | None = None
    rho0: float | None = None
    cs2: float = 1.0 / 3.0
    velocity_set: str = "D3Q33"
    tau: float = 0.5
    allow_unstable: bool = False
    grids: list[int] = field(default_factory=lambda: [32, 64, 128])
    steps: int | None = None
    test_case: int = 1
    final_time: float | None = None
    reference_grid: int | None = None
    init: str = "test_case"
    seed: int = 0
    u01: float = 1.0 / 6.0
    resolution: int = 41
    extent: float = 1.0
    operator: str | None = None
    out: str = "out"
    threads: int = 1
    tolerances: dict = field(default_factory=dict)

    @property
    def cert_tol(self) -> float:
        return float(self.tolerances.get("certification", CERT_TOL))

    def background(self) -> BackgroundState:
        if self.u0 is None:
            raise ConfigurationError(f"command {self.command!r} needs u0 or a preset")
        rho0 = self.rho0
        if rho0 is None:
            rho0 = get_test_case(self.test_case).rho0 if self.command in ("simulate", "converge") else 1.0
        return BackgroundState(rho0, self.u0, self.cs2)


_KNOWN = set(RunConfig.__dataclass_fields__)
_TOLERANCE_KEYS = {"certification"}


def parse_number(value) -> float:
    """Numbers, ``"p/q"`` fractions, optionally suffixed ``"/sqrt3"``."""
    if isinstance(value, bool):
        raise ConfigurationError(f"not a number: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().replace(" ", "")
    scale = 1.0
    if text.endswith("/sqrt3"):
        text, scale = text[: -len("/sqrt3")], 1.0 / math.sqrt(3.0)
    try:
        return float(Fraction(text)) * scale
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"cannot parse number {value!r}") from exc


def _grids(value) -> list[int]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v]
    if isinstance(value, int):
        value = [value]
    return [int(v) for v in value]


def build_config(raw: dict) -> RunConfig:
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    if "command" not in raw or raw["command"] not in COMMANDS:
        raise ConfigurationError(f"command must be one of {COMMANDS}, got {raw.get('command')!r}")
    data = dict(raw)
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        if data.get("u0") is None:
            data["u0"] = PRESETS[preset]
    if data.get("u0") is not None:
        u0 = tuple(parse_number(v) for v in data["u0"])
        if len(u0) != 3 or not all(math.isfinite(v) for v in u0):
            raise ConfigurationError(f"u0 must be three finite numbers, got {data['u0']}")
        data["u0"] = u0
    for key in ("tau", "cs2", "u01", "extent"):
        if key in data:
            data[key] = parse_number(data[key])
    for key in ("rho0", "final_time"):
        if data.get(key) is not None:
            data[key] = parse_number(data[key])
    if "grids" in data:
        data["grids"] = _grids(data["grids"])
    tol = data.get("tolerances") or {}
    bad = sorted(set(tol) - _TOLERANCE_KEYS)
    if bad:
        raise ConfigurationError(f"unknown tolerance keys: {', '.join(bad)}")
    cfg = RunConfig(**data)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if not cfg.tau > 0:
        raise ConfigurationError(f"tau must be positive, got {cfg.tau}")
    if cfg.tau < 0.5 and not cfg.allow_unstable:
        raise ConfigurationError(
            f"tau={cfg.tau} < 1/2: relaxation rates leave [0, 2] and the stability "
            "structure is lost; pass --allow-unstable to run anyway"
        )
    if cfg.velocity_set.upper() not in VELOCITY_SET_NAMES:
        raise ConfigurationError(f"unknown velocity set {cfg.velocity_set!r}")
    if cfg.test_case not in TEST_CASES:
        raise ConfigurationError(f"unknown test case {cfg.test_case}")
    if cfg.init not in ("test_case", "random"):
        raise ConfigurationError(f"init must be 'test_case' or 'random', got {cfg.init!r}")
    if cfg.command in ("construct", "simulate", "converge") and cfg.u0 is None:
        raise ConfigurationError(f"command {cfg.command!r} needs u0 or a preset")
    if cfg.command == "verify" and cfg.u0 is None and cfg.operator is None:
        raise ConfigurationError("verify needs u0, a preset or an operator file")


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file {path} does not exist")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: malformed JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(raw)


# -- commands ------------------------------------------------------------------

def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _certificate_json(c) -> dict:
    cert = c.certificate
    return {
        "velocity_set": c.velocity_set.name,
        "u0": list(c.background.u0),
        "rho0": c.background.rho0,
        "cs2": c.background.cs2,
        "tau": cert.tau,
        "kernel_dimension": int(c.basis.shape[1]),
        "lambda": c.lam.tolist(),
        "symmetrization_residual": cert.symmetrization_residual,
        "idempotency_residual": cert.idempotency_residual,
        "relaxation_rates": list(cert.relaxation_rates),
        "rank_h": cert.rank_h,
        "certified": cert.certified,
        "stable": cert.stable,
    }


def _construct(cfg: RunConfig):
    return certify(cfg.background(), cfg.velocity_set, cfg.tau, cfg.cert_tol)


def cmd_construct(cfg: RunConfig) -> int:
    c = _construct(cfg)
    out = _out_dir(cfg)
    write_construction(out / "operator.txt", c)
    (out / "certificate.json").write_text(json.dumps(_certificate_json(c), indent=2) + "\n")
    cert = c.certificate
    print(f"kernel dimension      {c.basis.shape[1]}")
    print(f"sum(lambda)           {c.lam.sum():.6g}")
    print(f"symmetrization resid  {cert.symmetrization_residual:.3e}")
    print(f"idempotency resid     {cert.idempotency_residual:.3e}")
    print(f"rank(H)               {cert.rank_h}")
    print(f"certified             {cert.certified}")
    return EXIT_OK if cert.certified else EXIT_ERROR


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.operator:
        op, lam, bg = operator_from_file(cfg.operator)
        sym, idem = verify_prestability(op, lam), verify_projection(op)
        report = {"operator": cfg.operator, "symmetrization_residual": sym, "idempotency_residual": idem}
    else:
        c = _construct(cfg)
        sym = c.certificate.symmetrization_residual
        idem = c.certificate.idempotency_residual
        report = _certificate_json(c)
    ok = sym <= cfg.cert_tol and idem <= cfg.cert_tol
    report["passed"] = ok
    (_out_dir(cfg) / "verify.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"symmetrization residual {sym:.3e}  idempotency residual {idem:.3e}  {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_simulate(cfg: RunConfig) -> int:
    c = _construct(cfg)
    n = cfg.grids[0]
    tc = get_test_case(cfg.test_case)
    steps = cfg.steps if cfg.steps is not None else round((cfg.final_time or tc.final_time) * n)
    sim_cfg = SimConfig(n, cfg.tau, c.background, steps, c.operator, c.velocity_set)
    if cfg.init == "random":
        rng = np.random.default_rng(cfg.seed)
        f0 = LatticeField(rng.uniform(-1.0, 1.0, (c.velocity_set.n, n, n, n)))
    else:
        x, y, z = node_coordinates(sim_cfg.shape, n)
        f0 = init_equilibrium_field(sim_cfg, tc.rho_init(x, y, z), tc.u_init(x, y, z))
    f, records = Simulator(sim_cfg).run(f0, c.lam)
    out = _out_dir(cfg)
    with open(out / "monitors.csv", "w") as fh:
        fh.write("step,energy,rho_total,j1_total,j2_total,j3_total\n")
        for k, rec in enumerate(records):
            fh.write(f"{k},{rec['energy']!r}," + ",".join(repr(v) for v in rec["sums"]) + "\n")
    write_snapshot_csv(out / "snapshot.csv", f, c.operator, c.background)
    write_raw(out / "snapshot.bin", f)
    e = [r["energy"] for r in records]
    print(f"{steps} steps on {n}^3; energy {e[0]:.6e} -> {e[-1]:.6e}")
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    report = convergence_study(
        cfg.test_case, cfg.u0, cfg.grids, cfg.final_time, cfg.tau, cfg.velocity_set, cfg.reference_grid
    )
    report.to_csv(_out_dir(cfg) / "convergence.csv")
    for g, e, o in report.rows():
        print(f"{g:6d}  {e:.6e}  {'' if math.isnan(o) else f'{o:.3f}'}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    dm = scan_stability_domain(cfg.u01, cfg.resolution, cfg.extent, cfg.velocity_set, cfg.cs2, cfg.threads)
    dm.to_csv(_out_dir(cfg) / "domain.csv")
    print(f"{int(dm.feasible.sum())} of {dm.feasible.size} cells feasible")
    return EXIT_OK


DISPATCH = {
    "construct": cmd_construct,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "scan": cmd_scan,
}


def dispatch(cfg: RunConfig) -> int:
    try:
        return DISPATCH[cfg.command](cfg)
    except Infeasible as exc:
        print(f"[stability] infeasible: no positive weights for u0={cfg.u0} on {cfg.velocity_set} ({exc})")
        return EXIT_INFEASIBLE
    except StableLBMError as exc:
        print(f"[{type(exc).__module__.split('.')[-1]}] error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablelbm", description=__doc__)
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--u0", help="background velocity, comma separated (fractions and '/sqrt3' allowed)")
    p.add_argument("--grid", help="grid size(s), comma separated")
    p.add_argument("--tau", type=float)
    p.add_argument("--allow-unstable", action="store_true", default=None)
    p.add_argument("--threads", type=int)
    p.add_argument("--velocity-set")
    p.add_argument("--test-case", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--operator", help="operator file for 'verify'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    overrides = {
        "command": args.command,
        "out": args.out,
        "preset": args.preset,
        "u0": args.u0.split(",") if args.u0 else None,
        "grids": args.grid,
        "tau": args.tau,
        "allow_unstable": args.allow_unstable,
        "threads": args.threads,
        "velocity_set": args.velocity_set,
        "test_case": args.test_case,
        "steps": args.steps,
        "operator": args.operator,
    }
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigurationError as exc:
        print(f"[cli] error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
