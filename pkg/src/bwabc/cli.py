"""Command-line entry point: ``bwabc <subcommand> [--config PATH] ...``.

Exit codes: 0 when every check passes, 2 for configuration errors, 3 when a
run completes but misses a tolerance.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import harness
from .harness import ConfigError, ExperimentConfig
from .io import _plain, write_json
from .kmc import KMCError
from .lattice import LatticeError
from .pde import SchemeError
from .thermo import ChemPot, DensityPair, chem_potentials, mobility, mobility_det, mobility_inverse, single_site_moments

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 2, 3
COMMANDS = ("thermo-check", "simulate", "solve", "hydro-verify", "perturbed-verify", "ldp-check")


def thermo_report(n: int = 41, eps: float = 1e-3) -> dict:
    """Roundtrip and identity errors of the single-site thermodynamics on a
    grid covering the interior of I."""
    phi = np.linspace(eps, 1.0 - eps, n)
    s = np.linspace(-1.0 + eps, 1.0 - eps, n)
    P, S = np.meshgrid(phi, s, indexing="ij")
    rho = DensityPair(S * P, P)
    a = chem_potentials(rho)
    back = single_site_moments(ChemPot(a.a1, a.a2))
    roundtrip = float(max(np.max(np.abs(back.m - rho.m)), np.max(np.abs(back.phi - rho.phi))))
    Sg = mobility(rho)
    Si = mobility_inverse(rho)
    inv = float(np.max(np.abs(Sg @ Si - np.eye(2))))
    det = float(np.max(np.abs(np.linalg.det(Sg) - mobility_det(rho))))
    passed = roundtrip <= 1e-10 and inv <= 1e-12 and det <= 1e-12
    return {"points": int(P.size), "roundtrip_max_error": roundtrip, "inverse_max_error": inv,
            "det_max_error": det, "passed": passed}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bwabc", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", type=Path, help="override out.dir")
        p.add_argument("--workers", type=int, help="override run.workers")
    return ap


def load_config(args) -> ExperimentConfig:
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    over = {"run.seed": args.seed, "out.dir": args.out, "run.workers": args.workers}
    return ExperimentConfig.parse(text, overrides={k: v for k, v in over.items() if v is not None})


def run(command: str, cfg: ExperimentConfig) -> tuple[dict, bool]:
    out = Path(cfg["out.dir"])
    if command == "thermo-check":
        rep = thermo_report()
        return rep, rep["passed"]
    if command == "simulate":
        rep = harness.run_simulate(cfg, out)
        return rep, True
    if command == "solve":
        rep = harness.run_solve(cfg, out)
        return rep, rep["valid"]
    if command in ("hydro-verify", "perturbed-verify"):
        if cfg["model.d"] != 1:
            raise ConfigError(["verification pipelines need model.d = 1"])
        fn = harness.run_hydro_verify if command == "hydro-verify" else harness.run_perturbed_verify
        rep = fn(cfg, out)
        return rep, rep["passed"]
    rep = harness.run_ldp_check(cfg, out)
    return rep, rep["passed"]


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report, passed = run(args.command, cfg)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (KMCError, LatticeError, SchemeError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    man = harness.manifest(args.command, cfg, report, started, passed)
    write_json(out / "manifest.json", man)
    print(json.dumps(_plain({k: v for k, v in report.items() if k != "meta"}), indent=2))
    return EXIT_OK if passed else EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
