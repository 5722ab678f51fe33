"""Command-line entry point: ``formation-isac <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import config, experiments, selftest
from .beamform import BeamformInfeasible


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="YAML scenario document (defaults to the built-in scenario)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--grid", type=str, default=None,
                        help="grid spec x0:x1:nx,y0:y1:ny (upwash-map)")

    ap = argparse.ArgumentParser(prog="formation-isac",
                                 description="UAV formation flight and control-aware ISAC beamforming")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("formation", parents=[common], help="simulate every formation")
    sub.add_parser("upwash-map", parents=[common], help="tabulate the upwash field")
    bf = sub.add_parser("beamform", parents=[common], help="optimise beamformers and baselines")
    bf.add_argument("--no-sweeps", action="store_true", help="skip the P_max and Gamma_th sweeps")
    sub.add_parser("lqr-sweep", parents=[common], help="LQR cost over noise scales and power")
    st = sub.add_parser("selftest", parents=[common], help="fast invariant suite")
    st.add_argument("--mutate", choices=["gradient"], default=None,
                    help="inject a known defect to confirm the suite catches it")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = config.load(args.config)
        grid = config.GridSpec.parse(args.grid) if args.grid else None
    except (config.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seed = doc.seed if args.seed is None else args.seed
    if seed < 0:
        print("error: seed must be nonnegative", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path(doc.out)

    if args.command == "selftest":
        checks = selftest.run_selftest(args.mutate)
        failed = [c.name for c in checks if not c.passed]
        print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
        return 1 if failed else 0

    try:
        if args.command == "formation":
            res = experiments.cmd_formation(doc, seed, out)
        elif args.command == "upwash-map":
            res = experiments.cmd_upwash_map(doc, grid, out)
        elif args.command == "beamform":
            res = experiments.cmd_beamform(doc, seed, out, sweeps=not args.no_sweeps)
        else:
            res = experiments.cmd_lqr_sweep(doc, seed, out)
    except BeamformInfeasible as exc:
        print(f"error: {exc} (binding constraint family: {exc.family})", file=sys.stderr)
        return 3
    print(json.dumps({"experiment": res.experiment, "digest": res.digest,
                      "tables": res.tables, "wall_clock": round(res.wall_clock, 3)}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
