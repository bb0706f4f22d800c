"""Command-line front end.

Subcommands drive the sweep engine against one TOML experiment file:

    issflow flow     --config exp.toml    integrate, verify, estimate gains
    issflow descent  --config exp.toml    iterate, stuck stats, decrease audit
    issflow oracle   --config exp.toml    independent recomputation audits
    issflow gains    --config exp.toml    empirical input-gain curves only
    issflow verify   --config exp.toml    all certificate checks, both dynamics

Exit codes: 0 all checks passed, 1 a tolerance was breached, 2 the config
failed to parse or validate, 3 a numeric computation failed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from issflow.errors import ContractError, CoverageError, DomainExitError, NumericError
from issflow.harness import runs
from issflow.harness.config import ConfigError, load_config

COMMANDS = {
    "flow": runs.run_flow_sweep,
    "descent": runs.run_descent_sweep,
    "oracle": runs.run_oracle,
    "gains": runs.run_gains,
    "verify": runs.run_verify,
}

HELP = {
    "flow": "integrate the perturbed gradient flow sweep and verify its certificates",
    "descent": "run the noisy descent sweep with stuck statistics and a decrease audit",
    "oracle": "audit gradients, line searches, and linear-control residuals independently",
    "gains": "estimate empirical input-gain curves over the noise magnitude grid",
    "verify": "run every certificate check for both the flow and the descent map",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="issflow",
        description="numerical experiments for stability of perturbed gradient dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the experiment TOML file")
        cmd.add_argument("--out", default=None, help="output directory (default: out_dir from the config)")
        cmd.add_argument("--seed", type=int, default=None, help="base seed (default: first sweep seed)")
        cmd.add_argument("--jobs", type=int, default=1, help="concurrent sweep jobs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out if args.out is not None else cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    base_seed = args.seed if args.seed is not None else cfg.sweep["seeds"][0]
    if base_seed < 0:
        print("config error: the base seed must be nonnegative", file=sys.stderr)
        return 2
    try:
        manifest = COMMANDS[args.command](cfg, out_dir, base_seed, jobs=max(1, args.jobs))
    except (NumericError, CoverageError, DomainExitError, ContractError,
            FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    if manifest.passed:
        return 0
    offender = manifest.verdicts.get("worst_offender")
    detail = f": worst offender {offender}" if offender else ""
    print(f"tolerance breach{detail} (see {os.path.join(out_dir, 'manifest.json')})", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
