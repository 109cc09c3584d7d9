"""Command-line entry point.

Usage:
    bpg-lab grad-compare (--config FILE | --preset NAME) [--seed S] [--out PATH] [--paper-scale]
    bpg-lab optimize     (--config FILE | --preset NAME) [--seed S] [--out PATH] [--paper-scale]
    bpg-lab presets list
    bpg-lab config show --preset NAME
    bpg-lab fixtures regen-lqr [--out PATH]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from bpglab.errors import ContractViolation
from bpglab.harness import ExperimentConfig, parse_config, run_grad_compare, run_optimize
from bpglab.presets import get_preset, preset_names, PRESETS


def _load_config(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise ContractViolation("provide exactly one of --config FILE or --preset NAME")
    if args.config:
        cfg = parse_config(Path(args.config).read_text())
    else:
        cfg = get_preset(args.preset).config(paper_scale=args.paper_scale)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _add_run_args(sub):
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--preset", help="named preset (see: bpg-lab presets list)")
    sub.add_argument("--seed", type=int, default=None, help="base seed override")
    sub.add_argument("--out", default=None, help="output CSV path override")
    sub.add_argument("--paper-scale", action="store_true",
                     help="restore the full-scale repetition counts")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bpg-lab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    gc = subs.add_parser("grad-compare", help="same-sample gradient estimator comparison")
    _add_run_args(gc)
    opt = subs.add_parser("optimize", help="policy optimization learning curves")
    _add_run_args(opt)

    pre = subs.add_parser("presets", help="preset utilities")
    pre.add_argument("action", choices=["list"])

    cfg_cmd = subs.add_parser("config", help="config utilities")
    cfg_cmd.add_argument("action", choices=["show"])
    cfg_cmd.add_argument("--preset", required=True)

    fix = subs.add_parser("fixtures", help="fixture regeneration")
    fix.add_argument("action", choices=["regen-lqr"])
    fix.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "presets":
            for name in preset_names():
                print(f"{name:24s} {PRESETS[name].description}")
            return 0
        if args.command == "config":
            print(get_preset(args.preset).text.strip())
            return 0
        if args.command == "fixtures":
            from bpglab import oracles

            out = args.out or str(Path(oracles.__file__).parent / "data" / oracles.FIXTURE_NAME)
            fixture = oracles.generate_lqr_gradient_fixture(Path(out))
            print(f"wrote {out}: value={fixture.value} stderr={fixture.stderr}")
            return 0
        cfg = _load_config(args)
        if args.command == "grad-compare":
            if cfg.experiment != "grad-compare":
                raise ContractViolation(f"config is for {cfg.experiment!r}, not grad-compare")
            run_grad_compare(cfg)
        else:
            if cfg.experiment != "optimize":
                raise ContractViolation(f"config is for {cfg.experiment!r}, not optimize")
            run_optimize(cfg)
        print(f"wrote {cfg.out}")
        return 0
    except (ContractViolation, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
