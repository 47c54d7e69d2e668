"""Command-line entry point ``optomod``.

Exit codes: 0 success, 2 configuration error, 3 instability, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .config import MODES, load_config, load_preset, preset_names
from .errors import ConfigError, OptomodError
from .pipeline import run_pipeline, run_sweep

COMMANDS = {
    "derive": ("derive",),
    "orbit": ("orbit",),
    "stability": ("stability",),
    "covariance": ("covariance",),
    "spectrum": ("spectrum",),
    "metrics": ("metrics",),
    "rwa": ("rwa",),
    "compare": ("compare",),
}


def build_parser():
    p = argparse.ArgumentParser(prog="optomod", description="Modulated optomechanics simulator.")
    p.add_argument("command", choices=sorted(list(COMMANDS) + ["sweep", "presets"]))
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--preset", help="named preset shipped with the package")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--mode", choices=MODES, help="covariance solver (overrides solver.mode)")
    p.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    return p


def _load(args):
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of --config or --preset")
    cfg = load_config(args.config) if args.config else load_preset(args.preset)
    if args.mode:
        cfg = replace(cfg, solver=replace(cfg.solver, mode=args.mode))
    if args.command == "compare" and cfg.solver.mode != "both":
        cfg = replace(cfg, solver=replace(cfg.solver, mode="both"))
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = _load(args)
        out = args.out or cfg.output.directory
        if args.command == "sweep":
            rows = run_sweep(cfg, out, workers=args.workers)
            print(f"sweep: {len(rows)} points written to {out}")
            return 0
        man = run_pipeline(cfg, COMMANDS[args.command], out)
    except OptomodError as exc:
        print(f"error: {exc.describe()}", file=sys.stderr)
        return exc.exit_code
    summary = {"verdicts": man.verdicts, "files": man.files}
    if args.command == "derive":
        summary["constants"] = man.constants
    for key in ("metrics", "compare", "mean_field", "rwa_f_minus"):
        if key in man.results:
            summary[key] = man.results[key]
    print(json.dumps(summary, indent=1, sort_keys=True, default=str))
    if args.command == "stability" and man.verdicts.get("floquet_stable") is False:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
