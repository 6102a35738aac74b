"""Command-line entry point.

    semicontrol run <cfg>         run an experiment, write CSV data and a manifest
    semicontrol validate <cfg>    check a config without running it
    semicontrol list-models       registered model families
    semicontrol describe <model>  parameter block for a model family

Exit codes: 0 success, 2 invalid input, 3 runtime failure. Set
SEMICONTROL_OUTPUT_ROOT to redirect every run's output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

from . import __version__, models
from .config import ConfigError, load
from .runner import DRIVERS

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
OUTPUT_ROOT_ENV = "SEMICONTROL_OUTPUT_ROOT"


def shipped_configs():
    """Paths of the example configs bundled with the package."""
    root = resources.files("semicontrol") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".cfg"))


def output_dir(cfg, root=None):
    base = root or os.environ.get(OUTPUT_ROOT_ENV)
    d = Path(cfg.output["directory"])
    return Path(base) / d if base else d


def run_config(path, root=None):
    """Run one config; returns (output directory, summary)."""
    cfg = load(path)
    out = output_dir(cfg, root)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = DRIVERS[cfg.kind](cfg, out)
    wall = time.perf_counter() - t0
    manifest = {
        "config": str(path),
        "kind": cfg.kind,
        "name": cfg.name,
        "seed": cfg.seed,
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "summary": {k: (v if isinstance(v, (bool, int, str)) else float(v)) for k, v in summary.items()},
        "outputs": sorted(p.name for p in out.iterdir() if p.name not in ("manifest.json", "resolved.cfg")),
    }
    (out / "resolved.cfg").write_text(cfg.resolved_text())
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out, summary


def _cmd_run(args):
    out, summary = run_config(args.config, args.output_root)
    print(f"wrote {out}")
    for k, v in summary.items():
        print(f"  {k} = {v:.6g}" if isinstance(v, float) else f"  {k} = {v}")
    return EXIT_OK


def _cmd_validate(args):
    cfg = load(args.config)
    print(f"{args.config}: ok ({cfg.kind}, model {cfg.system['model']})")
    return EXIT_OK


def _cmd_list(args):
    for name in models.list_models():
        print(f"{name:10s} {models.get_family(name).summary}")
    return EXIT_OK


def _cmd_describe(args):
    print(models.describe(args.model), end="")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="semicontrol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--output-root", default=None, help=f"overrides ${OUTPUT_ROOT_ENV}")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="validate a config")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    sub.add_parser("list-models", help="list model families").set_defaults(func=_cmd_list)
    d = sub.add_parser("describe", help="show a model's parameters as a config block")
    d.add_argument("model")
    d.set_defaults(func=_cmd_describe)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, models.UnknownModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # runtime failures keep the module's own message
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
