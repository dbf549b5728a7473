"""``qsawtooth <preset> --config FILE [--seed S] [--out DIR] [--jobs N]``.

``QSAWTOOTH_OUT`` and ``QSAWTOOTH_JOBS`` override the config's output
directory and the worker count; explicit flags override both.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import PRESETS, ConfigError, parse, preset_config
from .experiments import InvariantViolation, ManifestError, emit_plot_data, run_experiment
from .io import OutputError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OUTPUT = 3
EXIT_INVARIANT = 4
EXIT_MANIFEST = 5

ENV_OUT = "QSAWTOOTH_OUT"
ENV_JOBS = "QSAWTOOTH_JOBS"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsawtooth", description="Quantum sawtooth map experiments")
    ap.add_argument("preset", choices=PRESETS + ("plot",), help="experiment to run, or 'plot' to emit plot data")
    ap.add_argument("--config", help="key = value run configuration (required unless plotting)")
    ap.add_argument("--seed", type=int, help="master seed, overrides the config")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--jobs", type=int, help="worker processes")
    ap.add_argument("--manifest", help="manifest.json or run directory (for 'plot')")
    ap.add_argument("--plots", action="store_true", help="also emit plot data after the run")
    return ap


def _jobs(arg: int | None) -> int:
    if arg is not None:
        value = arg
    else:
        raw = os.environ.get(ENV_JOBS)
        if raw is None:
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{ENV_JOBS}={raw!r} is not an integer") from None
    if value < 1:
        raise ConfigError("jobs must be >= 1")
    return value


def resolve_config(preset: str, path: str, seed: int | None = None, out: str | None = None):
    """Preset defaults, then the config file, then environment, then flags."""
    base = preset_config(preset)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse(text, base)
    if cfg.experiment != preset:
        raise ConfigError(f"config is for {cfg.experiment!r} but preset {preset!r} was requested")
    env_out = os.environ.get(ENV_OUT)
    changes = {}
    if env_out:
        changes["out_dir"] = env_out
    if out is not None:
        changes["out_dir"] = out
    if seed is not None:
        changes["seed"] = seed
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.preset == "plot":
            target = args.manifest or args.out or os.environ.get(ENV_OUT)
            if not target:
                raise ManifestError("plot needs --manifest or an output directory")
            for p in emit_plot_data(target):
                print(p)
            return EXIT_OK
        if not args.config:
            raise ConfigError("--config FILE is required")
        cfg = resolve_config(args.preset, args.config, args.seed, args.out)
        jobs = _jobs(args.jobs)
        manifest = run_experiment(cfg, jobs=jobs)
        print(f"{cfg.experiment}: wrote {cfg.out_dir}/manifest.json")
        for key, value in sorted(manifest.get("derived", {}).items()):
            if not isinstance(value, (dict, list)):
                print(f"  {key} = {value}")
        if args.plots:
            emit_plot_data(os.path.join(cfg.out_dir, "manifest.json"))
        return EXIT_OK
    except ConfigError as exc:
        print(f"qsawtooth: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"qsawtooth: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    except InvariantViolation as exc:
        print(f"qsawtooth: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ManifestError as exc:
        print(f"qsawtooth: manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST
    except ValueError as exc:
        print(f"qsawtooth: invalid run settings: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
