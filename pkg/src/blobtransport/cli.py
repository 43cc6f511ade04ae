"""Command line entry point: ``blobtransport run|landscape|convergence|gradcheck``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(and, for ``gradcheck``, a failed check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import NumericalFailure, run_convergence, run_experiment, run_gradcheck, run_landscape
from .presets import names as preset_names
from .presets import preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("blobtransport")


def _load(source: str | None) -> ExperimentConfig | None:
    if source is None:
        return None
    if source.startswith("preset:"):
        name = source.split(":", 1)[1]
        if name not in preset_names():
            raise ConfigError(source, f"unknown preset; choose from {preset_names()}")
        return ExperimentConfig.parse(preset(name))
    return load_config(source)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blobtransport", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_optional=False):
        p.add_argument(
            "config",
            nargs="?" if config_optional else None,
            help="JSON config file, or preset:<name>",
        )
        p.add_argument("--out", help="output directory (overrides output_dir in the config)")
        p.add_argument("--overwrite", action="store_true", help="replace existing output files")

    common(sub.add_parser("run", help="optimize one problem"))
    common(sub.add_parser("landscape", help="evaluate the two-particle loss on a grid"))
    conv = sub.add_parser("convergence", help="error against the exact map for several N")
    common(conv)
    conv.add_argument("--threads", type=int, default=1, help="concurrent per-N jobs (1 = bitwise reproducible)")
    common(sub.add_parser("gradcheck", help="analytic vs finite-difference gradients"), config_optional=True)
    sub.add_parser("presets", help="list preset names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")

    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        cfg = _load(args.config)
        if args.command == "run":
            if cfg.experiment in ("landscape", "convergence", "gradcheck"):
                raise ConfigError("config.experiment", f"use the '{cfg.experiment}' subcommand")
            result = run_experiment(cfg, args.out, args.overwrite)
        elif args.command == "landscape":
            result = run_landscape(cfg, args.out, args.overwrite)
        elif args.command == "convergence":
            if args.threads < 1:
                raise ConfigError("--threads", "must be >= 1")
            result = run_convergence(cfg, args.out, args.overwrite, threads=args.threads)
        else:
            if cfg is not None and cfg.experiment != "gradcheck":
                raise ConfigError("config.experiment", "gradcheck needs a gradcheck config")
            result = run_gradcheck(cfg, args.out, args.overwrite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc} (partial outputs written)", file=sys.stderr)
        return EXIT_NUMERICAL

    print(json.dumps(_summary(args.command, result), indent=2))
    if args.command == "gradcheck" and not result["passed"]:
        return EXIT_NUMERICAL
    return EXIT_OK


def _summary(command: str, result: dict) -> dict:
    if command == "run":
        return {"status": result["status"], "loss": result["loss"]["best"], "metrics": _scalars(result["metrics"])}
    if command == "convergence":
        return {k: result[k] for k in ("status", "slope", "degenerate")} | {
            "errors": {r["n_particles"]: r["error_terminal"] for r in result["runs"]}
        }
    if command == "landscape":
        return {"status": result["status"], "markers": result["markers"]}
    return {"passed": result["passed"], "cases": result["cases"]}


def _scalars(metrics: dict) -> dict:
    return {k: v for k, v in metrics.items() if not isinstance(v, (list, dict))}


if __name__ == "__main__":
    sys.exit(main())
