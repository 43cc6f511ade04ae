"""Run a preset end to end, optionally shortened, and print the report summary.

    python3 scripts/run_preset.py obstacle --steps 20000 --out runs/obstacle_short
"""
import argparse
import json

from blobtransport.config import ExperimentConfig
from blobtransport.experiments import run_convergence, run_experiment, run_gradcheck, run_landscape
from blobtransport.presets import names, preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("name", choices=names())
    ap.add_argument("--steps", type=int, help="override max_steps")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", required=True)
    ap.add_argument("--overwrite", action="store_true")
    args = ap.parse_args()

    overrides = {}
    if args.steps is not None:
        overrides["max_steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = ExperimentConfig.parse(preset(args.name, **overrides))
    driver = {"landscape": run_landscape, "convergence": run_convergence, "gradcheck": run_gradcheck}
    report = driver.get(cfg.experiment, run_experiment)(cfg, args.out, args.overwrite)
    print(json.dumps({k: report[k] for k in report if k != "resolved_config"}, indent=2, default=str)[:4000])


if __name__ == "__main__":
    main()
