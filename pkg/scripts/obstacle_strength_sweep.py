"""Obstacle preset at several penalty strengths: penetration depth and PE of the returned iterate.

The preset's default c_Omega = 1/(h eps) = 200. Also reports a run with the
step-size schedule disabled, to separate optimizer stalling from the
equilibrium of the soft penalty itself.

    python3 scripts/obstacle_strength_sweep.py --steps 200000
"""
import argparse

from blobtransport.config import ExperimentConfig
from blobtransport.experiments import execute
from blobtransport.presets import preset


def run(strength, steps, schedule=True):
    raw = preset("obstacle", max_steps=steps)
    raw["problem"]["obstacles"]["strength"] = strength
    if not schedule:
        raw["optimizer"]["lr_reduce_patience"] = 10**9
        raw["optimizer"]["early_stop_patience"] = 10**9
    report = execute(ExperimentConfig.parse(raw))
    m = report.metrics
    return m["obstacle_strength"], m["penetration_depth"], m["potential_energy"], float(report.trace.column("lr")[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--strengths", type=float, nargs="*", default=[200.0, 600.0, 2000.0])
    args = ap.parse_args()
    print("strength,schedule,penetration_depth,potential_energy,pe_threshold,final_lr")
    for s in args.strengths:
        for schedule in (True, False):
            c, depth, pe, lr = run(s, args.steps, schedule)
            print(f"{c:g},{'on' if schedule else 'off'},{depth:.6g},{pe:.6g},{1e-6 * c:.3g},{lr:.3g}")


if __name__ == "__main__":
    main()
