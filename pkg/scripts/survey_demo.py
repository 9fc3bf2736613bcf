"""Zig-zag survey with noisy positioning, GPR tagging and the error budget."""

import argparse

import numpy as np

from gprsurvey.robot import SurveyPlan, mean_rse, simulate_survey, tag_gpr_with_pose


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--width", type=float, default=2.0)
    ap.add_argument("--length", type=float, default=3.0)
    ap.add_argument("--grid", type=float, default=0.1)
    ap.add_argument("--noise", type=float, default=0.009, help="position noise std in meters")
    ap.add_argument("--gpr-rate", type=float, default=50.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    plan = SurveyPlan(args.width, args.length, args.grid)
    truth, est = simulate_survey(plan, args.noise, seed=args.seed)
    stamps = np.arange(truth[0].timestamp, truth[-1].timestamp, 1.0 / args.gpr_rate)
    tags_true = tag_gpr_with_pose(stamps, truth)
    tags_est = tag_gpr_with_pose(stamps, est)
    print(f"{plan.n_passes} passes, {len(truth)} pose samples over {truth[-1].timestamp:.1f}s")
    print(f"pose mean RSE   {100 * mean_rse(truth, est):.3f} cm")
    print(f"GPR tags        {len(stamps)} at {args.gpr_rate:g} Hz, mean RSE {100 * mean_rse(tags_true, tags_est):.3f} cm")


if __name__ == "__main__":
    main()
