#!/usr/bin/env python3
"""Size a trial from a pilot with each policy and print the designs."""

import argparse

from capacity_rct.power import PilotStudy, TestConfig, power_at_true_effect, run_policies
from capacity_rct.queueing import ModelParams

PILOTS = {"scenario 1": (5, 10, 10), "scenario 2": (5, 25, 25)}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument("--horizon", type=float, default=10.0)
    args = parser.parse_args()

    params = ModelParams(lam=0.4, tau=0.35, mu=3.0, p=0.1)
    config = TestConfig(alpha=0.05, beta=0.8, horizon=args.horizon)
    for label, pilot in PILOTS.items():
        study = PilotStudy(params, *pilot)
        pilot_power = power_at_true_effect(params, *pilot, config)
        print(f"{label}: pilot {pilot}, effect {study.effect:.4f}, power {pilot_power:.4f}")
        designs = run_policies(study, config, gamma=args.gamma)
        for d in designs:
            print(f"  {d.policy.value:<18} ({d.m1}, {d.n1}, {d.n0})  power {d.achieved_power:.4f}")
        prop, sqrt_ = designs[1], designs[2]
        print(
            f"  sqrt vs proportional: {100 * (prop.m1 - sqrt_.m1) / prop.m1:.1f}% fewer servers, "
            f"{100 * (prop.n1 - sqrt_.n1) / prop.n1:.1f}% fewer users"
        )


if __name__ == "__main__":
    main()
