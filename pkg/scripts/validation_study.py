#!/usr/bin/env python3
"""Compare simulated time-averaged queue lengths with the analytic approximations.

Writes one CSV per (servers, users) pair and prints the final checkpoint.
Set CAPACITY_RCT_THREADS to fan replications out over processes.
"""

import argparse
from pathlib import Path

from capacity_rct.queueing import ModelParams, SystemSize
from capacity_rct.sim import SimConfig, validate_against_clt
from capacity_rct.tables import ResultTable, write_table

PAIRS = [(2, 10), (5, 20), (10, 20), (20, 100), (50, 100), (40, 200)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replications", type=int, default=500)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--resamples", type=int, default=10_000)
    parser.add_argument("--out", type=Path, default=Path("results/validation"))
    args = parser.parse_args()

    params = ModelParams(lam=0.185, tau=0.16, mu=7.0, p=0.085)
    config = SimConfig(
        seed=args.seed,
        horizon=150.0,
        replications=args.replications,
        checkpoint_times=(5.0, 20.0, 50.0, 100.0, 150.0),
        stationary_start=True,
    )
    print(f"{'pair':>10} {'sim mean':>10} {'K':>10} {'fluid':>10} {'T*var/s2-1':>11}  flags")
    for m, n in PAIRS:
        report = validate_against_clt(params, SystemSize(m, n), config, resamples=args.resamples)
        rows = [vars(r) for r in report.rows]
        write_table(ResultTable.from_rows(f"validation_M{m}_N{n}", rows), args.out)
        last = report.rows[-1]
        flags = [name for name in ("clt_mean_flag", "fluid_mean_flag") if getattr(last, name)]
        print(
            f"{f'({m},{n})':>10} {last.sim_mean:10.4f} {last.clt_mean:10.4f} "
            f"{last.fluid_mean:10.4f} {last.sim_variance / last.clt_variance - 1:+11.3f}  "
            f"{' '.join(flags) or '-'}"
        )


if __name__ == "__main__":
    main()
