#!/usr/bin/env python3
"""Write the data behind the effect, power and optimal-N plots as CSV tables."""

import argparse
from pathlib import Path

from capacity_rct.cli import run_subcommand
from capacity_rct.config import load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results/figures"))
    args = parser.parse_args()

    base = {"out": str(args.out), "m_list": "[5, 10, 20]", "n_max": "400"}
    for name in ("sweep-effect", "sweep-power"):
        cfg = load_config(CONFIGS / "scenario1.toml", base)
        for path in run_subcommand(name, cfg):
            print(path)
    for vary, values in [
        ("lambda", "[0.1, 0.2, 0.3, 0.4, 0.5]"),
        ("tau", "[0.1, 0.2, 0.3, 0.4, 0.5]"),
        ("mu", "[1, 2, 3, 4, 5]"),
        ("p", "[0.1, 0.3, 0.5, 0.7, 0.9]"),
    ]:
        overrides = {"out": str(args.out / vary), "vary": vary, "vary_values": values}
        cfg = load_config(CONFIGS / "optimal_n.toml", overrides)
        for path in run_subcommand("sweep-optimal-n", cfg):
            print(path)


if __name__ == "__main__":
    main()
