"""``capacity-rct`` command line.

    capacity-rct <subcommand> [--config FILE] [--key value ...] [--out DIR]

Exit codes: 0 success, 2 configuration or domain error, 3 infeasible
search, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from capacity_rct import __version__
from capacity_rct.config import (
    FIELD_TYPES,
    ConfigError,
    ScenarioConfig,
    _file_key,
    load_config,
)
from capacity_rct.errors import DomainError, SearchExhausted
from capacity_rct.estimator import (
    estimator_moments,
    steady_state_effect,
    treatment_moments,
)
from capacity_rct.fluid import (
    approx_queue_length,
    fluid_effect,
    fluid_steady_state,
    integrate_fluid,
    relaxation_horizon,
)
from capacity_rct.power import (
    PilotStudy,
    TestConfig,
    optimal_n_sweep,
    power_at_mde,
    power_at_true_effect,
    run_policies,
)
from capacity_rct.queueing import (
    ModelParams,
    SystemSize,
    birth_rates,
    classify_regime,
    critical_ratio,
    death_rates,
    mean_queue_length,
    offered_load,
    stationary_distribution,
)
from capacity_rct.sim import validate_against_clt
from capacity_rct.tables import ResultTable, write_table

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4


def cmd_analyze(cfg: ScenarioConfig) -> list[ResultTable]:
    params, size = cfg.params, cfg.size
    dist = stationary_distribution(params, size)
    states = np.arange(size.users + 1)
    stationary = ResultTable(
        "stationary",
        {
            "queue_length": states.tolist(),
            "probability": dist.probs.tolist(),
            "birth_rate": birth_rates(params, size).tolist(),
            "death_rate": death_rates(params, size).tolist(),
        },
    )
    treat = treatment_moments(params, size.servers, size.users)
    summary = ResultTable.from_rows(
        "summary",
        [
            {
                "servers": size.servers,
                "users": size.users,
                "critical_ratio": critical_ratio(params),
                "offered_load": offered_load(params, size.users),
                "mean_queue_length": mean_queue_length(dist),
                "fluid_queue_length": approx_queue_length(params, size),
                "desired_share": treat.mean,
                "desired_share_asy_variance": treat.asy_variance,
                "regime": classify_regime(params, size, cfg.gamma).value,
            }
        ],
    )
    return [summary, stationary]


def cmd_fluid(cfg: ScenarioConfig) -> list[ResultTable]:
    params = cfg.params
    mbar = cfg.size.ratio
    tables = [
        ResultTable.from_rows(
            "fluid",
            [
                {
                    "mbar": mbar,
                    "critical_ratio": critical_ratio(params),
                    "steady_state": fluid_steady_state(mbar, params),
                    "effect": fluid_effect(mbar, params),
                }
            ],
        )
    ]
    if cfg.trajectory:
        horizon = cfg.fluid_horizon or relaxation_horizon(params)
        path = integrate_fluid(cfg.z0, mbar, params, horizon, cfg.fluid_step)
        tables.append(
            ResultTable("trajectory", {"time": path.times.tolist(), "z": path.z.tolist()})
        )
    return tables


def cmd_power(cfg: ScenarioConfig) -> list[ResultTable]:
    m = estimator_moments(cfg.params, cfg.m1, cfg.n1, cfg.n0, cfg.horizon)
    row = {
        "m1": cfg.m1,
        "n1": cfg.n1,
        "n0": cfg.n0,
        "horizon": cfg.horizon,
        "effect": m.effect,
        "variance_treat": m.treat_asy_variance / cfg.horizon,
        "variance_control": m.control_asy_variance / cfg.horizon,
        "power": power_at_true_effect(cfg.params, cfg.m1, cfg.n1, cfg.n0, cfg.test),
        "regime": classify_regime(cfg.params, SystemSize(cfg.m1, cfg.n1), cfg.gamma).value,
    }
    return [ResultTable.from_rows("power", [row])]


def cmd_policy_compare(cfg: ScenarioConfig) -> list[ResultTable]:
    pilot = PilotStudy(cfg.params, cfg.m1p, cfg.n1p, cfg.n0p)
    pilot_row = {
        "m1": pilot.m1p,
        "n1": pilot.n1p,
        "n0": pilot.n0p,
        "effect": pilot.effect,
        "variance_treat": pilot.treat_asy_variance / cfg.horizon,
        "variance_control": pilot.control_asy_variance / cfg.horizon,
        "power": power_at_true_effect(cfg.params, pilot.m1p, pilot.n1p, pilot.n0p, cfg.test),
    }
    rows = []
    for design in run_policies(pilot, cfg.test, cfg.gamma, cfg.n_cap):
        rows.append(
            {
                "policy": design.policy.value,
                "m1": design.m1,
                "n1": design.n1,
                "n0": design.n0,
                "effect": steady_state_effect(cfg.params, design.m1, design.n1),
                "achieved_power": design.achieved_power,
                "meets_target": design.achieved_power >= cfg.beta,
            }
        )
    return [ResultTable.from_rows("policies", rows), ResultTable.from_rows("pilot", [pilot_row])]


def cmd_simulate(cfg: ScenarioConfig) -> list[ResultTable]:
    report = validate_against_clt(cfg.params, cfg.size, cfg.sim, resamples=cfg.resamples)
    rows = []
    for r in report.rows:
        rows.append(
            {
                "time": r.time,
                "sim_mean": r.sim_mean,
                "mean_low": r.mean_low,
                "mean_high": r.mean_high,
                "sim_variance": r.sim_variance,
                "var_low": r.var_low,
                "var_high": r.var_high,
                "clt_mean": r.clt_mean,
                "clt_variance": r.clt_variance,
                "fluid_mean": r.fluid_mean,
                "clt_mean_flag": r.clt_mean_flag,
                "fluid_mean_flag": r.fluid_mean_flag,
                "clt_variance_flag": r.clt_variance_flag,
            }
        )
    return [ResultTable.from_rows("validation", rows)]


def _n_values(cfg: ScenarioConfig) -> range:
    return range(cfg.n_min, cfg.n_max + 1, cfg.n_step)


def cmd_sweep_effect(cfg: ScenarioConfig) -> list[ResultTable]:
    params = cfg.params
    rows = []
    for m1 in cfg.m_list:
        for n in _n_values(cfg):
            n1 = n // 2
            rows.append(
                {
                    "m1": m1,
                    "n_total": n,
                    "n1": n1,
                    "effect": steady_state_effect(params, m1, n1),
                    "fluid_effect": fluid_effect(m1 / n1, params),
                    "unlimited_effect": steady_state_effect(params, n1, n1),
                }
            )
    return [ResultTable.from_rows("effect", rows)]


def cmd_sweep_power(cfg: ScenarioConfig) -> list[ResultTable]:
    params, test = cfg.params, cfg.test
    rows = []
    for m1 in cfg.m_list:
        sweep = optimal_n_sweep(m1, params, test, _n_values(cfg))
        for k, n in enumerate(sweep.n_total):
            n1 = int(n) // 2
            m = estimator_moments(params, m1, n1, n1, cfg.horizon)
            unlimited = estimator_moments(params, n1, n1, n1, cfg.horizon)
            rows.append(
                {
                    "m1": m1,
                    "n_total": int(n),
                    "variance_treat": m.treat_asy_variance / cfg.horizon,
                    "variance_control": m.control_asy_variance / cfg.horizon,
                    "effect": sweep.effect[k],
                    "standardized_effect": sweep.standardized_effect[k],
                    "power": sweep.power[k],
                    "unlimited_power": power_at_mde(
                        unlimited.treat_asy_variance / cfg.horizon,
                        unlimited.control_asy_variance / cfg.horizon,
                        unlimited.effect,
                        cfg.alpha,
                    ),
                    "is_argmax": int(n) == sweep.argmax,
                }
            )
    return [ResultTable.from_rows("power_sweep", rows)]


def cmd_sweep_optimal_n(cfg: ScenarioConfig) -> list[ResultTable]:
    field_name = "lam" if cfg.vary == "lambda" else cfg.vary
    rows = []
    for value in cfg.vary_values:
        rates = {"lam": cfg.lam, "tau": cfg.tau, "mu": cfg.mu, "p": cfg.p, field_name: value}
        params = ModelParams(**rates)
        for m1 in cfg.m_list:
            sweep = optimal_n_sweep(m1, params, cfg.test, _n_values(cfg))
            best = int(np.argmax(sweep.standardized_effect))
            rows.append(
                {
                    "parameter": cfg.vary,
                    "value": float(value),
                    "m1": m1,
                    "argmax_n": sweep.argmax,
                    "max_power": sweep.power[best],
                    "interior": sweep.has_interior_max,
                }
            )
    return [ResultTable.from_rows("optimal_n", rows)]


SUBCOMMANDS = {
    "analyze": (cmd_analyze, "stationary distribution, mean queue length, critical ratio, regime"),
    "fluid": (cmd_fluid, "fluid steady state and effect at mbar = servers/users; optional trajectory"),
    "power": (cmd_power, "power of the design (m1, n1, n0) at its true effect"),
    "policy-compare": (cmd_policy_compare, "run the three sizing policies on a pilot"),
    "simulate": (cmd_simulate, "simulation-vs-approximation report for (servers, users)"),
    "sweep-effect": (cmd_sweep_effect, "effect size against N for each m1 (finite and fluid)"),
    "sweep-power": (cmd_sweep_power, "variance, standardized effect and power against N"),
    "sweep-optimal-n": (cmd_sweep_optimal_n, "power-optimal N as one rate varies"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capacity-rct",
        description="Design RCTs of capacity-constrained service interventions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name, (_, help_text) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="scenario file (key = value lines)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        for field_name in FIELD_TYPES:
            key = _file_key(field_name)
            p.add_argument(f"--{key}", dest=f"set_{field_name}", metavar="VALUE", default=None)
    return parser


def run_subcommand(name: str, cfg: ScenarioConfig, fmt: str = "csv") -> list[Path]:
    func, _ = SUBCOMMANDS[name]
    tables = func(cfg)
    meta = {
        "tool": f"capacity-rct {__version__}",
        "subcommand": name,
        "config_sha256": cfg.digest(),
    }
    paths = []
    for table in tables:
        table.metadata = {**meta, "table": table.name, **table.metadata}
        paths.append(write_table(table, cfg.out, fmt))
    return paths


def _write_resolved(cfg: ScenarioConfig) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_sha256: {cfg.digest()}"]
    for key, value in cfg.resolved().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, list):
            text = "[" + ", ".join(repr(v) for v in value) + "]"
        elif isinstance(value, str):
            text = f'"{value}"'
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    (out / "resolved_config.toml").write_text("\n".join(lines) + "\n")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        _file_key(name): value
        for name in FIELD_TYPES
        if (value := getattr(args, f"set_{name}")) is not None
    }
    name = args.subcommand
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"capacity-rct {name}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            paths = run_subcommand(name, cfg, args.format)
    except SearchExhausted as exc:
        print(f"capacity-rct {name}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DomainError as exc:
        print(f"capacity-rct {name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"capacity-rct {name}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_resolved(cfg)
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
