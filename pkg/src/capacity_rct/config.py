"""Flat ``key = value`` scenario files, with command-line overrides.

Syntax is a TOML subset: one key per line, ``#`` comments, optional
``[section]`` headers (ignored), numbers, ``true``/``false``, quoted or bare
strings, and lists written ``[1, 2, 3]``.  Every key can also be given as a
flag of the same name; the flag wins.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from capacity_rct.errors import DomainError
from capacity_rct.power import DEFAULT_GAMMA, DEFAULT_N_CAP, TestConfig
from capacity_rct.queueing import ModelParams, SystemSize
from capacity_rct.sim import DEFAULT_RESAMPLES, SimConfig

VARYABLE = ("lambda", "tau", "mu", "p")


class ConfigError(Exception):
    """Invalid scenario configuration; ``str()`` carries the source location."""


@dataclass
class ScenarioConfig:
    # model
    lam: float = 0.4
    tau: float = 0.35
    mu: float = 3.0
    p: float = 0.1
    # test
    alpha: float = 0.05
    beta: float = 0.8
    horizon: float = 10.0
    # pilot and policies
    m1p: int = 5
    n1p: int = 10
    n0p: int = 10
    gamma: float = DEFAULT_GAMMA
    n_cap: int = DEFAULT_N_CAP
    # single system / single design
    servers: int = 5
    users: int = 10
    m1: int = 5
    n1: int = 10
    n0: int = 10
    # fluid
    z0: float = 0.0
    fluid_horizon: float = 0.0  # 0 selects the relaxation horizon
    fluid_step: float = 0.01
    trajectory: bool = False
    # sweeps
    n_min: int = 2
    n_max: int = 400
    n_step: int = 2
    m_list: list = field(default_factory=lambda: [5, 10, 20])
    vary: str = "lambda"
    vary_values: list = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    # simulation
    seed: int = 2024
    replications: int = 500
    checkpoint_times: list = field(default_factory=lambda: [5.0, 20.0, 50.0, 100.0, 150.0])
    stationary_start: bool = True
    initial_queue: int = 0
    resamples: int = DEFAULT_RESAMPLES
    # output
    out: str = "results"

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.lam, self.tau, self.mu, self.p)

    @property
    def test(self) -> TestConfig:
        return TestConfig(self.alpha, self.beta, self.horizon)

    @property
    def size(self) -> SystemSize:
        return SystemSize(self.servers, self.users)

    @property
    def sim(self) -> SimConfig:
        return SimConfig(
            seed=self.seed,
            horizon=max(self.checkpoint_times),
            replications=self.replications,
            initial_queue=self.initial_queue,
            checkpoint_times=tuple(self.checkpoint_times),
            stationary_start=self.stationary_start,
        )

    def resolved(self) -> dict[str, Any]:
        """Everything that affects results, keyed by config-file name."""
        data = {_file_key(f.name): getattr(self, f.name) for f in dataclasses.fields(self)}
        data.pop("out")
        return data

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
# `lambda` is a keyword; the dataclass stores it as `lam`.
_ALIASES = {"lambda": "lam"}


def _file_key(name: str) -> str:
    return "lambda" if name == "lam" else name


def config_keys() -> list[str]:
    return [_file_key(name) for name in FIELD_TYPES]


_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if ch in "\"'":
            quote = None if quote == ch else (quote or ch)
        elif ch == "#" and quote is None:
            return line[:i]
    return line


def _scalar(raw: str, kind: str):
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected true or false, got {raw!r}")
    if kind == "int":
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind == "float":
        return float(raw)
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


def parse_value(name: str, raw: str):
    kind = FIELD_TYPES[name]
    if kind == "list":
        body = raw.strip()
        if body.startswith("[") and body.endswith("]"):
            body = body[1:-1]
        items = [item for item in body.split(",") if item.strip()]
        elem = "int" if name == "m_list" else "float"
        return [_scalar(item, elem) for item in items]
    return _scalar(raw, kind)


def read_config_file(path: str | Path) -> tuple[dict[str, Any], dict[str, str]]:
    """Parse a scenario file into values and a ``name -> "file:line"`` map."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    values: dict[str, Any] = {}
    where: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        loc = f"{path}:{lineno}"
        body = _strip_comment(line).strip()
        if not body or (body.startswith("[") and body.endswith("]") and "=" not in body):
            continue
        match = _LINE.match(body)
        if not match:
            raise ConfigError(f"{loc}: expected 'key = value', got {body!r}")
        key, raw = match.groups()
        name = _ALIASES.get(key, key)
        if name not in FIELD_TYPES:
            raise ConfigError(f"{loc}: unknown key {key!r}")
        if name in values:
            raise ConfigError(f"{loc}: duplicate key {key!r} (first set at {where[name]})")
        try:
            values[name] = parse_value(name, raw)
        except ValueError as exc:
            raise ConfigError(f"{loc}: {key}: {exc}") from None
        where[name] = loc
    return values, where


def load_config(
    path: str | Path | None, overrides: dict[str, str] | None = None
) -> ScenarioConfig:
    values: dict[str, Any] = {}
    where: dict[str, str] = {}
    if path is not None:
        values, where = read_config_file(path)
    for key, raw in (overrides or {}).items():
        name = _ALIASES.get(key, key)
        try:
            values[name] = parse_value(name, raw)
        except ValueError as exc:
            raise ConfigError(f"--{key}: {exc}") from None
        where[name] = f"--{key}"
    config = ScenarioConfig(**values)
    validate(config, where)
    return config


def validate(config: ScenarioConfig, where: dict[str, str] | None = None) -> None:
    """Check every embedded invariant, naming the line or flag that set the value."""
    where = where or {}

    def fail(name: str, message: str):
        loc = where.get(name, "default")
        raise ConfigError(f"{loc}: {_file_key(name)}: {message}")

    def guard(names: tuple[str, ...], build):
        try:
            build()
        except DomainError as exc:
            culprit = next((n for n in names if n in where), names[0])
            fail(culprit, str(exc))

    guard(("lam", "tau", "mu", "p"), lambda: config.params)
    guard(("alpha", "beta", "horizon"), lambda: config.test)
    guard(("servers", "users"), lambda: config.size)
    for name in ("m1p", "servers", "m1", "initial_queue"):
        if getattr(config, name) < 0:
            fail(name, "must be >= 0")
    for name in ("n1p", "n0p", "n1", "n0", "replications", "resamples", "n_cap"):
        if getattr(config, name) < 1:
            fail(name, "must be >= 1")
    if config.gamma < 0:
        fail("gamma", "must be >= 0")
    if not 0 <= config.z0 <= 1:
        fail("z0", "must lie in [0, 1]")
    if config.fluid_horizon < 0:
        fail("fluid_horizon", "must be >= 0")
    if config.fluid_step <= 0:
        fail("fluid_step", "must be > 0")
    if config.n_step < 1 or config.n_step % 2:
        fail("n_step", "must be a positive even number")
    if config.n_min < 2 or config.n_min % 2:
        fail("n_min", "must be an even number >= 2")
    if config.n_max < config.n_min:
        fail("n_max", "must be >= n_min")
    if not config.m_list or any(m < 0 for m in config.m_list):
        fail("m_list", "must be a nonempty list of server counts >= 0")
    if config.vary not in VARYABLE:
        fail("vary", f"must be one of {', '.join(VARYABLE)}")
    if not config.vary_values:
        fail("vary_values", "must be nonempty")
    if not config.checkpoint_times:
        fail("checkpoint_times", "must be nonempty")
    if not 0 <= config.seed < 2**64:
        fail("seed", "must be a 64-bit unsigned integer")
    if config.initial_queue > config.users:
        fail("initial_queue", "must not exceed users")
    guard(("checkpoint_times",), lambda: config.sim)
