"""Run configuration: one JSON document per run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

COMMANDS = ("validate-kernel", "evolve", "stationary", "martingale", "embed")


class ConfigError(ValueError):
    """The configuration is malformed or incomplete."""


@dataclass(frozen=True)
class Budgets:
    n_replicas: int = 10_000
    n_mc: int = 100_000
    cap: int = 100_000
    n_big: int = 12
    n_W: int = 1000

    def __post_init__(self):
        for name, v in asdict(self).items():
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"budget {name} must be an integer >= 1, got {v!r}")


@dataclass(frozen=True)
class Tolerances:
    atol: float = 1e-10
    sigma_level: int = 3
    significance: float = 0.01

    def __post_init__(self):
        if self.sigma_level not in (2, 3, 4):
            raise ConfigError(f"sigma_level must be 2, 3 or 4, got {self.sigma_level!r}")
        if not self.atol >= 0:
            raise ConfigError("atol must be >= 0")
        if not 0 < self.significance < 1:
            raise ConfigError("significance must lie in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    kernel: dict
    command: dict
    seed: int
    budgets: Budgets = field(default_factory=Budgets)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: str = "out"

    @property
    def name(self) -> str:
        return self.command["name"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - {"kernel", "command", "seed", "budgets", "tolerances", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in doc:
            raise ConfigError("seed is required")
        seed = _seed(doc["seed"])
        kernel = doc.get("kernel")
        if not isinstance(kernel, dict) or "name" not in kernel:
            raise ConfigError("kernel block with a 'name' is required")
        command = doc.get("command")
        if not isinstance(command, dict) or command.get("name") not in COMMANDS:
            raise ConfigError(f"command block needs 'name' in {COMMANDS}")
        try:
            budgets = Budgets(**doc.get("budgets", {}))
            tol = Tolerances(**doc.get("tolerances", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        output = doc.get("output", "out")
        if not isinstance(output, str):
            raise ConfigError("output must be a path string")
        return cls(kernel, command, seed, budgets, tol, output)


def _seed(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {v!r}")
    return v


def load_config(path, seed: int | None = None, output: str | None = None, command: str | None = None) -> RunConfig:
    """Read and validate a config file; CLI overrides are applied before validation."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        doc["seed"] = seed
    if output is not None:
        doc["output"] = output
    if command is not None:
        cmd = doc.get("command")
        if not isinstance(cmd, dict):
            cmd = {}
        if cmd.get("name", command) != command:
            raise ConfigError(f"config is for {cmd.get('name')!r}, not {command!r}")
        doc["command"] = {**cmd, "name": command}
    return RunConfig.from_dict(doc)
