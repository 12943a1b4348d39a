"""Run configuration: one JSON document, overridable from the command line."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .htype import DamekRicciSpace, parse_space, space_from_descriptor


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    space: dict = field(default_factory=lambda: {"family": "heisenberg", "k": 1})
    seed: int = 0
    suites: list | None = None
    mc_samples: int = 1_000_000
    workers: int = 1
    wave_cutoff: float = 30.0
    atom_cutoff: float = 60.0
    n_atoms: int = 6
    tolerances: dict = field(default_factory=dict)
    # tabulation ranges: [start, stop, count]
    lambda_range: list = field(default_factory=lambda: [0.0, 30.0, 31])
    r_range: list = field(default_factory=lambda: [0.0, 8.0, 81])
    t_values: list | None = None
    p: float = 2.0
    alpha0: float | None = None
    kernel: dict = field(default_factory=lambda: {"kind": "cosine", "t": 0.0, "alpha": 0.0, "cutoff": 50.0, "r_max": 10.0})
    out: str | None = None
    format: str = "csv"

    def validate(self) -> "RunConfig":
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or v <= 0:
                raise ConfigError(f"field 'tolerances.{k}': tolerance must be a positive number, got {v!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError(f"field 'seed': integer required, got {self.seed!r}")
        if self.mc_samples <= 0:
            raise ConfigError("field 'mc_samples': must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"field 'format': expected 'csv' or 'json', got {self.format!r}")
        for name in ("lambda_range", "r_range"):
            rng = getattr(self, name)
            if len(rng) != 3 or int(rng[2]) < 1 or rng[1] < rng[0]:
                raise ConfigError(f"field '{name}': expected [start, stop, count]")
        try:
            self.build_space()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"field 'space': {exc}") from exc
        return self

    def build_space(self) -> DamekRicciSpace:
        if isinstance(self.space, str):
            return parse_space(self.space)
        return space_from_descriptor(self.space)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config(text: str) -> RunConfig:
    """Parse a JSON config; errors name the offending line/column or field."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    return RunConfig(**raw).validate()


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def override(cfg: RunConfig, **kw: Any) -> RunConfig:
    for k, v in kw.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg.validate()
