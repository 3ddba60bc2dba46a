"""Simulation configuration and its plain-text key/value file format."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

SAFETY_FACTOR = 8.0


class ConfigError(ValueError):
    """Raised with every problem found in a configuration, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def min_half_width(n: int, horizon_t: float, safety: float = SAFETY_FACTOR) -> int:
    """Smallest lattice half-width keeping the outer walls out of diffusive reach."""
    return max(2, math.ceil(safety * n * math.sqrt(max(horizon_t, 0.0))))


@dataclass(frozen=True)
class SimulationConfig:
    n: int
    alpha: float
    beta: float
    rho: float
    horizon_t: float
    lattice_half_width: int | None = None
    seed: int = 0
    replicas: int = 1
    safety: float = SAFETY_FACTOR

    @property
    def L(self) -> int:
        if self.lattice_half_width is None:
            return min_half_width(self.n, self.horizon_t, self.safety)
        return self.lattice_half_width

    @property
    def slow_rate(self) -> float:
        """Conductance of the bond {-1, 0}; exactly zero for beta = inf."""
        if math.isinf(self.beta):
            return 0.0
        return self.alpha * float(self.n) ** (-self.beta)

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.n, int) or self.n < 1:
            out.append(f"n must be a positive integer, got {self.n!r}")
        if not self.alpha > 0:
            out.append(f"alpha must be positive, got {self.alpha!r}")
        if not self.beta >= 0:
            out.append(f"beta must be in [0, inf], got {self.beta!r}")
        if not 0.0 <= self.rho <= 1.0:
            out.append(f"rho must lie in [0, 1], got {self.rho!r}")
        if not self.horizon_t >= 0:
            out.append(f"horizon_t must be nonnegative, got {self.horizon_t!r}")
        if self.safety < SAFETY_FACTOR:
            out.append(f"safety factor must be >= {SAFETY_FACTOR}, got {self.safety!r}")
        if not isinstance(self.replicas, int) or self.replicas < 1:
            out.append(f"replicas must be a positive integer, got {self.replicas!r}")
        if not 0 <= self.seed < 2**64:
            out.append(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.lattice_half_width is not None and not out:
            need = min_half_width(self.n, self.horizon_t, self.safety)
            if self.lattice_half_width < need:
                out.append(
                    f"lattice_half_width={self.lattice_half_width} below "
                    f"ceil({self.safety:g}*n*sqrt(horizon_t))={need}"
                )
        return out

    def validate(self) -> "SimulationConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


_KEYS = {f.name for f in fields(SimulationConfig)}


def _parse_beta(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity", "∞"):
        return math.inf
    return float(text)


_CASTS = {
    "n": int,
    "alpha": float,
    "beta": _parse_beta,
    "rho": float,
    "horizon_t": float,
    "lattice_half_width": int,
    "seed": int,
    "replicas": int,
    "safety": float,
}


def parse_config_text(text: str) -> SimulationConfig:
    """Parse ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string("[sim]\n" + text)
    raw = dict(parser["sim"])
    problems = [f"unknown key {k!r}" for k in raw if k not in _KEYS]
    values = {}
    for key, value in raw.items():
        if key not in _KEYS:
            continue
        try:
            values[key] = _CASTS[key](value)
        except ValueError:
            problems.append(f"bad value for {key}: {value!r}")
    for key in ("n", "alpha", "beta", "rho", "horizon_t"):
        if key not in values and not any(p.startswith(f"bad value for {key}") for p in problems):
            problems.append(f"missing required key {key!r}")
    if problems:
        raise ConfigError(problems)
    return SimulationConfig(**values)


def load_config(path) -> SimulationConfig:
    return parse_config_text(Path(path).read_text())


def format_config(cfg: SimulationConfig) -> str:
    beta = "inf" if math.isinf(cfg.beta) else repr(cfg.beta)
    lines = [
        f"n = {cfg.n}",
        f"alpha = {cfg.alpha!r}",
        f"beta = {beta}",
        f"rho = {cfg.rho!r}",
        f"horizon_t = {cfg.horizon_t!r}",
        f"lattice_half_width = {cfg.L}",
        f"seed = {cfg.seed}",
        f"replicas = {cfg.replicas}",
    ]
    return "\n".join(lines) + "\n"
