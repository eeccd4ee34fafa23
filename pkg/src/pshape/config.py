"""Run configuration: line-oriented ``key = value`` files with dotted keys.

Example::

    command = solve-state
    grid.extent = 0, 1
    grid.n = 257
    domain.kind = box
    p = 2
    f.kind = constant
    f.value = 1
    output.dir = out
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import DomainMask, Grid, GridFunction, box_mask, build_grid, disc_mask
from .io import read_function

COMMANDS = (
    "solve-state",
    "optimize-fb",
    "optimize-control",
    "gamma-distance",
    "perimeter-diag",
    "inf-lens",
    "check-hypotheses",
)


class ConfigError(ValueError):
    pass


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


@dataclass
class RunConfig:
    values: dict[str, str] = field(default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        return cls(parse_text(path.read_text(encoding="utf-8")), path.parent)

    def update(self, pairs: list[str]) -> None:
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            self.values[k.strip()] = v.strip()

    def echo(self) -> dict[str, str]:
        return dict(sorted(self.values.items()))

    # typed access -------------------------------------------------------------

    def has(self, key: str) -> bool:
        return key in self.values

    def str(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default

    def float(self, key: str, default: float | None = None) -> float:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return default
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} = {self.values[key]!r} is not a number") from None

    def int(self, key: str, default: int | None = None) -> int:
        value = self.float(key, None if default is None else float(default))
        if value != int(value):
            raise ConfigError(f"{key} must be an integer")
        return int(value)

    def floats(self, key: str, default: list[float] | None = None) -> list[float]:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return list(default)
        try:
            return [float(s) for s in self.values[key].replace(";", ",").split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"{key} = {self.values[key]!r} is not a list of numbers") from None

    def path(self, key: str) -> Path:
        p = Path(self.str(key))
        if not p.is_absolute():
            p = self.base / p
        if not p.exists():
            raise ConfigError(f"{key}: file {p} does not exist")
        return p

    @property
    def command(self) -> str:
        cmd = self.str("command")
        if cmd not in COMMANDS:
            raise ConfigError(f"unknown command {cmd!r}")
        return cmd

    @property
    def output_dir(self) -> Path:
        return Path(self.str("output.dir", "pshape_out"))

    # model objects -------------------------------------------------------------

    def grid(self) -> Grid:
        try:
            return build_grid(self.floats("grid.extent"), [int(k) for k in self.floats("grid.n")] if "," in self.str("grid.n") else self.int("grid.n"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def domain(self, grid: Grid) -> DomainMask:
        kind = self.str("domain.kind", "box")
        if kind == "box":
            return box_mask(grid)
        if kind == "disc":
            center = self.floats("domain.center", [0.0] * grid.dim)
            radius = self.float("domain.radius", 1.0)
            if radius <= 0:
                raise ConfigError("domain.radius must be positive")
            return disc_mask(grid, center, radius)
        raise ConfigError(f"unknown domain.kind {kind!r}")

    def data(self, name: str, grid: Grid, default: float = 1.0) -> GridFunction:
        """Data field ``name`` (f or g): constant, radial polynomial or CSV."""
        kind = self.str(f"{name}.kind", "constant")
        if kind == "constant":
            return GridFunction(grid, np.full(grid.shape, self.float(f"{name}.value", default)))
        if kind == "radial":
            coeffs = self.floats(f"{name}.coeffs")
            center = self.floats(f"{name}.center", [0.0] * grid.dim)
            r = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.coords, center)))
            return GridFunction(grid, sum(c * r**k for k, c in enumerate(coeffs)))
        if kind == "csv":
            u = read_function(self.path(f"{name}.path"))
            if u.grid != grid:
                raise ConfigError(f"{name}.path: grid {u.grid} differs from configured grid {grid}")
            return u
        raise ConfigError(f"unknown {name}.kind {kind!r}")

    def p(self) -> float:
        p = self.float("p")
        if not (p > 1 and math.isfinite(p)):
            raise ConfigError(f"p must satisfy 1 < p < inf, got {p}")
        return p
