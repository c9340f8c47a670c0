"""Experiment configuration: nested dataclasses loaded from a single JSON document.

Defaults reproduce the published setup (``paper`` preset); ``desk`` shrinks
grids and mass ratios so every experiment finishes in minutes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional


class ConfigError(ValueError):
    pass


@dataclass
class PotentialConfig:
    delta: float = 0.1
    a: float = 1.0
    b: float = 10.0


@dataclass
class GridConfig:
    x_min: float
    x_max: float
    n_intervals: int


@dataclass
class PhaseGridConfig:
    half_width: float = 4.5
    n_nodes: int = 1001


@dataclass
class LangevinConfig:
    alpha: float = 1.0
    dt: float = 5e-3
    burn_in: int = 2000
    n_steps: int = 100_000
    n_paths: int = 32
    n_batches: int = 32


@dataclass
class DiagConfig:
    delta: float = 0.5
    M_ladder: list = field(default_factory=lambda: [1e3, 2e3, 4e3, 8e3])
    kappa: int = 3
    grid: GridConfig = field(default_factory=lambda: GridConfig(-3.0, 3.0, 1200))


@dataclass
class WeylConfig:
    M_ladder: list = field(default_factory=lambda: [32.0, 64.0, 128.0, 256.0])
    half_width: float = 5.0
    orders: list = field(default_factory=lambda: [0, 1, 2])
    trace_M: float = 100.0


@dataclass
class ExperimentConfig:
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    T_density: float = 1.9946
    T_correlation: float = 1.9947
    M: float = 1000.0
    M_ladder: list = field(default_factory=lambda: [125.0, 250.0, 500.0, 1000.0])
    delta_ladder: list = field(default_factory=lambda: [0.05, 0.1])
    M_correlation: list = field(default_factory=lambda: [25.0, 50.0, 100.0])
    density_grid: GridConfig = field(default_factory=lambda: GridConfig(-6.0, 6.0, 751))
    correlation_grid: GridConfig = field(default_factory=lambda: GridConfig(-4.5, 4.5, 2048))
    phase_grid: PhaseGridConfig = field(default_factory=PhaseGridConfig)
    taus: list = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    tau_convergence: float = 0.2
    verlet_dt: Optional[float] = None
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    diag: DiagConfig = field(default_factory=DiagConfig)
    weyl: WeylConfig = field(default_factory=WeylConfig)
    seed: int = 0
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        errors = []

        def need(cond, name, msg):
            if not cond:
                errors.append(f"{name}: {msg}")

        need(self.potential.delta > 0, "potential.delta", "must be positive")
        need(self.T_density > 0, "T_density", "must be positive")
        need(self.T_correlation > 0, "T_correlation", "must be positive")
        need(self.M > 0, "M", "must be positive")
        for name in ("M_ladder", "M_correlation", "delta_ladder", "taus"):
            seq = getattr(self, name)
            need(isinstance(seq, list) and len(seq) > 0, name, "must be a nonempty list")
        for name in ("M_ladder", "M_correlation", "delta_ladder"):
            need(all(v > 0 for v in getattr(self, name)), name, "entries must be positive")
            need(list(getattr(self, name)) == sorted(set(getattr(self, name))), name,
                 "entries must be strictly increasing")
        need(all(t >= 0 for t in self.taus), "taus", "entries must be >= 0")
        need(self.tau_convergence >= 0, "tau_convergence", "must be >= 0")
        need(self.verlet_dt is None or self.verlet_dt > 0, "verlet_dt", "must be positive or null")
        for name in ("density_grid", "correlation_grid", "diag.grid"):
            g = self.diag.grid if name == "diag.grid" else getattr(self, name)
            need(g.x_min < g.x_max, name, "needs x_min < x_max")
            need(int(g.n_intervals) == g.n_intervals and g.n_intervals >= 2, name, "n_intervals must be an integer >= 2")
        need(self.phase_grid.half_width > 0, "phase_grid.half_width", "must be positive")
        need(self.phase_grid.n_nodes >= 3, "phase_grid.n_nodes", "must be >= 3")
        lc = self.langevin
        need(lc.alpha > 0 and lc.dt > 0, "langevin", "alpha and dt must be positive")
        need(0 <= lc.burn_in < lc.n_steps, "langevin", "need 0 <= burn_in < n_steps")
        need(lc.n_batches >= 20, "langevin.n_batches", "must be >= 20")
        need(0 <= self.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
        need(len(self.diag.M_ladder) > 0 and all(m > 0 for m in self.diag.M_ladder), "diag.M_ladder",
             "must be a nonempty list of positive values")
        need(1 <= self.diag.kappa <= 4, "diag.kappa", "must lie in 1..4")
        need(len(self.weyl.M_ladder) > 0 and all(m > 0 for m in self.weyl.M_ladder), "weyl.M_ladder",
             "must be a nonempty list of positive values")
        need(all(0 <= m <= 4 for m in self.weyl.orders), "weyl.orders", "entries must lie in 0..4")
        if errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of every field that affects results (the output directory does not)."""
        data = self.to_dict()
        data.pop("out")
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def desk_preset() -> ExperimentConfig:
    cfg = ExperimentConfig()
    cfg.density_grid = GridConfig(-6.0, 6.0, 301)
    cfg.M = 100.0
    cfg.M_ladder = [25.0, 50.0, 100.0]
    cfg.correlation_grid = GridConfig(-4.5, 4.5, 1024)
    cfg.phase_grid = PhaseGridConfig(4.5, 201)
    cfg.taus = [0.0, 0.2, 0.4]
    cfg.langevin = LangevinConfig(n_steps=40_000)
    return cfg


PRESETS = {"paper": ExperimentConfig, "desk": desk_preset}


def _build(cls, data: Any, path: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown field(s) {', '.join(unknown)}")
    return data


def merge(base: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply a (possibly partial) nested dict of overrides to ``base``."""

    def apply(obj, data, path):
        _build(type(obj), data, path)
        for key, value in data.items():
            current = getattr(obj, key)
            sub = f"{path}.{key}" if path else key
            if dataclasses.is_dataclass(current):
                if not isinstance(value, dict):
                    raise ConfigError(f"{sub}: expected an object")
                apply(current, value, sub)
            else:
                setattr(obj, key, value)

    apply(base, overrides, "")
    return base


def load(path: Optional[str | Path] = None, preset: str = "paper") -> ExperimentConfig:
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
    cfg = PRESETS[preset]()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        cfg = merge(cfg, data)
    return cfg.validate()
