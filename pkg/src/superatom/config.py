"""Run configuration: flat key-value files, overrides and figure presets."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .pulse import full_area_factor


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything needed to reproduce one ensemble run.

    Times are measured in units of the reference pulse duration ``tau_ns``.
    Interaction strength comes either from ``c6_mhz_um6`` (C6-tilde in MHz um^6)
    or from ``scaled_strength``, the median nearest-neighbour |kappa| tau.
    """

    n_atoms: int | None = 70
    mean_atoms: float | None = None
    density: float | None = 1.0e11  # cm^-3
    radius: float | None = None  # um
    c6_mhz_um6: float | None = None
    scaled_strength: float | None = 2000.0
    tau_ns: float = 10.0
    interaction_multiplier: float = 1.0
    interaction_sign: int = -1
    pulse_shape: str = "square"
    scan: str = "tau_scan"
    areas: list[float] | None = None
    area_max: float = 6.0
    n_areas: int = 60
    omega: float | None = None  # rad per tau_ref, tau scans
    tau: float = 1.0  # pulse duration in tau_ref units, omega scans
    target_superatoms: int | None = None
    m_max: int = 7
    n_realizations: int = 100
    seed: int = 0
    correlation_area: float | None = None
    bin_width: float = 0.5
    min_distance: float = 1.0e-3
    gaussian_window: float = 3.0
    rtol: float = 1.0e-10
    atol: float = 1.0e-12
    prominence: float = 0.02
    nd_convention: str = "atoms_per_domain"
    retain_curves: bool = True
    max_failed_fraction: float = 0.1
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if (self.n_atoms is None) == (self.mean_atoms is None):
            raise ConfigError("give exactly one of n_atoms and mean_atoms")
        if self.n_atoms is not None and self.n_atoms < 1:
            raise ConfigError(f"n_atoms must be positive, got {self.n_atoms}")
        if self.mean_atoms is not None and not self.mean_atoms > 0:
            raise ConfigError(f"mean_atoms must be positive, got {self.mean_atoms}")
        if (self.density is None) == (self.radius is None):
            raise ConfigError("give exactly one of density and radius")
        if (self.c6_mhz_um6 is None) == (self.scaled_strength is None):
            raise ConfigError("give exactly one of c6_mhz_um6 and scaled_strength")
        if self.scaled_strength is not None and self.scaled_strength < 0:
            raise ConfigError("scaled_strength must be non-negative")
        if self.pulse_shape not in ("square", "gaussian"):
            raise ConfigError(f"unknown pulse_shape {self.pulse_shape!r}")
        if self.scan not in ("tau_scan", "omega_scan"):
            raise ConfigError(f"unknown scan {self.scan!r}")
        grid = self.area_grid()
        if grid.size == 0:
            raise ConfigError("scan grid is empty")
        if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise ConfigError("scan grid must be positive and strictly increasing")
        if self.m_max < 1:
            raise ConfigError("m_max must be at least 1")
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be at least 1")
        if self.interaction_sign not in (-1, 1):
            raise ConfigError("interaction_sign must be -1 or 1")
        if self.nd_convention not in ("atoms_per_domain", "printed"):
            raise ConfigError(f"unknown nd_convention {self.nd_convention!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def area_grid(self) -> np.ndarray:
        if self.areas is not None:
            return np.asarray(self.areas, dtype=float)
        if self.n_areas < 1:
            return np.empty(0)
        return self.area_max * np.arange(1, self.n_areas + 1) / self.n_areas

    @property
    def nominal_atoms(self) -> float:
        return float(self.n_atoms if self.n_atoms is not None else self.mean_atoms)

    def scan_omega(self) -> float:
        """Rabi frequency held fixed during a tau scan (rad per tau_ref)."""
        if self.omega is not None:
            return float(self.omega)
        return float(self.area_grid()[-1] / full_area_factor(self.pulse_shape))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e11`` and ``3E4`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)

PRESETS: dict[str, dict] = {
    "1a": {"pulse_shape": "square", "scan": "tau_scan"},
    "1b": {"pulse_shape": "square", "scan": "omega_scan"},
    "2a": {"pulse_shape": "gaussian", "scan": "tau_scan"},
    "2b": {"pulse_shape": "gaussian", "scan": "omega_scan"},
    "3a": {"pulse_shape": "square", "scan": "tau_scan"},
    "3b": {"pulse_shape": "square", "scan": "omega_scan"},
    "4": {"pulse_shape": "square", "scan": "tau_scan", "correlation_area": 1.0},
    "5": {
        "pulse_shape": "square",
        "scan": "tau_scan",
        "interaction_multiplier": 15.0,
        "n_atoms": None,
        "mean_atoms": 70.0,
    },
}
FULL_SCALE = {
    "n_atoms": 70,
    "density": 1.0e11,
    "target_superatoms": 23,
    "m_max": 7,
    "n_realizations": 100,
}


def parse_value(text: str):
    value = yaml.load(text, Loader=_Loader)
    if isinstance(value, str) and value.lower() in ("none", "null"):
        return None
    return value


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        out[key.strip()] = parse_value(text.strip())
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        data = yaml.load(path.read_text(encoding="utf-8"), Loader=_Loader)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key: value mapping")
    return data


EXCLUSIVE = (("n_atoms", "mean_atoms"), ("density", "radius"), ("c6_mhz_um6", "scaled_strength"))


def _merge(values: dict, layer: dict) -> None:
    """Apply ``layer`` on top of ``values``.

    Setting one key of an exclusive pair clears its partner unless the same
    layer sets the partner too.
    """
    for a, b in EXCLUSIVE:
        if layer.get(a) is not None and b not in layer:
            values[b] = None
        if layer.get(b) is not None and a not in layer:
            values[a] = None
    values.update(layer)


def build_config(path=None, figure: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the figure preset, then the file, then ``overrides``."""
    values = {f.name: f.default for f in dataclasses.fields(RunConfig)}
    layers = []
    if figure is not None:
        if figure not in PRESETS:
            raise ConfigError(f"unknown figure preset {figure!r}; choose from {sorted(PRESETS)}")
        layers += [FULL_SCALE, PRESETS[figure]]
    if path is not None:
        layers.append(load_file(path))
    layers.append(overrides or {})
    for layer in layers:
        unknown = set(layer) - FIELD_NAMES
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        _merge(values, layer)
    return RunConfig(**values)
