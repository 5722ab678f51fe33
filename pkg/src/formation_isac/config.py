"""Scenario documents: YAML in, validated dataclasses out.

Every section maps onto a dataclass and unknown keys raise
:class:`ConfigError`, so a typo in a physics constant cannot pass
silently. Fields ending in ``_db`` / ``_dbm`` are stored as given and
exposed in linear units through properties.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .aero import AeroParams, EnergyParams
from .control import ControlModel
from .formation import FormationConfig
from .radio import ArrayGeometry, ChannelConst, db_to_linear, dbm_to_watt


class ConfigError(ValueError):
    """Schema violation in a scenario document."""


@dataclass(frozen=True)
class ChannelSpec:
    rho0_db: float = -60.0
    noise_dbm: float = -90.0
    bandwidth: float = 1.0

    def build(self) -> ChannelConst:
        return ChannelConst(rho0=db_to_linear(self.rho0_db),
                            noise_power=dbm_to_watt(self.noise_dbm),
                            bandwidth=self.bandwidth)


@dataclass(frozen=True)
class ControlSpec:
    """Identity-structured plant ``A = a I`` with scaled noise covariances."""

    n1: int = 50
    a: float = 1.0
    sigma_v: float = 0.01
    sigma_w: float = 0.001
    r: float = 0.0

    def __post_init__(self):
        if self.n1 < 1:
            raise ConfigError("control.n1 must be positive")
        if self.sigma_v < 0 or self.sigma_w <= 0 or self.r < 0:
            raise ConfigError("control noise levels must be positive and r nonnegative")

    def build(self, v_scale: float = 1.0, w_scale: float = 1.0) -> ControlModel:
        return ControlModel.diagonal(self.n1, self.a, self.sigma_v * v_scale,
                                     self.sigma_w * w_scale, self.r)


@dataclass(frozen=True)
class FormationSpec:
    m: int = 9
    center: tuple = (100.0, 50.0)
    kappa: float = 1 / 3
    theta_mix: float = 0.5
    step: float = 2e-3
    comb_weights: tuple = (1 / 3, 1 / 3, 1 / 3)
    sigma_x2: float = 2e-4
    sigma_y2: float = 2e-4
    sigma_obs2: float = 1e-4
    lam: Optional[tuple] = None

    def build(self, v0: float, dt: float) -> FormationConfig:
        return FormationConfig(m=self.m, kappa=self.kappa, theta_mix=self.theta_mix,
                               step=self.step, comb_weights=tuple(self.comb_weights),
                               v0=v0, dt=dt, sigma_x2=self.sigma_x2, sigma_y2=self.sigma_y2,
                               sigma_obs2=self.sigma_obs2, center=tuple(self.center),
                               lam=None if self.lam is None else tuple(self.lam))


def _default_formations():
    return (FormationSpec(m=19, center=(20.0, 50.0)), FormationSpec(m=9, center=(100.0, 50.0)))


@dataclass(frozen=True)
class FlightSpec:
    v0: float = 5.0
    dt: float = 0.05
    altitude: float = 30.0
    n_slots: int = 200

    def __post_init__(self):
        if self.v0 <= 0 or self.dt <= 0 or self.altitude <= 0 or self.n_slots < 1:
            raise ConfigError("flight quantities must be positive")


@dataclass(frozen=True)
class SensingSpec:
    """Sample points drawn uniformly in a rectangle at the flight altitude."""

    n_points: int = 20
    n_used: int = 8
    x_range: tuple = (15.0, 85.0)
    y_range: tuple = (-140.0, -130.0)
    seed: int = 1

    def __post_init__(self):
        if not 1 <= self.n_used <= self.n_points:
            raise ConfigError("sensing.n_used must lie in [1, n_points]")

    def points(self, altitude: float) -> np.ndarray:
        rng = np.random.Generator(np.random.Philox(self.seed))
        xs = rng.uniform(*self.x_range, size=self.n_points)
        ys = rng.uniform(*self.y_range, size=self.n_points)
        pts = np.column_stack([xs, ys, np.full(self.n_points, altitude)])
        return pts[: self.n_used]


@dataclass(frozen=True)
class BeamformSpec:
    n_slots: int = 8
    p_max_dbm: float = 30.0
    gamma_th_dbm: float = 0.0
    slot_weight: Optional[float] = None   # defaults to flight.n_slots / n_slots
    leaders: str = "kinematic"
    tol: float = 1e-4
    max_outer: int = 30
    random_seeds: int = 10
    p_sweep_dbm: tuple = (15.0, 20.0, 25.0, 30.0, 35.0)
    gamma_sweep_dbm: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    gamma_sweep_p_dbm: float = 25.0

    def __post_init__(self):
        if self.n_slots < 1:
            raise ConfigError("beamform.n_slots must be positive")
        if self.leaders not in ("kinematic", "trace"):
            raise ConfigError("beamform.leaders must be 'kinematic' or 'trace'")

    @property
    def p_max(self) -> float:
        return dbm_to_watt(self.p_max_dbm)

    @property
    def gamma_th(self) -> float:
        return dbm_to_watt(self.gamma_th_dbm)


@dataclass(frozen=True)
class LqrSweepSpec:
    """Grid over noise scales and power budgets.

    ``rate_source`` picks the beamformer whose minimum rate feeds the
    trade-off curve: the optimised design or one of the cheap baselines.
    """

    v_scales: tuple = (1e-3, 0.5, 1.0, 2.0, 4.0)
    w_scales: tuple = (1e-3, 0.5, 1.0, 2.0, 4.0)
    p_max_dbm: tuple = (15.0, 20.0, 25.0, 30.0, 35.0)
    rate_source: str = "proposed"

    def __post_init__(self):
        if self.rate_source not in ("proposed", "identical", "water_filling"):
            raise ConfigError("lqr_sweep.rate_source must be proposed, identical or water_filling")
        if min(self.v_scales + self.w_scales) <= 0:
            raise ConfigError("noise scales must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Inclusive linspace grid ``x0:x1:nx,y0:y1:ny``."""

    x0: float
    x1: float
    nx: int
    y0: float
    y1: float
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2 or not self.x1 > self.x0 or not self.y1 > self.y0:
            raise ConfigError("grid needs at least 2 points per axis and increasing bounds")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        try:
            xs, ys = text.split(",")
            x0, x1, nx = xs.split(":")
            y0, y1, ny = ys.split(":")
            return cls(float(x0), float(x1), int(nx), float(y0), float(y1), int(ny))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad grid spec {text!r}; expected x0:x1:nx,y0:y1:ny") from exc

    def axes(self):
        return np.linspace(self.x0, self.x1, self.nx), np.linspace(self.y0, self.y1, self.ny)

    def __str__(self):
        return f"{self.x0:g}:{self.x1:g}:{self.nx},{self.y0:g}:{self.y1:g}:{self.ny}"


@dataclass(frozen=True)
class UpwashMapSpec:
    """``avg`` maps the wake of one UAV at the origin; ``total`` sums over ``generators``."""

    mode: str = "avg"
    grid: str = "-2:2:100,-2:2:100"
    generators: tuple = ((0.0, 0.0),)

    def __post_init__(self):
        if self.mode not in ("avg", "total"):
            raise ConfigError("upwash_map.mode must be 'avg' or 'total'")
        GridSpec.parse(self.grid)
        g = np.asarray(self.generators, dtype=float)
        if g.ndim != 2 or g.shape[1] != 2 or g.shape[0] < 1:
            raise ConfigError("upwash_map.generators must be a list of (x, y) pairs")


@dataclass(frozen=True)
class ScenarioDoc:
    seed: int = 0
    out: str = "out"
    aero: AeroParams = field(default_factory=AeroParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    flight: FlightSpec = field(default_factory=FlightSpec)
    formations: tuple = field(default_factory=_default_formations)
    array: ArrayGeometry = field(default_factory=ArrayGeometry)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    control: ControlSpec = field(default_factory=ControlSpec)
    sensing: SensingSpec = field(default_factory=SensingSpec)
    beamform: BeamformSpec = field(default_factory=BeamformSpec)
    lqr_sweep: LqrSweepSpec = field(default_factory=LqrSweepSpec)
    upwash_map: UpwashMapSpec = field(default_factory=UpwashMapSpec)

    def formation_configs(self) -> list[FormationConfig]:
        return [f.build(self.flight.v0, self.flight.dt) for f in self.formations]

    @property
    def slot_weight(self) -> float:
        w = self.beamform.slot_weight
        return self.flight.n_slots / self.beamform.n_slots if w is None else w

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


_SECTIONS = {
    "aero": AeroParams, "energy": EnergyParams, "flight": FlightSpec,
    "array": ArrayGeometry, "channel": ChannelSpec, "control": ControlSpec,
    "sensing": SensingSpec, "beamform": BeamformSpec, "lqr_sweep": LqrSweepSpec,
    "upwash_map": UpwashMapSpec,
}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _tupled(v):
    return tuple(_tupled(x) for x in v) if isinstance(v, list) else v


def _build(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {k: _tupled(v) for k, v in raw.items()}
    for k, v in kwargs.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{where}.{k} must be finite")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(raw: Optional[dict]) -> ScenarioDoc:
    """Validate a parsed document and build the typed scenario."""
    raw = dict(raw or {})
    top = {f.name for f in dataclasses.fields(ScenarioDoc)}
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {name: _build(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    if "formations" in raw:
        forms = raw["formations"]
        if not isinstance(forms, list) or not forms:
            raise ConfigError("formations must be a nonempty list")
        kwargs["formations"] = tuple(_build(FormationSpec, f, f"formations[{i}]")
                                     for i, f in enumerate(forms))
    for key in ("seed", "out"):
        if key in raw:
            kwargs[key] = raw[key]
    doc = ScenarioDoc(**kwargs)
    if not isinstance(doc.seed, int) or doc.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    try:
        doc.formation_configs()
    except ValueError as exc:
        raise ConfigError(f"formations: {exc}") from exc
    return doc


def load(path: Optional[str | Path]) -> ScenarioDoc:
    """Read a YAML scenario; ``None`` gives the built-in defaults."""
    if path is None:
        return ScenarioDoc()
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("a scenario document must be a mapping")
    return from_dict(raw)


def dump(doc: ScenarioDoc) -> str:
    return yaml.safe_dump(doc.to_dict(), sort_keys=False)
