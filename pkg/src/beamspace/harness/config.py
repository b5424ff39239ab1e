"""Experiment configuration loaded from JSON.

Radio keys use the names of the simulation-parameter table; everything has
a default so an empty object ``{}`` is a valid config.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..channel import BeamPair, PathGeometry, RadioConstants
from ..power import BeamwidthBounds, PowerBudget
from ..tracking import TrackingConfig


class ConfigError(ValueError):
    pass


def _frange(lo: float, hi: float, step: float) -> list[float]:
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(n + 1)]


@dataclass(frozen=True)
class ExperimentConfig:
    # radio constants
    fc_ghz: float = 60.0
    bandwidth_hz: float = 1.5e9
    n_max: int = 10
    p_max_dbm: float = 3.0
    P_max_dbm: float = 9.0
    r_los_m: float = 4.0
    xi_t_deg: float = 10.0
    xi_r_deg: float = 15.0
    a_los: float = 32.5
    a_nlos: float = 45.5
    n_los: float = 2.0
    n_nlos: float = 1.4
    z: float = 0.1
    nf_db: float = 6.0
    # rate-vs-threshold sweep: NLOS paths, LOS is added implicitly
    theta_t_deg: tuple[float, ...] = (10, 20, 30, 40, 50, 60, 70, 80)
    theta_r_deg: tuple[float, ...] = (20, 30, 40, 40, 60, 70, 80, 80)
    eta_db: tuple[float, ...] = tuple(_frange(0.0, 30.0, 1.0))
    policy: str = "both"
    # rate map grid
    rate_map_theta_t_deg: tuple[float, ...] = tuple(_frange(5.0, 80.0, 5.0))
    rate_map_theta_r_deg: tuple[float, ...] = tuple(_frange(5.0, 80.0, 5.0))
    # outage sweep
    p: tuple[float, ...] = tuple(_frange(0.0, 1.0, 0.1))
    n_list: tuple[int, ...] = (1, 2, 4, 8)
    trials: int = 100_000
    seed: int = 0
    # training demo
    sectors: tuple[int, ...] = (8, 16, 32, 64, 128)
    n_cap: int = 10
    sector_span_deg: float = 10.0
    combining_sizes: tuple[tuple[int, int], ...] = ((1, 4), (2, 5), (3, 3), (4, 4), (8, 8), (10, 4))
    # tracking
    tracking_script: str = "fig6"
    tracking_eta_db: float = 10.0
    tracking_runs: int = 20
    # sync
    sync_total_bytes: int = 3000
    sync_snr_linear: tuple[float, ...] = (2.0, 1.0)
    sync_rates_bps: tuple[float, ...] = (16e6, 8e6)
    sync_cycles: int = 3

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        if len(self.theta_t_deg) != len(self.theta_r_deg):
            raise ConfigError("theta_t_deg and theta_r_deg must have equal length")
        if not all(0.0 <= p <= 1.0 for p in self.p):
            raise ConfigError("outage probabilities must lie in [0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if any(n < 1 for n in self.n_list):
            raise ConfigError("n_list entries must be at least 1")
        if self.policy not in ("PPA", "APA", "both"):
            raise ConfigError(f"policy must be PPA, APA or both, got {self.policy!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if any(m < 1 for m in self.sectors) or self.n_cap < 1:
            raise ConfigError("sector counts and n_cap must be positive")
        for name in ("bandwidth_hz", "fc_ghz", "r_los_m", "xi_t_deg", "xi_r_deg"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite")
        # building the derived objects runs their own checks
        self.constants()
        self.budget()
        self.bounds()
        self.nlos_geometries()

    # -- derived objects ---------------------------------------------------
    def constants(self) -> RadioConstants:
        return RadioConstants(
            fc_ghz=self.fc_ghz, bandwidth_hz=self.bandwidth_hz, nf_db=self.nf_db,
            a_los=self.a_los, a_nlos=self.a_nlos, n_los=self.n_los, n_nlos=self.n_nlos, z=self.z,
        )

    def budget(self, eta_db: float = 0.0) -> PowerBudget:
        return PowerBudget(self.p_max_dbm, self.P_max_dbm, self.n_max, eta_db)

    def bounds(self) -> BeamwidthBounds:
        return BeamwidthBounds.from_degrees(self.xi_t_deg, self.xi_r_deg)

    def nlos_geometries(self) -> list[PathGeometry]:
        return [PathGeometry.nlos_deg(t, r, self.r_los_m)
                for t, r in zip(self.theta_t_deg, self.theta_r_deg)]

    def beam_pairs(self, include_los: bool = True) -> list[BeamPair]:
        """LOS gets id 0 and NLOS paths ids 1.. in configuration order."""
        xt, xr = math.radians(self.xi_t_deg), math.radians(self.xi_r_deg)
        out = [BeamPair(0, PathGeometry.los(self.r_los_m), xt, xr)] if include_los else []
        out += [BeamPair(i + 1, g, xt, xr) for i, g in enumerate(self.nlos_geometries())]
        return out

    def tracking_config(self) -> TrackingConfig:
        return TrackingConfig(eta_db=self.tracking_eta_db)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, value, default):
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        if default and isinstance(default[0], tuple):
            return tuple(tuple(int(v) for v in item) for item in value)
        return tuple(value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name} must be an integer")
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name: f for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        try:
            kwargs[name] = _coerce(name, value, known[name].default)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}: {exc}") from exc
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)
