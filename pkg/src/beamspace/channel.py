"""Link budget for LOS and first-order-reflection NLOS beam pairs.

Distances are in meters, angles in radians, powers in mW internally; dB and
dBm appear only at the interfaces. Gains follow the ideal sectored antenna
model: a flat main lobe of width ``xi`` and a flat side-lobe level ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

__all__ = [
    "LOS",
    "NLOS",
    "PathKind",
    "RadioConstants",
    "PathGeometry",
    "BeamPair",
    "LinkBudget",
    "db_to_lin",
    "lin_to_db",
    "dbm_to_mw",
    "mw_to_dbm",
    "nlos_distance",
    "path_loss_db",
    "received_power_mw",
    "main_lobe_gain",
    "pencil_gain",
    "noise_power_dbm",
    "snr_db",
    "sinr_db",
    "link_budget",
    "link_rate_bps",
]

TWO_PI = 2.0 * math.pi
SPEED_OF_LIGHT = 299_792_458.0


class PathKind(str, Enum):
    LOS = "LOS"
    NLOS = "NLOS"


LOS = PathKind.LOS
NLOS = PathKind.NLOS


def db_to_lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def lin_to_db(x: float) -> float:
    if x <= 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


dbm_to_mw = db_to_lin
mw_to_dbm = lin_to_db


@dataclass(frozen=True)
class RadioConstants:
    """Radio parameters. Defaults reproduce the 60 GHz indoor setup."""

    fc_ghz: float = 60.0
    bandwidth_hz: float = 1.5e9
    nf_db: float = 6.0
    a_los: float = 32.5
    a_nlos: float = 45.5
    n_los: float = 2.0
    n_nlos: float = 1.4
    z: float = 0.1
    beta: float = 0.0

    def __post_init__(self):
        if self.fc_ghz <= 0:
            raise ValueError(f"carrier frequency must be positive, got {self.fc_ghz}")
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_hz}")
        if not 0.0 <= self.z < 1.0:
            raise ValueError(f"side-lobe gain must satisfy 0 <= z < 1, got {self.z}")
        if self.n_los <= 0 or self.n_nlos <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.beta < 0:
            raise ValueError("absorption factor must be non-negative")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / (self.fc_ghz * 1e9)

    def with_z(self, z: float) -> "RadioConstants":
        return replace(self, z=z)


@dataclass(frozen=True)
class PathGeometry:
    """One propagation path, described by its offsets from boresight."""

    kind: PathKind
    theta_t: float = 0.0
    theta_r: float = 0.0
    r_los: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PathKind(self.kind))
        if self.r_los <= 0:
            raise ValueError(f"LOS distance must be positive, got {self.r_los}")
        at, ar = abs(self.theta_t), abs(self.theta_r)
        if self.kind is LOS:
            if at != 0.0 or ar != 0.0:
                raise ValueError("LOS path has zero offset angles")
        else:
            if not 0.0 < at < math.pi:
                raise ValueError(f"NLOS needs 0 < |theta_t| < pi, got {self.theta_t}")
            if not 0.0 < ar < math.pi - at:
                raise ValueError(
                    f"NLOS needs 0 < |theta_r| < pi - |theta_t|, got theta_r={self.theta_r}"
                )

    @classmethod
    def los(cls, r_los: float) -> "PathGeometry":
        return cls(LOS, 0.0, 0.0, r_los)

    @classmethod
    def nlos_deg(cls, theta_t_deg: float, theta_r_deg: float, r_los: float) -> "PathGeometry":
        return cls(NLOS, math.radians(theta_t_deg), math.radians(theta_r_deg), r_los)

    @property
    def distance(self) -> float:
        return nlos_distance(self)


@dataclass(frozen=True)
class BeamPair:
    id: int
    geometry: PathGeometry
    xi_t: float = math.radians(10.0)
    xi_r: float = math.radians(15.0)

    def __post_init__(self):
        for name in ("xi_t", "xi_r"):
            xi = getattr(self, name)
            if not 0.0 < xi <= TWO_PI:
                raise ValueError(f"{name} must lie in (0, 2*pi], got {xi}")

    @property
    def kind(self) -> PathKind:
        return self.geometry.kind

    @property
    def distance(self) -> float:
        return nlos_distance(self.geometry)


@dataclass(frozen=True)
class LinkBudget:
    pt_dbm: float
    gt_db: float
    gr_db: float
    loss_db: float
    noise_dbm: float
    interference_mw: float
    sinr_db: float = field(init=False)

    def __post_init__(self):
        s = dbm_to_mw(self.pt_dbm + self.gt_db + self.gr_db - self.loss_db)
        object.__setattr__(
            self, "sinr_db", lin_to_db(s / (dbm_to_mw(self.noise_dbm) + self.interference_mw))
        )


def nlos_distance(g: PathGeometry) -> float:
    """Length of the reflected path, from the triangle MTX-reflector-MRX.

    >>> round(nlos_distance(PathGeometry.nlos_deg(60, 60, 4.0)), 9)
    8.0
    """
    if g.kind is LOS:
        return g.r_los
    at, ar = abs(g.theta_t), abs(g.theta_r)
    denom = math.sin(math.pi - at - ar)
    if at + ar >= math.pi or denom <= 0.0:
        raise ValueError("offset angles must satisfy |theta_t| + |theta_r| < pi")
    return (math.sin(at) + math.sin(ar)) / denom * g.r_los


def path_loss_db(k: RadioConstants, kind: PathKind, r_m: float,
                 model: str = "log-distance") -> float:
    """Transmission loss in dB at distance ``r_m`` meters.

    ``model="log-distance"`` is ``A + 20 log10(fc_GHz) + 10 n log10(R)`` with
    ``(A, n)`` picked by path kind. ``model="friis"`` is the free-space form
    ``(4 pi R / lambda)^2 e^(beta R)`` and ignores the kind.
    """
    if r_m <= 0:
        raise ValueError(f"distance must be positive, got {r_m}")
    kind = PathKind(kind)
    if model == "log-distance":
        a, n = (k.a_los, k.n_los) if kind is LOS else (k.a_nlos, k.n_nlos)
        return a + 20.0 * math.log10(k.fc_ghz) + 10.0 * n * math.log10(r_m)
    if model == "friis":
        fs = 20.0 * math.log10(4.0 * math.pi * r_m / k.wavelength_m)
        return fs + 10.0 * math.log10(math.e) * k.beta * r_m
    raise ValueError(f"unknown path-loss model {model!r}")


def received_power_mw(pt_dbm: float, gt_lin: float, gr_lin: float, k: RadioConstants,
                      kind: PathKind, r_m: float, model: str = "log-distance") -> float:
    if gt_lin <= 0 or gr_lin <= 0:
        raise ValueError("antenna gains must be positive")
    return dbm_to_mw(pt_dbm) * gt_lin * gr_lin / db_to_lin(path_loss_db(k, kind, r_m, model))


def main_lobe_gain(xi: float, z: float) -> float:
    """Average main-lobe gain of the sectored pattern.

    Total radiated power is conserved: ``G * xi + z * (2 pi - xi) == 2 pi``.
    """
    if not 0.0 < xi <= TWO_PI:
        raise ValueError(f"beamwidth must lie in (0, 2*pi], got {xi}")
    if not 0.0 <= z < 1.0:
        raise ValueError(f"side-lobe gain must satisfy 0 <= z < 1, got {z}")
    return (TWO_PI - (TWO_PI - xi) * z) / xi


def pencil_gain(xi: float) -> float:
    """Main-lobe gain with no side lobes, ``2 pi / xi``."""
    return main_lobe_gain(xi, 0.0)


def noise_power_dbm(k: RadioConstants) -> float:
    return -174.0 + 10.0 * math.log10(k.bandwidth_hz) + k.nf_db


def _loss_lin(pair: BeamPair, k: RadioConstants) -> float:
    return db_to_lin(path_loss_db(k, pair.kind, pair.distance))


def snr_db(pair: BeamPair, pt_dbm: float, k: RadioConstants,
           gt: float | None = None, gr: float | None = None) -> float:
    """Interference-free SNR of one pair.

    Gains default to the sectored main-lobe gains at the pair's beamwidths.
    """
    gt = main_lobe_gain(pair.xi_t, k.z) if gt is None else gt
    gr = main_lobe_gain(pair.xi_r, k.z) if gr is None else gr
    s = dbm_to_mw(pt_dbm) * gt * gr / _loss_lin(pair, k)
    return lin_to_db(s / dbm_to_mw(noise_power_dbm(k)))


def _interference_mw(victim: BeamPair, active: Sequence[tuple[BeamPair, float]],
                     k: RadioConstants) -> float:
    # Side-lobe leakage is scaled by the victim's own path loss, as in the
    # closed-form SINR this models (not each interferer's path).
    gr = main_lobe_gain(victim.xi_r, k.z)
    leak = sum(dbm_to_mw(pt) for p, pt in active if p.id != victim.id)
    return leak * k.z * gr / _loss_lin(victim, k)


def sinr_db(pair: BeamPair, active: Iterable[tuple[BeamPair, float]],
            k: RadioConstants) -> float:
    """SINR of ``pair`` when every ``(pair, pt_dbm)`` in ``active`` transmits."""
    active = list(active)
    mine = [pt for p, pt in active if p.id == pair.id]
    if len(mine) != 1:
        raise ValueError(f"pair {pair.id} must appear exactly once in the active set")
    gt = main_lobe_gain(pair.xi_t, k.z)
    gr = main_lobe_gain(pair.xi_r, k.z)
    signal = dbm_to_mw(mine[0]) * gt * gr / _loss_lin(pair, k)
    noise = dbm_to_mw(noise_power_dbm(k))
    return lin_to_db(signal / (noise + _interference_mw(pair, active, k)))


def link_budget(pair: BeamPair, pt_dbm: float, active: Iterable[tuple[BeamPair, float]],
                k: RadioConstants) -> LinkBudget:
    active = list(active)
    return LinkBudget(
        pt_dbm=pt_dbm,
        gt_db=lin_to_db(main_lobe_gain(pair.xi_t, k.z)),
        gr_db=lin_to_db(main_lobe_gain(pair.xi_r, k.z)),
        loss_db=path_loss_db(k, pair.kind, pair.distance),
        noise_dbm=noise_power_dbm(k),
        interference_mw=_interference_mw(pair, active, k),
    )


def link_rate_bps(bandwidth_hz: float, sinr_db_value: float) -> float:
    """Shannon rate ``B log2(1 + SINR)``; ``-inf`` dB gives zero."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    if sinr_db_value == -math.inf:
        return 0.0
    return bandwidth_hz * math.log2(1.0 + db_to_lin(sinr_db_value))
