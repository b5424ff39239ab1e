"""Multi-beam sector sweeps, greedy beam combining and combination selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Hashable, Mapping, Sequence, TypeVar

from .channel import (
    LOS,
    BeamPair,
    PathGeometry,
    RadioConstants,
    db_to_lin,
    dbm_to_mw,
    lin_to_db,
    main_lobe_gain,
    noise_power_dbm,
    path_loss_db,
)

__all__ = [
    "Side",
    "SectorGrid",
    "SweepPlan",
    "Candidate",
    "CandidateSet",
    "Pair",
    "PairSet",
    "Scenario",
    "plan_sweep",
    "run_training",
    "pair_measurements",
    "beam_combining",
    "combining_test_count",
    "select_combination",
    "EnumerationCapError",
    "QUASI_OMNI_GAIN",
]

QUASI_OMNI_GAIN = 1.0
T = TypeVar("T")


class Side(str, Enum):
    MTX = "MTX"
    MRX = "MRX"


class EnumerationCapError(ValueError):
    """Too many pairs for exhaustive combination search."""


@dataclass(frozen=True)
class SectorGrid:
    """``m`` sectors of equal angular ``span`` starting at ``origin`` (radians).

    By default sector 0 is centred on boresight. A boundary angle belongs to
    the lower-indexed sector.
    """

    m: int
    span: float
    side: Side = Side.MTX
    origin: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"need at least one sector, got {self.m}")
        if self.span <= 0:
            raise ValueError(f"sector span must be positive, got {self.span}")
        if self.origin is None:
            object.__setattr__(self, "origin", -self.span / 2.0)

    @classmethod
    def degrees(cls, m: int, span_deg: float, side: Side = Side.MTX,
                origin_deg: float | None = None) -> "SectorGrid":
        origin = None if origin_deg is None else math.radians(origin_deg)
        return cls(m, math.radians(span_deg), side, origin)

    @property
    def coverage(self) -> float:
        return self.m * self.span

    def bounds(self, i: int) -> tuple[float, float]:
        lo = self.origin + i * self.span
        return lo, lo + self.span

    def sector_of(self, angle: float) -> int | None:
        x = angle - self.origin
        if self.coverage >= 2 * math.pi - 1e-12:
            x %= 2 * math.pi
        # absorb rounding so that grid-aligned angles land on exact boundaries
        units = x / self.span
        r = round(units)
        if math.isclose(units, r, abs_tol=1e-9):
            units = float(r)
        if units < 0 or units > self.m:
            return None
        return max(math.ceil(units) - 1, 0)


@dataclass(frozen=True)
class SweepPlan:
    n: int
    rounds: int
    layout: tuple[tuple[int, ...], ...]


def plan_sweep(m: int, n_cap: int) -> SweepPlan:
    """Concurrent sweep of ``m`` sectors with at most ``n_cap`` beams at once.

    Round ``r`` scans ``r, r + rounds, r + 2 rounds, ...`` so beams that fire
    together are spread apart instead of sitting next to each other.
    """
    if m < 1 or n_cap < 1:
        raise ValueError("need m >= 1 and n_cap >= 1")
    n = n_cap if m >= n_cap else m
    rounds = -(-m // n)
    layout = tuple(tuple(range(r, m, rounds)) for r in range(rounds))
    return SweepPlan(n, rounds, layout)


@dataclass(frozen=True)
class Candidate:
    beam_id: int
    sector: int
    snr_db: float


@dataclass(frozen=True)
class CandidateSet:
    entries: tuple[Candidate, ...] = ()
    side: Side = Side.MTX
    rounds: int = 0

    def __post_init__(self):
        ids = [c.beam_id for c in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate beam ids must be unique")
        for a, b in zip(self.entries, self.entries[1:]):
            if (a.snr_db, -a.beam_id) < (b.snr_db, -b.beam_id):
                raise ValueError("candidates must be ordered by decreasing SNR")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(c.beam_id for c in self.entries)

    @classmethod
    def ranked(cls, entries, side: Side = Side.MTX, rounds: int = 0) -> "CandidateSet":
        return cls(tuple(sorted(entries, key=lambda c: (-c.snr_db, c.beam_id))), side, rounds)


@dataclass(frozen=True)
class Pair:
    tx: int
    rx: int
    snr_db: float


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[Pair, ...] = ()
    eta_db: float = -math.inf
    tests: int = 0

    def __post_init__(self):
        tx = [p.tx for p in self.pairs]
        rx = [p.rx for p in self.pairs]
        if len(set(tx)) != len(tx) or len(set(rx)) != len(rx):
            raise ValueError("each tx and rx beam may be paired at most once")
        if any(p.snr_db < self.eta_db for p in self.pairs):
            raise ValueError("every recorded pair must meet the threshold")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


@dataclass(frozen=True)
class Scenario:
    """One MTX-MRX deployment: the LOS path plus first-order reflections.

    ``paths[0]`` is always the LOS path. Beamwidths and the per-beam transmit
    power are those used while training.
    """

    paths: tuple[PathGeometry, ...]
    constants: RadioConstants = field(default_factory=RadioConstants)
    n1: int = 10
    n2: int = 10
    xi_t: float = math.radians(10.0)
    xi_r: float = math.radians(15.0)
    pt_dbm: float = 3.0

    def __post_init__(self):
        if not self.paths or self.paths[0].kind is not LOS:
            raise ValueError("scenario must start with its LOS path")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("beam capabilities must be at least 1")

    @classmethod
    def from_degrees(cls, theta_t_deg: Sequence[float], theta_r_deg: Sequence[float],
                     r_los: float = 4.0, **kw) -> "Scenario":
        if len(theta_t_deg) != len(theta_r_deg):
            raise ValueError("angle lists must have equal length")
        paths = [PathGeometry.los(r_los)]
        paths += [PathGeometry.nlos_deg(t, r, r_los) for t, r in zip(theta_t_deg, theta_r_deg)]
        return cls(tuple(paths), **kw)

    @property
    def n_max(self) -> int:
        return min(self.n1, self.n2)

    def beam_pairs(self) -> list[BeamPair]:
        return [BeamPair(i, g, self.xi_t, self.xi_r) for i, g in enumerate(self.paths)]

    def path_snr_db(self, i: int, gt: float, gr: float) -> float:
        g = self.paths[i]
        k = self.constants
        loss = db_to_lin(path_loss_db(k, g.kind, g.distance))
        s = dbm_to_mw(self.pt_dbm) * gt * gr / loss
        return lin_to_db(s / dbm_to_mw(noise_power_dbm(k)))


def _angle(g: PathGeometry, side: Side) -> float:
    return g.theta_t if side is Side.MTX else g.theta_r


def run_training(scenario: Scenario, side: Side, grid: SectorGrid,
                 eta_db: float = -math.inf) -> CandidateSet:
    """Sweep ``grid`` from ``side`` while the other end stays quasi-omni.

    Beam ``i`` covers sector ``i``. A sector sees a path when the path's
    offset angle falls inside it; with several paths the strongest one is
    reported. Returns sectors meeting ``eta_db``, best first, with the number
    of sweep rounds actually executed.
    """
    side = Side(side)
    k = scenario.constants
    xi = scenario.xi_t if side is Side.MTX else scenario.xi_r
    directional = main_lobe_gain(xi, k.z)
    gt, gr = ((directional, QUASI_OMNI_GAIN) if side is Side.MTX
              else (QUASI_OMNI_GAIN, directional))
    n_cap = scenario.n1 if side is Side.MTX else scenario.n2
    plan = plan_sweep(grid.m, n_cap)

    by_sector: dict[int, list[int]] = {}
    for i, g in enumerate(scenario.paths):
        s = grid.sector_of(_angle(g, side))
        if s is not None:
            by_sector.setdefault(s, []).append(i)

    measured: dict[int, float] = {}
    rounds = 0
    for concurrent in plan.layout:
        rounds += 1
        for sector in concurrent:
            hits = by_sector.get(sector, ())
            measured[sector] = max((scenario.path_snr_db(i, gt, gr) for i in hits),
                                   default=-math.inf)
    entries = [Candidate(s, s, v) for s, v in measured.items() if v >= eta_db]
    return CandidateSet.ranked(entries, side, rounds)


def pair_measurements(scenario: Scenario, tx_grid: SectorGrid,
                      rx_grid: SectorGrid) -> dict[tuple[int, int], float]:
    """Directional-on-both-ends SNR of every (tx sector, rx sector) that shares a path."""
    k = scenario.constants
    gt = main_lobe_gain(scenario.xi_t, k.z)
    gr = main_lobe_gain(scenario.xi_r, k.z)
    table: dict[tuple[int, int], float] = {}
    for i, g in enumerate(scenario.paths):
        st, sr = tx_grid.sector_of(g.theta_t), rx_grid.sector_of(g.theta_r)
        if st is None or sr is None:
            continue
        v = scenario.path_snr_db(i, gt, gr)
        if v > table.get((st, sr), -math.inf):
            table[(st, sr)] = v
    return table


def beam_combining(tx: CandidateSet, rx: CandidateSet, eta_db: float,
                   pair_snr: Mapping[tuple[int, int], float] | Callable[[int, int], float]
                   ) -> PairSet:
    """Greedy pairing of ranked transmit and receive candidates.

    Each transmit beam, best first, is tested against every receive beam not
    yet paired; the best of those is recorded if it meets ``eta_db``. The
    number of pairwise tests executed is kept in ``PairSet.tests``.
    """
    if isinstance(pair_snr, Mapping):
        table = pair_snr
        lookup = lambda i, j: table.get((i, j), -math.inf)  # noqa: E731
    else:
        lookup = pair_snr
    remaining = list(rx.ids)
    recorded: list[Pair] = []
    tests = 0
    for i in tx.ids:
        if not remaining:
            break
        best_j, best = None, -math.inf
        for j in remaining:
            tests += 1
            v = lookup(i, j)
            if best_j is None or v > best or (v == best and j < best_j):
                best_j, best = j, v
        if best >= eta_db:
            remaining.remove(best_j)
            recorded.append(Pair(i, best_j, best))
    return PairSet(tuple(recorded), eta_db, tests)


def combining_test_count(n_tx: int, n_rx: int, all_pass: bool = True) -> int:
    """Pairwise tests run by :func:`beam_combining`.

    With every pairing clearing the threshold the receive pool shrinks by one
    per transmit beam. Otherwise the pool may stay put, and the conventional
    exhaustive count ``n_tx * n_rx`` is the bound.
    """
    if n_tx < 0 or n_rx < 0:
        raise ValueError("candidate counts must be non-negative")
    if not all_pass:
        return n_tx * n_rx
    if n_tx >= n_rx:
        return n_rx * (n_rx + 1) // 2
    return n_tx * n_rx - n_tx * (n_tx - 1) // 2


def select_combination(pairs: Sequence[T], n_max: int,
                       metric: Callable[[tuple[T, ...]], float],
                       key: Callable[[T], Hashable] = lambda p: p.id,
                       cap: int = 15) -> tuple[T, ...]:
    """Best subset of ``pairs`` by ``metric``.

    Tries every subset of size ``min(len(pairs), n_max)`` down to 1. Larger
    subsets win ties; within a size, the lexicographically smallest key
    tuple wins. Input order does not matter.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if len(pairs) > cap:
        raise EnumerationCapError(
            f"{len(pairs)} pairs exceed the enumeration cap of {cap}; "
            f"C(N_pair, k) subsets grow exponentially"
        )
    ordered = tuple(sorted(pairs, key=key))
    best, best_val = None, -math.inf
    for size in range(min(len(ordered), n_max), 0, -1):
        for combo in itertools.combinations(ordered, size):
            v = metric(combo)
            if best is None or v > best_val:
                best, best_val = combo, v
    return best
