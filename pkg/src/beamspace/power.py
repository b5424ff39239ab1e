"""Multi-beam power allocation over a set of trained beam pairs.

In the pencil-beam regime (side lobes neglected) each pair ``i`` reduces to
a single number, its SNR per mW of transmit power::

    a_i = (2 pi / xi_t_min) (2 pi / xi_r_min) / (L(R_i) P_N)

so the SNR at power ``p`` is ``a_i * p``. Three allocators work on that
reduction:

* ``ppa_allocate`` fills the strongest pairs at the per-beam cap and gives
  the leftover budget to the next pair if it still clears the threshold.
* ``apa_allocate`` splits the total budget evenly and drops the weakest pair
  until every remaining pair clears the threshold.
* ``oracle_allocate`` exhaustively searches subsets and a power grid. It is
  the reference the two closed forms are checked against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .channel import (
    BeamPair,
    RadioConstants,
    db_to_lin,
    dbm_to_mw,
    lin_to_db,
    main_lobe_gain,
    noise_power_dbm,
    path_loss_db,
    pencil_gain,
)

__all__ = [
    "Policy",
    "PowerBudget",
    "BeamwidthBounds",
    "Allocation",
    "LinkOptimum",
    "PolicyComparison",
    "pencil_snr_per_mw",
    "power_ratio_bounds",
    "prop1_link_optimum",
    "ppa_allocate",
    "apa_allocate",
    "oracle_allocate",
    "oracle_grid",
    "grid_slack_bps",
    "compare_policies",
    "allocation_violations",
    "ORACLE_MAX_PAIRS",
]

ORACLE_MAX_PAIRS = 6
_REL_TOL = 1e-9


class Policy(str, Enum):
    PPA = "PPA"
    APA = "APA"
    ORACLE = "ORACLE"


@dataclass(frozen=True)
class PowerBudget:
    p_max_dbm: float = 3.0
    P_max_dbm: float = 9.0
    n_max: int = 10
    eta_db: float = 0.0

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {self.n_max}")
        if self.p_max_mw > self.P_max_mw * (1 + _REL_TOL):
            raise ValueError("per-beam cap p_max exceeds the total cap P_max")

    @property
    def p_max_mw(self) -> float:
        return dbm_to_mw(self.p_max_dbm)

    @property
    def P_max_mw(self) -> float:
        return dbm_to_mw(self.P_max_dbm)

    @property
    def eta_lin(self) -> float:
        return db_to_lin(self.eta_db)

    def with_eta(self, eta_db: float) -> "PowerBudget":
        return PowerBudget(self.p_max_dbm, self.P_max_dbm, self.n_max, eta_db)


@dataclass(frozen=True)
class BeamwidthBounds:
    xi_t_min: float = math.radians(10.0)
    xi_t_max: float = 2 * math.pi
    xi_r_min: float = math.radians(15.0)
    xi_r_max: float = 2 * math.pi

    def __post_init__(self):
        for lo, hi, side in ((self.xi_t_min, self.xi_t_max, "t"),
                             (self.xi_r_min, self.xi_r_max, "r")):
            if not 0.0 < lo <= hi <= 2 * math.pi + 1e-12:
                raise ValueError(f"xi_{side} bounds must satisfy 0 < min <= max <= 2 pi")

    @classmethod
    def from_degrees(cls, xi_t_min: float, xi_r_min: float,
                     xi_t_max: float = 360.0, xi_r_max: float = 360.0) -> "BeamwidthBounds":
        return cls(math.radians(xi_t_min), math.radians(xi_t_max),
                   math.radians(xi_r_min), math.radians(xi_r_max))


@dataclass(frozen=True)
class Allocation:
    """Outcome of one allocation policy.

    ``chosen`` is ordered by decreasing pencil-beam quality (lower id first on
    ties); ``pt_mw`` and ``snr_db`` are aligned with it. An empty ``chosen``
    means no pair could meet the threshold.
    """

    policy: Policy
    chosen: tuple[int, ...] = ()
    pt_mw: tuple[float, ...] = ()
    snr_db: tuple[float, ...] = ()
    rate_bps: float = 0.0
    iterations: int = 0
    note: str = ""

    @property
    def feasible(self) -> bool:
        return bool(self.chosen)

    @property
    def n(self) -> int:
        return len(self.chosen)

    @property
    def total_power_mw(self) -> float:
        return math.fsum(self.pt_mw)

    def same_as(self, other: "Allocation", rel: float = 1e-12) -> bool:
        """Identical chosen sets, per-beam powers and rates."""
        if self.chosen != other.chosen:
            return False
        if any(not math.isclose(a, b, rel_tol=rel) for a, b in zip(self.pt_mw, other.pt_mw)):
            return False
        return math.isclose(self.rate_bps, other.rate_bps, rel_tol=rel)


@dataclass(frozen=True)
class LinkOptimum:
    pt_mw: float
    xi_t: float
    xi_r: float
    snr_db: float
    rate_bps: float


@dataclass(frozen=True)
class PolicyComparison:
    ppa: Allocation
    apa: Allocation
    equal_regime: bool

    @property
    def rate_ppa(self) -> float:
        return self.ppa.rate_bps

    @property
    def rate_apa(self) -> float:
        return self.apa.rate_bps


def pencil_snr_per_mw(pair: BeamPair, bounds: BeamwidthBounds, k: RadioConstants) -> float:
    """Linear SNR per mW with the narrowest allowed beams and no side lobes."""
    gain = pencil_gain(bounds.xi_t_min) * pencil_gain(bounds.xi_r_min)
    loss = db_to_lin(path_loss_db(k, pair.kind, pair.distance))
    return gain / (loss * dbm_to_mw(noise_power_dbm(k)))


def power_ratio_bounds(budget: PowerBudget) -> tuple[int, int, float]:
    """``(floor, ceil, remainder_mw)`` of ``P_max / p_max`` in linear scale.

    A ratio within 1e-12 of an integer counts as that integer, with zero
    remainder, so no link is ever handed a vanishing sliver of power.
    """
    p, P = budget.p_max_mw, budget.P_max_mw
    ratio = P / p
    nearest = round(ratio)
    if math.isclose(ratio, nearest, rel_tol=1e-12):
        return nearest, nearest, 0.0
    fl = math.floor(ratio)
    return fl, fl + 1, P - fl * p


def _ranked(pairs: Sequence[BeamPair], bounds: BeamwidthBounds,
            k: RadioConstants) -> list[tuple[BeamPair, float]]:
    rated = [(p, pencil_snr_per_mw(p, bounds, k)) for p in pairs]
    ids = [p.id for p, _ in rated]
    if len(set(ids)) != len(ids):
        raise ValueError("beam pair ids must be unique")
    rated.sort(key=lambda pa: (-pa[1], pa[0].id))
    return rated


def _rate(bandwidth_hz: float, snrs_lin: Sequence[float]) -> float:
    return math.fsum(bandwidth_hz * math.log2(1.0 + s) for s in snrs_lin)


def _finish(policy: Policy, picked: Sequence[tuple[BeamPair, float]],
            powers: Sequence[float], k: RadioConstants, iterations: int = 0,
            note: str = "") -> Allocation:
    snrs = [a * p for (_, a), p in zip(picked, powers)]
    return Allocation(
        policy=policy,
        chosen=tuple(pair.id for pair, _ in picked),
        pt_mw=tuple(powers),
        snr_db=tuple(lin_to_db(s) for s in snrs),
        rate_bps=_rate(k.bandwidth_hz, snrs),
        iterations=iterations,
        note=note,
    )


def prop1_link_optimum(pair: BeamPair, budget: PowerBudget, bounds: BeamwidthBounds,
                       k: RadioConstants) -> LinkOptimum:
    """Best single-link operating point with pencil beams.

    Full per-beam power and the narrowest beams on both ends; interference is
    absent so nothing else trades off.
    """
    snr = pencil_snr_per_mw(pair, bounds, k) * budget.p_max_mw
    return LinkOptimum(
        pt_mw=budget.p_max_mw,
        xi_t=bounds.xi_t_min,
        xi_r=bounds.xi_r_min,
        snr_db=lin_to_db(snr),
        rate_bps=k.bandwidth_hz * math.log2(1.0 + snr),
    )


def ppa_allocate(pairs: Sequence[BeamPair], budget: PowerBudget, bounds: BeamwidthBounds,
                 k: RadioConstants) -> Allocation:
    """Priority power allocation.

    Pairs that cannot reach the threshold even at full per-beam power are
    discarded first. With ``K = min(#eligible, N_max)`` and
    ``floor/ceil = P_max / p_max``:

    * ``floor >= K``: all ``K`` pairs at ``p_max``;
    * otherwise the ``floor`` best pairs get ``p_max`` and the ``ceil``-th
      best pair joins with the remainder ``P_max - floor * p_max`` if its
      SNR at that power still meets the threshold.
    """
    ranked = _ranked(pairs, bounds, k)
    p, eta = budget.p_max_mw, budget.eta_lin
    eligible = [(pair, a) for pair, a in ranked if a * p >= eta]
    if not eligible:
        return Allocation(Policy.PPA, note="no feasible link")
    n_cap = min(len(eligible), budget.n_max)
    fl, ce, rem = power_ratio_bounds(budget)
    if fl >= n_cap:
        return _finish(Policy.PPA, eligible[:n_cap], [p] * n_cap, k, note="all at p_max")
    if rem > 0.0:
        w_pair, w_gain = eligible[ce - 1]
        if w_gain * rem >= eta:
            return _finish(Policy.PPA, eligible[:ce], [p] * fl + [rem], k,
                           note=f"remainder to pair {w_pair.id}")
    return _finish(Policy.PPA, eligible[:fl], [p] * fl, k, note="floor at p_max")


def apa_allocate(pairs: Sequence[BeamPair], budget: PowerBudget, bounds: BeamwidthBounds,
                 k: RadioConstants) -> Allocation:
    """Average power allocation.

    Start from the ``min(N_pair, N_max)`` best pairs, give each
    ``min(P_max / N, p_max)``, and drop the weakest while any pair misses the
    threshold. ``iterations`` counts the SNR evaluations performed.
    """
    ranked = _ranked(pairs, bounds, k)
    current = ranked[: min(len(ranked), budget.n_max)]
    eta = budget.eta_lin
    iterations = 0
    while current:
        iterations += 1
        pt = min(budget.P_max_mw / len(current), budget.p_max_mw)
        snrs = [a * pt for _, a in current]
        worst = min(range(len(current)), key=lambda i: (snrs[i], -current[i][0].id))
        if snrs[worst] < eta:
            del current[worst]
            continue
        return _finish(Policy.APA, current, [pt] * len(current), k, iterations)
    return Allocation(Policy.APA, iterations=iterations, note="no feasible link")


def oracle_grid(budget: PowerBudget, steps: int = 64) -> np.ndarray:
    """Per-beam power levels searched by the oracle, in mW, ascending.

    Geometric between ``0.01 p_max`` and ``p_max`` (both included exactly),
    plus the priority-allocation remainder so closed-form optima are
    representable.
    """
    p = budget.p_max_mw
    levels = np.geomspace(0.01 * p, p, steps)
    levels[0], levels[-1] = 0.01 * p, p
    _, _, rem = power_ratio_bounds(budget)
    if rem > 0.0:
        levels = np.append(levels, rem)
    return np.unique(levels)


def grid_slack_bps(budget: PowerBudget, k: RadioConstants, n_links: int,
                   steps: int = 64) -> float:
    """Worst-case rate lost by rounding each of ``n_links`` powers down to the grid.

    Consecutive geometric levels differ by a factor ``q``, and
    ``log2(1 + a p / q) >= log2(1 + a p) - log2(q)``.
    """
    q = 100.0 ** (1.0 / (steps - 1))
    return n_links * k.bandwidth_hz * math.log2(q)


def _pareto(power: np.ndarray, rate: np.ndarray, choice: np.ndarray):
    order = np.lexsort((-rate, power))
    power, rate, choice = power[order], rate[order], choice[order]
    best_before = np.maximum.accumulate(np.concatenate(([-np.inf], rate[:-1])))
    keep = rate > best_before
    return power[keep], rate[keep], choice[keep]


def _oracle_pencil(ranked, levels, budget, k):
    bw = k.bandwidth_hz
    cap = budget.P_max_mw * (1.0 + _REL_TOL)
    eta = budget.eta_lin
    options = []
    for _, a in ranked:
        ok = levels[a * levels >= eta]
        options.append((ok, bw * np.log2(1.0 + a * ok)))
    n = len(ranked)
    best = None  # (rate, size, subset, powers)
    for size in range(min(n, budget.n_max), 0, -1):
        for subset in itertools.combinations(range(n), size):
            if any(options[i][0].size == 0 for i in subset):
                continue
            power = np.zeros(1)
            rate = np.zeros(1)
            choice = np.zeros((1, 0), dtype=np.int64)
            for i in subset:
                lv, rv = options[i]
                power = (power[:, None] + lv[None, :]).ravel()
                rate = (rate[:, None] + rv[None, :]).ravel()
                choice = np.concatenate(
                    (np.repeat(choice, lv.size, axis=0),
                     np.tile(np.arange(lv.size), choice.shape[0])[:, None]), axis=1)
                ok = power <= cap
                power, rate, choice = _pareto(power[ok], rate[ok], choice[ok])
                if power.size == 0:
                    break
            if power.size == 0:
                continue
            j = int(np.argmax(rate))
            if best is None or rate[j] > best[0]:
                powers = [float(options[i][0][c]) for i, c in zip(subset, choice[j])]
                best = (float(rate[j]), size, subset, powers)
    return best


def _oracle_sinr(ranked, levels, budget, bounds, k):
    # Full side-lobe SINR couples the beams, so enumerate the power product.
    bw = k.bandwidth_hz
    z = k.z
    gt = main_lobe_gain(bounds.xi_t_min, z)
    gr = main_lobe_gain(bounds.xi_r_min, z)
    pn = dbm_to_mw(noise_power_dbm(k))
    losses = np.array([db_to_lin(path_loss_db(k, p.kind, p.distance)) for p, _ in ranked])
    cap = budget.P_max_mw * (1.0 + _REL_TOL)
    eta = budget.eta_lin
    n = len(ranked)
    best = None
    for size in range(min(n, budget.n_max), 0, -1):
        if levels.size ** size > 5_000_000:
            raise ValueError(
                f"side-lobe oracle limited to 5e6 power combinations; "
                f"{levels.size}^{size} requested"
            )
        for subset in itertools.combinations(range(n), size):
            grid = np.array(list(itertools.product(levels, repeat=size)))
            grid = grid[grid.sum(axis=1) <= cap]
            if grid.size == 0:
                continue
            L = losses[list(subset)]
            total = grid.sum(axis=1, keepdims=True)
            sig = grid * gt * gr / L
            intf = (total - grid) * z * gr / L
            sinr = sig / (pn + intf)
            ok = np.all(sinr >= eta, axis=1)
            if not ok.any():
                continue
            rates = np.where(ok, (bw * np.log2(1.0 + sinr)).sum(axis=1), -np.inf)
            j = int(np.argmax(rates))
            if best is None or rates[j] > best[0]:
                best = (float(rates[j]), size, subset, [float(x) for x in grid[j]], sinr[j])
    return best


def oracle_allocate(pairs: Sequence[BeamPair], budget: PowerBudget, bounds: BeamwidthBounds,
                    k: RadioConstants, grid: int = 64, pencil: bool = True) -> Allocation:
    """Brute-force maximiser of the aggregate rate on a power grid.

    Every subset of at most ``N_max`` pairs is tried, larger subsets first.
    For pencil beams the objective is separable, so each subset is searched
    exactly with a Pareto frontier over (total power, rate); dominated partial
    assignments can never complete to a better feasible one. With
    ``pencil=False`` the side-lobe SINR is used and the power product is
    enumerated outright, which only scales to tiny instances.
    """
    if len(pairs) > ORACLE_MAX_PAIRS:
        raise ValueError(
            f"oracle enumeration is capped at {ORACLE_MAX_PAIRS} pairs, got {len(pairs)}"
        )
    if grid < 64:
        raise ValueError(f"oracle grid needs at least 64 steps per beam, got {grid}")
    ranked = _ranked(pairs, bounds, k)
    if not ranked:
        return Allocation(Policy.ORACLE, note="no feasible link")
    levels = oracle_grid(budget, grid)
    if pencil:
        best = _oracle_pencil(ranked, levels, budget, k)
        if best is None:
            return Allocation(Policy.ORACLE, note="no feasible link")
        _, _, subset, powers = best
        return _finish(Policy.ORACLE, [ranked[i] for i in subset], powers, k)
    best = _oracle_sinr(ranked, levels, budget, bounds, k)
    if best is None:
        return Allocation(Policy.ORACLE, note="no feasible link")
    rate, _, subset, powers, sinr = best
    return Allocation(
        policy=Policy.ORACLE,
        chosen=tuple(ranked[i][0].id for i in subset),
        pt_mw=tuple(powers),
        snr_db=tuple(lin_to_db(float(s)) for s in sinr),
        rate_bps=rate,
        note="side-lobe SINR",
    )


def compare_policies(pairs: Sequence[BeamPair], budget: PowerBudget, bounds: BeamwidthBounds,
                     k: RadioConstants) -> PolicyComparison:
    """Run both allocators and flag the regime in which they must coincide.

    When ``floor(P_max / p_max) >= min(N_pair, N_max)`` every selected pair
    fits at full per-beam power under either policy; a mismatch there is an
    internal error.
    """
    ppa = ppa_allocate(pairs, budget, bounds, k)
    apa = apa_allocate(pairs, budget, bounds, k)
    fl, _, _ = power_ratio_bounds(budget)
    regime = fl >= min(len(pairs), budget.n_max)
    if regime and not ppa.same_as(apa):
        raise RuntimeError(
            f"PPA and APA diverge in the equal-allocation regime: {ppa} vs {apa}"
        )
    return PolicyComparison(ppa, apa, regime)


def allocation_violations(alloc: Allocation, budget: PowerBudget, n_pair: int) -> list[str]:
    """Constraint violations of ``alloc``; empty when feasible."""
    out = []
    tol = 1.0 + _REL_TOL
    if alloc.total_power_mw > budget.P_max_mw * tol:
        out.append(f"total power {alloc.total_power_mw} mW exceeds P_max {budget.P_max_mw} mW")
    for pid, pt in zip(alloc.chosen, alloc.pt_mw):
        if not 0.0 < pt <= budget.p_max_mw * tol:
            out.append(f"pair {pid} power {pt} mW outside (0, p_max]")
    for pid, s in zip(alloc.chosen, alloc.snr_db):
        if s < budget.eta_db - 1e-9:
            out.append(f"pair {pid} SNR {s} dB below threshold {budget.eta_db} dB")
    if alloc.n > min(n_pair, budget.n_max):
        out.append(f"{alloc.n} pairs chosen, limit is {min(n_pair, budget.n_max)}")
    if len(set(alloc.chosen)) != alloc.n:
        out.append("duplicate pair ids")
    return out
