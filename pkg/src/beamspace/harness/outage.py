"""Outage probability: all operating links blocked at once."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..simkernel import rng_stream

_Z95 = 1.959963984540054


def outage_analytic(p_list: Sequence[float]) -> float:
    """Probability that every link is blocked, links independent."""
    if not p_list:
        raise ValueError("need at least one link")
    for p in p_list:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"blockage probability must lie in [0, 1], got {p}")
    return math.prod(p_list)


@dataclass(frozen=True)
class OutageEstimate:
    estimate: float
    half_width: float
    trials: int

    def covers(self, value: float, widths: float = 3.0) -> bool:
        return abs(self.estimate - value) <= widths * self.half_width


def outage_monte_carlo(p: float, n: int, trials: int, seed: int) -> OutageEstimate:
    """Fraction of trials in which ``n`` independent Bernoulli(p) draws all block.

    The half-width is the 95% Agresti-Coull interval half-width. It matches
    the plain normal approximation at moderate counts and stays non-zero when
    no trial, or every trial, is an outage.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    if n < 1:
        raise ValueError("need at least one link")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"blockage probability must lie in [0, 1], got {p}")
    rng = rng_stream(seed, f"outage/p={p!r}/n={n}")
    hits = 0
    chunk = 200_000
    left = trials
    while left:
        m = min(chunk, left)
        draws = rng.random((m, n)) < p
        hits += int(draws.all(axis=1).sum())
        left -= m
    est = hits / trials
    n_t = trials + _Z95**2
    q = (hits + _Z95**2 / 2) / n_t
    hw = _Z95 * math.sqrt(q * (1 - q) / n_t)
    return OutageEstimate(est, hw, trials)
