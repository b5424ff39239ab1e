"""Transmission synchronization across concurrent beams.

A cycle splits the pending data in proportion to per-link linear SNR, lets
every link drain its share, and starts a waiting timer (Timer2) when the
first link is done. Links still holding data when Timer2 expires overran;
their weight for the next split is cut by twice the leftover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .simkernel import Event, EventQueue, EventTrace, SimTime, run_until

__all__ = [
    "SyncConfig",
    "SplitPlan",
    "RateChange",
    "CycleOutcome",
    "split_stream",
    "run_cycle",
    "rebalance",
    "run_sync",
]


@dataclass(frozen=True)
class SyncConfig:
    """Timer caps in microseconds. ``None`` derives them from the plan.

    ``tau1`` defaults to the slowest link's drain time at cycle start and
    ``tau2`` to ``tau2_fraction * tau1``. ``frame_overhead_us`` is charged
    per ``frame_bytes`` of payload.
    """

    tau1: SimTime | None = None
    tau2: SimTime | None = None
    tau2_fraction: float = 0.1
    frame_bytes: int = 4096
    frame_overhead_us: float = 0.0
    floor_fraction: float = 0.01

    def __post_init__(self):
        for name in ("tau1", "tau2"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.tau2_fraction <= 0:
            raise ValueError("tau2_fraction must be positive")
        if self.frame_bytes < 1 or self.frame_overhead_us < 0:
            raise ValueError("invalid framing parameters")
        if not 0 < self.floor_fraction <= 1:
            raise ValueError("floor_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class SplitPlan:
    total_bytes: int
    shares: tuple[int, ...]
    ratio_basis: tuple[float, ...]

    def __post_init__(self):
        if any(s < 0 for s in self.shares):
            raise ValueError("shares must be non-negative")
        if sum(self.shares) != self.total_bytes:
            raise ValueError("shares must sum to total_bytes")

    @property
    def n(self) -> int:
        return len(self.shares)


@dataclass(frozen=True)
class RateChange:
    at: SimTime
    link: int
    rate_bps: float


@dataclass(frozen=True)
class CycleOutcome:
    start: SimTime
    end: SimTime
    finish: tuple[SimTime | None, ...]
    remainders: tuple[int, ...]
    overrun: bool
    timer2_start: SimTime | None
    tau1: SimTime
    tau2: SimTime
    trace: EventTrace = field(repr=False, compare=False, default_factory=EventTrace)


def _round_free(total: int, weights: dict[int, Fraction],
                ceilings: Sequence[int | None], respect: bool) -> dict[int, int] | None:
    wsum = sum(weights.values())
    if wsum <= 0:
        return None
    quotas = {i: total * w / wsum for i, w in weights.items()}
    shares = {i: math.floor(q) for i, q in quotas.items()}
    left = total - sum(shares.values())
    order = sorted(weights, key=lambda i: (-(quotas[i] - shares[i]), i))
    # left < len(weights) here, so extra passes only run when ceilings block some links
    moved = True
    while left and moved:
        moved = False
        for i in order:
            if left == 0:
                break
            if weights[i] <= 0:
                continue
            if respect and ceilings[i] is not None and shares[i] + 1 > ceilings[i]:
                continue
            shares[i] += 1
            left -= 1
            moved = True
    return shares if left == 0 else None


def _largest_remainder(total: int, weights: Sequence[Fraction],
                       ceilings: Sequence[int | None] | None = None) -> list[int]:
    """Integer shares of ``total`` proportional to ``weights``.

    With ``ceilings``, a link whose quota would exceed its ceiling is pinned
    there and the rest is re-split among the others (water-filling). The
    ceilings are dropped only if no assignment can honour them.
    """
    if sum(weights) <= 0:
        raise ValueError("at least one weight must be positive")
    ceilings = list(ceilings or [None] * len(weights))
    pinned: dict[int, int] = {}
    while True:
        free = {i: w for i, w in enumerate(weights) if i not in pinned}
        rest = total - sum(pinned.values())
        wsum = sum(free.values())
        over = [i for i, w in free.items()
                if wsum > 0 and ceilings[i] is not None and rest * w / wsum >= ceilings[i] + 1]
        if not over:
            break
        for i in over:
            pinned[i] = ceilings[i]
    got = _round_free(rest, free, ceilings, respect=True)
    if got is None:
        got = _round_free(total, dict(enumerate(weights)), ceilings, respect=False)
        pinned = {}
    if got is None:
        raise AssertionError("largest-remainder rounding failed to conserve bytes")
    merged = {**pinned, **got}
    return [merged[i] for i in range(len(weights))]


def split_stream(total_bytes: int, snrs_linear: Sequence[float]) -> SplitPlan:
    """Split ``total_bytes`` in proportion to linear SNRs.

    Rounding is largest-remainder so the shares always sum exactly; each
    share is within one byte of its exact proportional quota.
    """
    if total_bytes < 0:
        raise ValueError("total_bytes must be non-negative")
    if not snrs_linear:
        raise ValueError("need at least one link")
    if any(not s > 0 or math.isinf(s) for s in snrs_linear):
        raise ValueError(f"SNRs must be positive and finite, got {list(snrs_linear)}")
    weights = [Fraction(s) for s in snrs_linear]
    shares = _largest_remainder(total_bytes, weights)
    return SplitPlan(total_bytes, tuple(shares), tuple(float(s) for s in snrs_linear))


def rebalance(prev: SplitPlan, outcome: CycleOutcome, floor_fraction: float = 0.01) -> SplitPlan:
    """Next split after an overrun.

    An overrunning link's weight drops from ``D_i`` to ``D_i - 2 D_i^re``,
    floored at ``floor_fraction * D_i``; the others keep ``D_j``. Overrunning
    links are never rounded back up to their previous share.
    """
    if len(outcome.remainders) != prev.n:
        raise ValueError("outcome and plan disagree on the number of links")
    weights: list[Fraction] = []
    ceilings: list[int | None] = []
    for d, re in zip(prev.shares, outcome.remainders):
        if re > 0:
            w = max(Fraction(d - 2 * re), Fraction(floor_fraction) * d)
            weights.append(w)
            ceilings.append(d - 1 if d > 0 else None)
        else:
            weights.append(Fraction(d))
            ceilings.append(None)
    if sum(weights) <= 0:
        return split_stream(prev.total_bytes, prev.ratio_basis)
    shares = _largest_remainder(prev.total_bytes, weights, ceilings)
    return SplitPlan(prev.total_bytes, tuple(shares), tuple(float(w) for w in weights))


class _Drain:
    """Bytes pushed by one link under a piecewise-constant rate."""

    def __init__(self, share: int, rate_bps: float, efficiency: float, t0: SimTime):
        self.share = share
        self.eff = efficiency
        self.rate = rate_bps
        self.t_mark = t0
        self.sent_mark = 0.0
        self.version = 0
        self.done_at: SimTime | None = 0 if share == 0 else None

    def sent(self, t: SimTime) -> float:
        return min(self.share, self.sent_mark + self.rate * self.eff * (t - self.t_mark) / 8e6)

    def finish_time(self) -> SimTime:
        left = self.share - self.sent_mark
        return self.t_mark + math.ceil(left * 8e6 / (self.rate * self.eff) - 1e-9)

    def set_rate(self, t: SimTime, rate_bps: float) -> None:
        self.sent_mark = self.sent(t)
        self.t_mark = t
        self.rate = rate_bps
        self.version += 1


def _efficiency(rate_bps: float, cfg: SyncConfig) -> float:
    if cfg.frame_overhead_us == 0:
        return 1.0
    airtime = cfg.frame_bytes * 8e6 / rate_bps
    return airtime / (airtime + cfg.frame_overhead_us)


def run_cycle(plan: SplitPlan, link_rates_bps: Sequence[float], config: SyncConfig = SyncConfig(),
              rate_changes: Sequence[RateChange] = (), start: SimTime = 0,
              cycle: int = 0) -> CycleOutcome:
    """Simulate one synchronization cycle on the event kernel.

    Timer1 only bounds planning; Timer2 is the cutoff. The cycle ends when
    every link has drained or Timer2 expires, whichever comes first.
    """
    if len(link_rates_bps) != plan.n:
        raise ValueError("one rate per link required")
    if any(not r > 0 for r in link_rates_bps):
        raise ValueError("link rates must be positive")
    drains = [
        _Drain(s, r, _efficiency(r, config), start) for s, r in zip(plan.shares, link_rates_bps)
    ]
    tau1 = config.tau1
    if tau1 is None:
        tau1 = max(max((d.finish_time() - start for d in drains), default=1), 1)
    tau2 = config.tau2 if config.tau2 is not None else max(1, round(config.tau2_fraction * tau1))

    q = EventQueue(start)
    st = {"timer2": None, "end": None, "remainders": None}

    def live(ev: Event) -> bool:
        if st["end"] is not None:
            return False
        if ev.kind == "LINK_DONE":
            i, ver = ev.payload
            return drains[i].version == ver and drains[i].done_at is None
        return True

    def schedule_done(i: int, t: SimTime) -> Event:
        d = drains[i]
        return Event(max(d.finish_time(), t), "LINK_DONE", f"vMTX{i + 1}",
                     f"bytes={d.share}", (i, d.version))

    def on_start(state, ev):
        out = [schedule_done(i, ev.at) for i, d in enumerate(drains) if d.done_at is None]
        for rc in rate_changes:
            if rc.at >= start:
                out.append(Event(rc.at, "RATE_CHANGE", f"vMTX{rc.link + 1}",
                                 f"rate_bps={rc.rate_bps:g}", rc))
        if all(d.done_at is not None for d in drains):
            out.append(Event(ev.at, "CYCLE_END", "MTX", "reason=all_done"))
        return state, out

    def on_rate(state, ev):
        rc: RateChange = ev.payload
        d = drains[rc.link]
        if d.done_at is not None:
            return state, ()
        d.set_rate(ev.at, rc.rate_bps)
        d.eff = _efficiency(rc.rate_bps, config)
        return state, [schedule_done(rc.link, ev.at)]

    def on_done(state, ev):
        i, _ = ev.payload
        if drains[i].version != ev.payload[1] or drains[i].done_at is not None:
            return state, ()
        drains[i].done_at = ev.at
        out = []
        if st["timer2"] is None:
            st["timer2"] = ev.at
            out.append(Event(ev.at, "TIMER2_START", "MTX", f"tau2={tau2}"))
            out.append(Event(ev.at + tau2, "TIMER2_EXPIRE", "MTX", ""))
        if all(d.done_at is not None for d in drains):
            out.append(Event(ev.at, "CYCLE_END", "MTX", "reason=all_done"))
        return state, out

    def on_expire(state, ev):
        rem = tuple(
            0 if d.done_at is not None else d.share - math.floor(d.sent(ev.at) + 1e-9)
            for d in drains
        )
        st["remainders"] = rem
        detail = " ".join(f"re{i + 1}={r}" for i, r in enumerate(rem))
        return state, [Event(ev.at, "CYCLE_END", "MTX", f"reason=timer2 {detail}")]

    def on_end(state, ev):
        st["end"] = ev.at
        return state, ()

    shares = ",".join(str(s) for s in plan.shares)
    q.post(start, "CYCLE_START", "MTX", f"cycle={cycle} shares={shares} tau1={tau1} tau2={tau2}")
    handlers = {"CYCLE_START": on_start, "RATE_CHANGE": on_rate, "LINK_DONE": on_done,
                "TIMER2_EXPIRE": on_expire, "CYCLE_END": on_end}

    def dispatch(state, ev):
        # once the cycle has ended, leftover events are inert
        if st["end"] is not None:
            return state, ()
        h = handlers.get(ev.kind)
        return h(state, ev) if h else (state, ())

    horizon = start + tau1 * 1000 + tau2 + 1
    for rc in rate_changes:
        horizon = max(horizon, rc.at + 1)
    trace = run_until(q, dispatch, horizon, record=live)
    if st["end"] is None:
        raise RuntimeError("synchronization cycle did not terminate")
    remainders = st["remainders"] or tuple(0 for _ in drains)
    return CycleOutcome(
        start=start,
        end=st["end"],
        finish=tuple(d.done_at for d in drains),
        remainders=remainders,
        overrun=any(r > 0 for r in remainders),
        timer2_start=st["timer2"],
        tau1=tau1,
        tau2=tau2,
        trace=trace,
    )


def run_sync(total_bytes: int, snrs_linear: Sequence[float], link_rates_bps: Sequence[float],
             config: SyncConfig = SyncConfig(), cycles: int = 4,
             rate_changes: Sequence[Sequence[RateChange]] = ()) -> tuple[list[CycleOutcome], list[SplitPlan], EventTrace]:
    """Run consecutive cycles on one timeline, rebalancing after overruns.

    ``rate_changes[c]`` holds the scripted rate changes of cycle ``c`` with
    times relative to that cycle's start; a changed rate persists into later
    cycles. After an overrun the rebalanced ratio is kept for the following
    cycles.
    """
    plan = split_stream(total_bytes, snrs_linear)
    rates = list(link_rates_bps)
    plans, outcomes = [plan], []
    trace = EventTrace()
    t = 0
    for c in range(cycles):
        script = rate_changes[c] if c < len(rate_changes) else ()
        shifted = [RateChange(t + rc.at, rc.link, rc.rate_bps) for rc in script]
        out = run_cycle(plan, rates, config, shifted, start=t, cycle=c)
        outcomes.append(out)
        for rc in sorted(script, key=lambda rc: rc.at):
            rates[rc.link] = rc.rate_bps
        for r in out.trace:
            trace.append(r.ticks, r.actor, r.kind, r.details)
        t = out.end
        if out.overrun:
            plan = rebalance(plan, out, config.floor_fraction)
            basis = ":".join(f"{w:g}" for w in plan.ratio_basis)
            shares = ",".join(str(s) for s in plan.shares)
            trace.append(t, "MTX", "REBALANCE", f"ratio={basis} shares={shares}")
        plans.append(plan)
    return outcomes, plans, trace
