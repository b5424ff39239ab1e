"""Link-state detection and cooperative beam tracking.

Each operating beam pair is carried by a virtual transmitter ``vMTX i`` and
receiver ``vMRX i``. Links send periodic Data frames and are declared
Blocked after ``miss_limit`` consecutive unacknowledged frames (or at once
when immediate detection is on). A Blocked link asks for cooperative
tracking: an Active helper link carries ``TrackingFields`` telling the
receiver which candidate pair to try next, the blocked link switches and
probes the candidate with a QoS Null frame, and an Ack restores it. A
Degraded link asks for a refine exchange instead. At most one link tracks
or refines at a time; Degraded requests outrank Blocked ones.

Everything runs on the simkernel timeline. The MTX-side decision to switch
is a zero-latency internal event because the vMTXs are co-located.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .simkernel import Event, EventQueue, EventTrace, SimTime, rng_stream, run_until

__all__ = [
    "LinkStatus",
    "FrameKind",
    "Thresholds",
    "TrackingFields",
    "Frame",
    "LinkRuntime",
    "BlockageProcess",
    "TrackingConfig",
    "TrackingScenario",
    "TrackingSim",
    "TrackingError",
    "detect_state",
    "arbitrate",
    "run_tracking",
    "random_scenario",
    "max_concurrent_trackers",
    "attempt_orders",
]


class TrackingError(RuntimeError):
    pass


class LinkStatus(str, Enum):
    ACTIVE = "Active"
    DEGRADED = "Degraded"
    BLOCKED = "Blocked"


class FrameKind(str, Enum):
    DATA = "Data"
    ACK = "Ack"
    QOSNULL = "QoSNull"
    REFINE = "Refine"


@dataclass(frozen=True)
class Thresholds:
    degrade_db: float
    blocked_db: float

    def __post_init__(self):
        if not self.degrade_db > self.blocked_db:
            raise ValueError(
                f"degrade threshold {self.degrade_db} must exceed blocked threshold {self.blocked_db}"
            )

    @classmethod
    def from_eta(cls, eta_db: float, margin_db: float = 6.0) -> "Thresholds":
        return cls(eta_db + margin_db, eta_db)


def detect_state(sinr_db: float, thresholds: Thresholds, blocked: bool = False) -> LinkStatus:
    """Receiver-side classification of one link.

    An active blockage interval wins over whatever SINR was computed.
    """
    if blocked or sinr_db < thresholds.blocked_db:
        return LinkStatus.BLOCKED
    if sinr_db < thresholds.degrade_db:
        return LinkStatus.DEGRADED
    return LinkStatus.ACTIVE


@dataclass(frozen=True)
class TrackingFields:
    blocked_order: int = 1
    candidate_order: int = 0

    def __post_init__(self):
        if self.blocked_order < 1 or self.candidate_order < 0:
            raise ValueError(f"invalid tracking fields {self}")

    def render(self) -> str:
        return f"BBPO={self.blocked_order},CBPO={self.candidate_order}"


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    sender: str
    seq: int
    pair: int
    tracking: TrackingFields | None = None

    def __post_init__(self):
        if self.kind is FrameKind.QOSNULL and self.tracking is not None:
            raise ValueError("QoS Null frames carry no payload")


@dataclass
class LinkRuntime:
    index: int
    pair: int
    initial_pair: int
    status: LinkStatus = LinkStatus.ACTIVE
    role: str = "operating"
    candidate_index: int = 0
    probe_period: SimTime = 10_000
    seq: int = 0
    misses: int = 0
    mode: str = "data"  # data | idle | tracking | probing
    token: int = 0
    fields: TrackingFields | None = None
    fields_tag: tuple[int, int, int] | None = None

    @property
    def tx(self) -> str:
        return f"vMTX{self.index}"

    @property
    def rx(self) -> str:
        return f"vMRX{self.index}"

    def set_mode(self, mode: str) -> None:
        self.mode = mode
        self.token += 1


def _status_rank(s: LinkStatus) -> int:
    return 0 if s is LinkStatus.DEGRADED else 1


def arbitrate(pending: Iterable[LinkRuntime]) -> LinkRuntime | None:
    """Pick the one request to serve: Degraded before Blocked, then lower pair id."""
    eligible = [l for l in pending if l.status is not LinkStatus.ACTIVE]
    if not eligible:
        return None
    return min(eligible, key=lambda l: (_status_rank(l.status), l.pair, l.index))


Interval = tuple[SimTime, SimTime]


def _check_intervals(ivs: Sequence[Interval], pair: int) -> tuple[Interval, ...]:
    ivs = tuple(sorted((int(s), int(e)) for s, e in ivs))
    for s, e in ivs:
        if not 0 <= s < e:
            raise ValueError(f"bad blockage interval ({s}, {e}) on pair {pair}")
    for (s0, e0), (s1, _) in zip(ivs, ivs[1:]):
        if s1 < e0:
            raise ValueError(f"overlapping blockage intervals on pair {pair}")
    return ivs


@dataclass(frozen=True)
class BlockageProcess:
    """Generator of blockage intervals per beam pair.

    ``mode`` is ``"bernoulli"`` (each epoch blocked with probability ``p``),
    ``"scripted"`` (fixed ``intervals``) or ``"onoff"`` (alternating
    exponential clear/blocked holds). With ``independent=False`` every pair
    shares the same draws.
    """

    mode: str = "scripted"
    p: float = 0.0
    epoch_us: SimTime = 5_000
    mean_clear_us: float = 50_000.0
    mean_blocked_us: float = 10_000.0
    independent: bool = True
    intervals: Mapping[int, Sequence[Interval]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("bernoulli", "scripted", "onoff"):
            raise ValueError(f"unknown blockage mode {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"blockage probability must lie in [0, 1], got {self.p}")
        if self.epoch_us <= 0 or self.mean_clear_us <= 0 or self.mean_blocked_us <= 0:
            raise ValueError("hold times must be positive")
        for pair, ivs in self.intervals.items():
            _check_intervals(ivs, pair)

    def realize(self, pairs: Sequence[int], horizon: SimTime,
                rng: np.random.Generator | None = None) -> dict[int, tuple[Interval, ...]]:
        if self.mode == "scripted":
            return {p: _check_intervals(self.intervals.get(p, ()), p) for p in pairs}
        if rng is None:
            raise ValueError("random blockage needs a generator")
        shared = None if self.independent else self._draw(horizon, rng)
        return {p: shared if shared is not None else self._draw(horizon, rng) for p in pairs}

    def _draw(self, horizon: SimTime, rng: np.random.Generator) -> tuple[Interval, ...]:
        out: list[Interval] = []
        if self.mode == "bernoulli":
            n = max(1, math.ceil(horizon / self.epoch_us))
            hits = rng.random(n) < self.p
            for k, hit in enumerate(hits):
                if not hit:
                    continue
                s, e = k * self.epoch_us, (k + 1) * self.epoch_us
                if out and out[-1][1] == s:
                    out[-1] = (out[-1][0], e)
                else:
                    out.append((s, e))
            return tuple(out)
        t, blocked = 0, False
        while t < horizon:
            hold = rng.exponential(self.mean_blocked_us if blocked else self.mean_clear_us)
            nxt = t + max(1, int(round(hold)))
            if blocked:
                out.append((t, nxt))
            t, blocked = nxt, not blocked
        return tuple(out)


@dataclass(frozen=True)
class TrackingConfig:
    """Protocol timers in microseconds and detection thresholds."""

    data_period: SimTime = 500
    ack_delay: SimTime = 10
    ack_timeout: SimTime = 1_000
    probe_period: SimTime = 10_000
    switch_window: SimTime = 2_000
    refine_delay: SimTime = 50
    miss_limit: int = 3
    eta_db: float = 10.0
    degrade_margin_db: float = 6.0
    immediate_detection: bool = False
    start_stagger: SimTime = 100

    def __post_init__(self):
        for name in ("data_period", "ack_delay", "ack_timeout", "probe_period",
                     "switch_window", "refine_delay"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ack_delay >= self.ack_timeout:
            raise ValueError("ack_delay must be shorter than ack_timeout")
        if self.miss_limit < 1:
            raise ValueError("miss_limit must be at least 1")
        if self.start_stagger < 0:
            raise ValueError("start_stagger must be non-negative")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds.from_eta(self.eta_db, self.degrade_margin_db)


@dataclass(frozen=True)
class TrackingScenario:
    """Pairs with their aligned SNR, the initial operating pair of each link,
    blockage intervals per pair and scripted misalignments ``(at, pair, drop_db)``.
    """

    pair_snr_db: Mapping[int, float]
    operating: tuple[int, ...]
    blockage: Mapping[int, Sequence[Interval]] = field(default_factory=dict)
    degradations: tuple[tuple[SimTime, int, float], ...] = ()
    config: TrackingConfig = TrackingConfig()
    horizon: SimTime = 50_000

    def __post_init__(self):
        if not self.operating:
            raise ValueError("need at least one operating link")
        if len(set(self.operating)) != len(self.operating):
            raise ValueError("operating pairs must be distinct")
        for p in self.operating:
            if p not in self.pair_snr_db:
                raise ValueError(f"operating pair {p} has no SNR")
        for p, ivs in self.blockage.items():
            if p not in self.pair_snr_db:
                raise ValueError(f"blockage given for unknown pair {p}")
            _check_intervals(ivs, p)
        for at, p, drop in self.degradations:
            if p not in self.pair_snr_db or at < 0 or drop < 0:
                raise ValueError(f"bad degradation {(at, p, drop)}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def n_cpair(self) -> int:
        return len(self.pair_snr_db) - len(self.operating)


@dataclass
class _Procedure:
    id: int
    kind: str  # track | refine
    link: int
    helper: int | None = None
    candidates: tuple[int, ...] = ()
    m: int = 0
    attempt: int = 0
    phase: str = "start"  # start | signal | switched | refine


class TrackingSim:
    """One run of the tracking protocol over a scripted or drawn scenario."""

    def __init__(self, scenario: TrackingScenario):
        self.sc = scenario
        self.cfg = scenario.config
        self.th = self.cfg.thresholds
        self.blockage = {p: _check_intervals(scenario.blockage.get(p, ()), p)
                         for p in scenario.pair_snr_db}
        self.misalign = {p: 0.0 for p in scenario.pair_snr_db}
        self.links = {
            i + 1: LinkRuntime(i + 1, p, p, probe_period=self.cfg.probe_period)
            for i, p in enumerate(scenario.operating)
        }
        self.pending: set[int] = set()
        self.proc: _Procedure | None = None
        self._proc_ids = 0
        self.queue = EventQueue(0)

    # -- channel view -------------------------------------------------
    def blocked(self, pair: int, t: SimTime) -> bool:
        return any(s <= t < e for s, e in self.blockage[pair])

    def sinr(self, pair: int, t: SimTime) -> float:
        if self.blocked(pair, t):
            return -math.inf
        return self.sc.pair_snr_db[pair] - self.misalign[pair]

    def usable(self, pair: int, t: SimTime) -> bool:
        return self.sinr(pair, t) >= self.th.blocked_db

    # -- event helpers --------------------------------------------------
    def _link_ev(self, at, kind, link: LinkRuntime, details="", actor=None, **extra) -> Event:
        payload = {"link": link.index, "token": link.token, **extra}
        return Event(int(at), kind, actor or link.tx, details, payload)

    def _proc_ev(self, at, kind, actor, details="", **extra) -> Event:
        p = self.proc
        payload = {"proc": p.id, "attempt": p.attempt, **extra}
        return Event(int(at), kind, actor, details, payload)

    def _live(self, ev: Event) -> bool:
        pl = ev.payload
        if not isinstance(pl, dict):
            return True
        if "proc" in pl:
            if self.proc is None or self.proc.id != pl["proc"] or self.proc.attempt != pl["attempt"]:
                return False
        if "link" in pl:
            if self.links[pl["link"]].token != pl["token"]:
                return False
        return True

    # -- status and arbitration ---------------------------------------------
    def _set_status(self, link: LinkRuntime, new: LinkStatus, now: SimTime, out: list) -> None:
        old = link.status
        if new is old:
            return
        link.status = new
        out.append(Event(now, "STATUS", link.tx, f"{old.value}->{new.value} pair={link.pair}"))
        proc = self.proc
        if new is LinkStatus.DEGRADED:
            self.pending.add(link.index)
        elif new is LinkStatus.BLOCKED:
            link.set_mode("idle")
            link.misses = 0
            link.fields, link.fields_tag = None, None
            if proc is not None and proc.kind == "refine" and proc.link == link.index:
                self._escalate(now, out)
                return
            self.pending.add(link.index)
        else:
            self.pending.discard(link.index)
        if proc is not None and proc.helper == link.index and new is not LinkStatus.ACTIVE:
            self._abort(now, "helper", out)
            return
        self._arbitrate(now, out)

    def _arbitrate(self, now: SimTime, out: list) -> None:
        if self.proc is not None:
            return
        for i in list(self.pending):
            if self.links[i].status is LinkStatus.ACTIVE:
                self.pending.discard(i)
        winner = arbitrate(self.links[i] for i in self.pending)
        if winner is None:
            return
        self.pending.discard(winner.index)
        self._proc_ids += 1
        kind = "refine" if winner.status is LinkStatus.DEGRADED else "track"
        self.proc = _Procedure(self._proc_ids, kind, winner.index)
        out.append(self._proc_ev(now, "GRANT", "MTX", f"link={winner.index} proc={kind}"))

    def _release(self, now: SimTime, out: list) -> None:
        p = self.proc
        self.proc = None
        out.append(Event(now, "RELEASE", "MTX", f"link={p.link} proc={p.kind}"))
        self._arbitrate(now, out)

    def _bump(self) -> None:
        self.proc.attempt += 1

    # -- tracking procedure --------------------------------------------------
    def _pick_helper(self, exclude: int, now: SimTime) -> LinkRuntime | None:
        ok = [l for l in self.links.values()
              if l.index != exclude and l.status is LinkStatus.ACTIVE and l.mode == "data"]
        if not ok:
            return None
        return max(ok, key=lambda l: (self.sc.pair_snr_db[l.pair] - self.misalign[l.pair], -l.pair))

    def _candidates(self, link: LinkRuntime) -> tuple[int, ...]:
        taken = {l.pair for l in self.links.values() if l.index != link.index}
        taken.add(link.initial_pair)
        free = [p for p in self.sc.pair_snr_db if p not in taken]
        return tuple(sorted(free, key=lambda p: (-self.sc.pair_snr_db[p], p)))

    def _start_track(self, now: SimTime, out: list) -> None:
        p = self.proc
        link = self.links[p.link]
        link.set_mode("tracking")
        p.kind = "track"
        p.candidates = self._candidates(link)
        helper = self._pick_helper(link.index, now) if p.candidates else None
        if helper is None:
            out.append(Event(now, "TRACK_START", "MTX",
                             f"link={link.index} ncpair={len(p.candidates)} helper=none"))
            self._enter_probing(link, now, out)
            self._release(now, out)
            return
        p.helper = helper.index
        out.append(Event(now, "TRACK_START", "MTX",
                         f"link={link.index} ncpair={len(p.candidates)} helper={helper.index}"))
        self._attempt(1, now, out)

    def _attempt(self, m: int, now: SimTime, out: list) -> None:
        p = self.proc
        self._bump()
        p.m, p.phase = m, "signal"
        link, helper = self.links[p.link], self.links[p.helper]
        link.candidate_index = m
        target = p.candidates[m - 1] if m else link.initial_pair
        helper.fields = TrackingFields(1, m)
        helper.fields_tag = (p.id, p.attempt, m)
        out.append(self._proc_ev(now, "ATTEMPT", "MTX", f"link={link.index} m={m} pair={target}"))
        out.append(self._proc_ev(now + self.cfg.switch_window, "WINDOW_EXPIRE", "MTX",
                                 f"link={link.index} m={m}"))

    def _enter_probing(self, link: LinkRuntime, now: SimTime, out: list) -> None:
        link.pair = link.initial_pair
        link.candidate_index = 0
        link.set_mode("probing")
        out.append(Event(now, "PROBE_MODE", link.tx,
                         f"pair={link.pair} period={link.probe_period}"))
        out.append(self._link_ev(now, "SEND_QOSNULL", link, purpose="probe"))

    def _abort(self, now: SimTime, reason: str, out: list) -> None:
        p = self.proc
        link = self.links[p.link]
        if p.helper is not None:
            h = self.links[p.helper]
            h.fields, h.fields_tag = None, None
        link.pair = link.initial_pair
        link.candidate_index = 0
        link.set_mode("idle")
        out.append(Event(now, "ABORT", "MTX", f"link={link.index} reason={reason}"))
        if link.status is not LinkStatus.ACTIVE:
            self.pending.add(link.index)
        self._release(now, out)

    def _escalate(self, now: SimTime, out: list) -> None:
        p = self.proc
        self._bump()
        out.append(Event(now, "ESCALATE", "MTX", f"link={p.link}"))
        self._start_track(now, out)

    # -- handlers -------------------------------------------------------------
    def on_data(self, _, ev):
        out: list = []
        link = self.links[ev.payload["link"]]
        link.seq += 1
        fields = link.fields if link.status is LinkStatus.ACTIVE else None
        tag = link.fields_tag if fields is not None else None
        detail = f"seq={link.seq} pair={link.pair}" + (f" {fields.render()}" if fields else "")
        out.append(Event(ev.at, "DATA", link.tx, detail))
        out.append(self._link_ev(ev.at + self.cfg.data_period, "SEND_DATA", link))
        if self.usable(link.pair, ev.at):
            out.append(self._link_ev(ev.at + self.cfg.ack_delay, "ACK", link, f"seq={link.seq}",
                                     actor=link.rx, frame="DATA", seq=link.seq, pair=link.pair,
                                     sent=ev.at, tag=tag))
            self._set_status(link, detect_state(self.sinr(link.pair, ev.at), self.th), ev.at, out)
        else:
            out.append(self._link_ev(ev.at + self.cfg.ack_timeout, "TIMEOUT", link,
                                     f"frame=Data seq={link.seq}", frame="DATA", seq=link.seq))
        return _, out

    def on_qosnull(self, _, ev):
        out: list = []
        link = self.links[ev.payload["link"]]
        link.seq += 1
        purpose = ev.payload["purpose"]
        extra = {k: ev.payload[k] for k in ("proc", "attempt") if k in ev.payload}
        out.append(Event(ev.at, "QOSNULL", link.tx, f"seq={link.seq} pair={link.pair}"))
        if self.usable(link.pair, ev.at):
            out.append(self._link_ev(ev.at + self.cfg.ack_delay, "ACK", link, f"seq={link.seq}",
                                     actor=link.rx, frame="QOSNULL", seq=link.seq, pair=link.pair,
                                     sent=ev.at, purpose=purpose, **extra))
        else:
            out.append(self._link_ev(ev.at + self.cfg.ack_timeout, "TIMEOUT", link,
                                     f"frame=QoSNull seq={link.seq}", frame="QOSNULL",
                                     seq=link.seq, sent=ev.at, purpose=purpose, **extra))
        return _, out

    def on_ack(self, _, ev):
        out: list = []
        pl = ev.payload
        link = self.links[pl["link"]]
        if not self.usable(pl["pair"], ev.at):
            # the receiver sent it but it never arrived
            lost = {k: v for k, v in pl.items() if k not in ("link", "token")}
            frame = "Data" if pl["frame"] == "DATA" else "QoSNull"
            out.append(self._link_ev(pl["sent"] + self.cfg.ack_timeout, "TIMEOUT", link,
                                     f"frame={frame} seq={pl['seq']}", **lost))
            return _, out
        if pl["frame"] == "DATA":
            link.misses = 0
            p = self.proc
            tag = pl.get("tag")
            if tag is not None and p is not None and tag == (p.id, p.attempt, p.m) and p.phase == "signal":
                link.fields, link.fields_tag = None, None
                blocked = self.links[p.link]
                if p.m > 0:
                    p.phase = "switched"
                    out.append(self._proc_ev(ev.at, "SWITCH", blocked.tx,
                                             f"m={p.m} pair={p.candidates[p.m - 1]}"))
                else:
                    out.append(self._proc_ev(ev.at, "REVERT", blocked.tx,
                                             f"m=0 pair={blocked.initial_pair}"))
        else:
            out.append(self._link_ev(ev.at, "RESTORED", link, f"pair={link.pair}",
                                     purpose=pl["purpose"]))
        return _, out

    def on_timeout(self, _, ev):
        out: list = []
        pl = ev.payload
        link = self.links[pl["link"]]
        if pl["frame"] == "DATA":
            link.misses += 1
            if link.misses >= self.cfg.miss_limit:
                self._set_status(link, LinkStatus.BLOCKED, ev.at, out)
        elif pl["purpose"] == "probe":
            nxt = max(pl["sent"] + link.probe_period, ev.at)
            out.append(self._link_ev(nxt, "SEND_QOSNULL", link, purpose="probe"))
        else:
            p = self.proc
            if p.m < len(p.candidates):
                self._attempt(p.m + 1, ev.at, out)
            else:
                self._attempt(0, ev.at, out)
        return _, out

    def on_switch(self, _, ev):
        out: list = []
        p = self.proc
        link = self.links[p.link]
        link.pair = p.candidates[p.m - 1]
        out.append(self._link_ev(ev.at, "SEND_QOSNULL", link, purpose="attempt",
                                 proc=p.id, attempt=p.attempt))
        return _, out

    def on_revert(self, _, ev):
        out: list = []
        link = self.links[self.proc.link]
        self._enter_probing(link, ev.at, out)
        self._release(ev.at, out)
        return _, out

    def on_restored(self, _, ev):
        out: list = []
        link = self.links[ev.payload["link"]]
        link.initial_pair = link.pair
        link.candidate_index = 0
        link.misses = 0
        link.set_mode("data")
        # release first: the status update may immediately queue a new request
        if self.proc is not None and self.proc.link == link.index:
            self._release(ev.at, out)
        self._set_status(link, detect_state(self.sinr(link.pair, ev.at), self.th), ev.at, out)
        out.append(self._link_ev(ev.at, "SEND_DATA", link))
        return _, out

    def on_window(self, _, ev):
        out: list = []
        p = self.proc
        if p.phase == "signal":
            self._abort(ev.at, "window", out)
        return _, out

    def on_grant(self, _, ev):
        out: list = []
        p = self.proc
        link = self.links[p.link]
        if p.kind == "refine":
            self._bump()
            p.phase = "refine"
            out.append(self._proc_ev(ev.at, "REFINE_REQ", link.tx, f"pair={link.pair}"))
        else:
            self._start_track(ev.at, out)
        return _, out

    def on_refine_req(self, _, ev):
        out: list = []
        link = self.links[self.proc.link]
        if self.usable(link.pair, ev.at):
            out.append(self._proc_ev(ev.at + self.cfg.refine_delay, "REFINE_RSP", link.rx,
                                     f"pair={link.pair}", sent=ev.at))
        else:
            out.append(self._proc_ev(ev.at + self.cfg.ack_timeout, "REFINE_TIMEOUT", link.tx,
                                     f"pair={link.pair}"))
        return _, out

    def on_refine_rsp(self, _, ev):
        out: list = []
        link = self.links[self.proc.link]
        if not self.usable(link.pair, ev.at):
            out.append(self._proc_ev(ev.payload["sent"] + self.cfg.ack_timeout, "REFINE_TIMEOUT",
                                     link.tx, f"pair={link.pair}"))
            return _, out
        self.misalign[link.pair] = 0.0
        self._bump()
        new = detect_state(self.sinr(link.pair, ev.at), self.th)
        link.status = new
        out.append(Event(ev.at, "REFINED", link.tx, f"pair={link.pair} status={new.value}"))
        self.pending.discard(link.index)
        self._release(ev.at, out)
        return _, out

    def on_refine_timeout(self, _, ev):
        out: list = []
        link = self.links[self.proc.link]
        link.status = LinkStatus.BLOCKED
        link.set_mode("idle")
        out.append(Event(ev.at, "STATUS", link.tx, f"Degraded->Blocked pair={link.pair}"))
        self._escalate(ev.at, out)
        return _, out

    def on_block(self, _, ev):
        out: list = []
        pair = ev.payload["pair"]
        if self.cfg.immediate_detection:
            for link in self.links.values():
                if link.pair == pair and link.mode == "data" and link.status is not LinkStatus.BLOCKED:
                    self._set_status(link, LinkStatus.BLOCKED, ev.at, out)
        return _, out

    def on_degrade(self, _, ev):
        self.misalign[ev.payload["pair"]] += ev.payload["drop"]
        return _, ()

    # -- driver -----------------------------------------------------------------
    def run(self) -> EventTrace:
        q = self.queue
        cfg = self.cfg
        for link in self.links.values():
            q.schedule(self._link_ev((link.index - 1) * cfg.start_stagger, "SEND_DATA", link))
        for pair, ivs in self.blockage.items():
            for s, e in ivs:
                q.schedule(Event(s, "BLOCK_ON", "env", f"pair={pair}", {"pair": pair}))
                q.schedule(Event(e, "BLOCK_OFF", "env", f"pair={pair}", {"pair": pair}))
        for at, pair, drop in sorted(self.sc.degradations):
            q.schedule(Event(int(at), "DEGRADE", "env", f"pair={pair} drop_db={drop:g}",
                             {"pair": pair, "drop": drop}))
        handlers = {
            "SEND_DATA": self.on_data, "SEND_QOSNULL": self.on_qosnull, "ACK": self.on_ack,
            "TIMEOUT": self.on_timeout, "SWITCH": self.on_switch, "REVERT": self.on_revert,
            "RESTORED": self.on_restored, "WINDOW_EXPIRE": self.on_window, "GRANT": self.on_grant,
            "REFINE_REQ": self.on_refine_req, "REFINE_RSP": self.on_refine_rsp,
            "REFINE_TIMEOUT": self.on_refine_timeout, "BLOCK_ON": self.on_block,
            "DEGRADE": self.on_degrade,
        }
        # SEND_* are scheduling ticks; the frame itself is logged as DATA or
        # QOSNULL once the sender has stamped its sequence number.
        silent = {"SEND_DATA", "SEND_QOSNULL", "WINDOW_EXPIRE"}

        def record(ev: Event) -> bool:
            return ev.kind not in silent and self._live(ev)

        def dispatch(state, ev):
            if not self._live(ev):
                return state, ()
            h = handlers.get(ev.kind)
            return h(state, ev) if h else (state, ())

        trace = run_until(q, dispatch, self.sc.horizon, record=record)
        trace.final_state = self
        return trace


def run_tracking(scenario: TrackingScenario) -> EventTrace:
    return TrackingSim(scenario).run()


def random_scenario(seed: int, run: int, n_links: int = 3, n_pairs: int = 6,
                    blockage: BlockageProcess | None = None, horizon: SimTime = 200_000,
                    degrade_rate_per_s: float = 20.0,
                    config: TrackingConfig = TrackingConfig()) -> TrackingScenario:
    """Randomized scenario used by the safety checks and the CLI."""
    rng = rng_stream(seed, f"tracking/run{run}")
    pairs = list(range(1, n_pairs + 1))
    snr = {p: float(np.round(rng.uniform(config.eta_db + 2.0, config.eta_db + 20.0), 2)) for p in pairs}
    operating = tuple(sorted(pairs, key=lambda p: (-snr[p], p))[:n_links])
    blockage = blockage or BlockageProcess("onoff", mean_clear_us=40_000, mean_blocked_us=15_000)
    ivs = blockage.realize(pairs, horizon, rng)
    n_deg = rng.poisson(degrade_rate_per_s * horizon / 1e6)
    degs = tuple(
        (int(rng.integers(0, horizon)), int(rng.choice(pairs)), float(np.round(rng.uniform(2, 12), 2)))
        for _ in range(n_deg)
    )
    return TrackingScenario(snr, operating, ivs, degs, config, horizon)


def max_concurrent_trackers(trace: EventTrace) -> int:
    """Largest number of simultaneously open GRANT..RELEASE spans in a trace."""
    open_, worst = 0, 0
    for r in trace:
        if r.kind == "GRANT":
            open_ += 1
            worst = max(worst, open_)
        elif r.kind == "RELEASE":
            open_ -= 1
            if open_ < 0:
                raise TrackingError(f"RELEASE without GRANT at t={r.ticks}")
    return worst


def attempt_orders(trace: EventTrace) -> list[list[int]]:
    """Candidate orders tried within each tracking procedure, in trace order."""
    runs: list[list[int]] = []
    cur: list[int] | None = None
    for r in trace:
        if r.kind == "TRACK_START":
            cur = []
            runs.append(cur)
        elif r.kind == "ATTEMPT" and cur is not None:
            m = int(dict(kv.split("=") for kv in r.details.split())["m"])
            cur.append(m)
        elif r.kind in ("RELEASE", "ABORT"):
            cur = None
    return runs
