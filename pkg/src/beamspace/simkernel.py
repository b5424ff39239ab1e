"""Deterministic discrete-event kernel.

Virtual time is an integer count of microseconds. Events are ordered by
``(at, seq)`` where ``seq`` is an insertion counter, so simultaneous events
pop in the order they were scheduled. Randomness comes from named streams so
independent consumers (blockage draws, jitter, Monte Carlo trials) never
perturb each other.
"""

from __future__ import annotations

import heapq
import zlib
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "SimTime",
    "US",
    "MS",
    "S",
    "Event",
    "EventQueue",
    "EventTrace",
    "SchedulingError",
    "run_until",
    "rng_stream",
]

SimTime = int

US: SimTime = 1
MS: SimTime = 1_000
S: SimTime = 1_000_000


class SchedulingError(ValueError):
    """An event was scheduled before the current virtual clock."""


@dataclass(frozen=True)
class Event:
    at: SimTime
    kind: str
    actor: str = ""
    details: str = ""
    payload: Any = field(default=None, compare=False)
    seq: int | None = None

    def key(self) -> tuple[int, int]:
        return (self.at, -1 if self.seq is None else self.seq)


class EventQueue:
    """Min-heap of events keyed on ``(at, seq)``.

    ``seq`` is assigned on :meth:`schedule` when the event does not carry one.
    Explicit sequence numbers are accepted but must be unique per run.
    """

    def __init__(self, start: SimTime = 0):
        if start < 0:
            raise SchedulingError(f"negative start time {start}")
        self.now: SimTime = start
        self._heap: list[tuple[int, int, Event]] = []
        self._next_seq = 0
        self._used: set[tuple[int, int]] = set()
        self.scheduled = 0
        self.processed = 0

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def schedule(self, event: Event) -> Event:
        if not isinstance(event.at, (int, np.integer)):
            raise TypeError(f"event time must be integer ticks, got {event.at!r}")
        if event.at < self.now:
            raise SchedulingError(
                f"event {event.kind!r} from {event.actor!r} scheduled at "
                f"t={event.at} but clock is at t={self.now}"
            )
        if event.seq is None:
            event = replace(event, seq=self._next_seq)
        key = (int(event.at), event.seq)
        if key in self._used:
            raise SchedulingError(f"duplicate (at, seq) = {key}")
        self._used.add(key)
        self._next_seq = max(self._next_seq, event.seq) + 1
        heapq.heappush(self._heap, (key[0], key[1], event))
        self.scheduled += 1
        return event

    def post(self, at: SimTime, kind: str, actor: str = "", details: str = "",
             payload: Any = None) -> Event:
        return self.schedule(Event(at, kind, actor, details, payload))

    def peek(self) -> Event | None:
        return self._heap[0][2] if self._heap else None

    def pop(self) -> Event:
        if not self._heap:
            raise IndexError("pop from an empty event queue")
        at, _, event = heapq.heappop(self._heap)
        self.now = at
        self.processed += 1
        return event


@dataclass(frozen=True)
class TraceRecord:
    ticks: SimTime
    actor: str
    kind: str
    details: str

    def line(self) -> str:
        return f"{self.ticks}\t{self.actor}\t{self.kind}\t{self.details}"


class EventTrace:
    """Ordered record of processed events.

    Dump format is one event per line: ``ticks<TAB>actor<TAB>kind<TAB>details``.
    """

    def __init__(self, records: Iterable[TraceRecord] = ()):
        self.records: list[TraceRecord] = list(records)
        self.final_state: Any = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, ticks: SimTime, actor: str, kind: str, details: str = "") -> None:
        if self.records and ticks < self.records[-1].ticks:
            raise SchedulingError(
                f"trace clock went backwards: {ticks} < {self.records[-1].ticks}"
            )
        self.records.append(TraceRecord(int(ticks), actor, kind, details))

    def kinds(self) -> list[str]:
        return [r.kind for r in self.records]

    def filter(self, *kinds: str, actor: str | None = None) -> list[TraceRecord]:
        return [
            r for r in self.records
            if (not kinds or r.kind in kinds) and (actor is None or r.actor == actor)
        ]

    def dumps(self, exclude: Iterable[str] = ()) -> str:
        skip = set(exclude)
        return "".join(r.line() + "\n" for r in self.records if r.kind not in skip)

    def dump(self, path, exclude: Iterable[str] = ()) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps(exclude))

    @classmethod
    def loads(cls, text: str) -> "EventTrace":
        records = []
        for raw in text.splitlines():
            if not raw:
                continue
            ticks, actor, kind, details = raw.split("\t", 3)
            records.append(TraceRecord(int(ticks), actor, kind, details))
        return cls(records)


Handler = Callable[[Any, Event], "tuple[Any, Iterable[Event]]"]


def run_until(queue: EventQueue, handlers: Handler | Mapping[str, Handler],
              t_end: SimTime, state: Any = None,
              record: Callable[[Event], bool] | None = None) -> EventTrace:
    """Process events with ``at <= t_end`` in ``(at, seq)`` order.

    ``handlers`` is either one callable or a mapping from event kind to
    callable; each takes ``(state, event)`` and returns ``(state, new_events)``.
    Events without a matching handler are still recorded. ``record`` filters
    which processed events go into the trace (all by default).

    The final handler state is attached to the returned trace as
    ``final_state``. A handler that schedules into the virtual past raises
    :class:`SchedulingError`.
    """
    trace = EventTrace()
    while queue and queue.peek().at <= t_end:
        event = queue.pop()
        if record is None or record(event):
            trace.append(event.at, event.actor, event.kind, event.details)
        if callable(handlers):
            handler = handlers
        else:
            handler = handlers.get(event.kind)
        if handler is None:
            continue
        state, new_events = handler(state, event)
        for e in new_events or ():
            queue.schedule(e)
    # everything still pending lies beyond t_end
    queue.now = max(queue.now, t_end)
    trace.final_state = state
    return trace


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent, reproducible generator for a ``(seed, label)`` pair.

    The label is folded into the seed sequence through CRC32 so the mapping is
    stable across processes and platforms (unlike :func:`hash`).
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    tag = zlib.crc32(label.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag,))
    return np.random.Generator(np.random.PCG64(ss))
