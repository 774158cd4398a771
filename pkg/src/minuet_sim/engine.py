"""Deterministic discrete-event engine and the EventLog it emits.

The clock is an integer number of microseconds. Pending work lives in one
heap ordered by ``(t, kind rank, key, sequence)`` with ranks tick < timer <
delivery; delivery keys are ``(msg_id, receiver)``. Each tick, in order:

1. close the previous tick's role snapshots;
2. sample every vehicle's position and rebuild connectivity;
3. evaluate detections (onsets announce and arm the monitoring timer);
4. run clustering maintenance, then send due hello beacons;

after which timers and deliveries falling before the next tick are
processed in timestamp order. A single ``random.Random(seed)`` stream is
consumed only by radio broadcasts, in processing order.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, IO, Iterable, Iterator, List, Optional, Sequence

from .clustering import ClusterMsg, make_technique
from .errors import ConfigError, DataError, LogSchemaError, MinuetError
from .minuet import Minuet, Message
from .mobility import Trace, position_at
from .radio import TickState, bs_links, broadcast, neighbors, to_us
from .scenario import Scenario

RANK_TICK, RANK_TIMER, RANK_DELIVERY = 0, 1, 2

_COMMON_RX = ("vehicle", "msg_id", "kind", "event_id", "sender", "t_sent", "td", "hop_count")

# required fields per record type (``type`` and ``t`` are implied)
RECORD_FIELDS: Dict[str, tuple] = {
    "run_start": ("name", "duration", "tick", "seed", "technique", "monitor_rate_hz",
                  "beacon_interval", "events", "base_stations"),
    "run_end": ("vehicles",),
    "packet_generated": ("vehicle", "msg_id", "kind", "subkind", "event_id", "cluster_id", "td"),
    "packet_forwarded": ("vehicle", "msg_id", "kind", "event_id", "sender", "t_sent", "td",
                         "t_gen", "hop_count"),
    "packet_delivered_bs": ("bs_id", "gateway", "msg_id", "event_id", "t_sent", "tr", "td",
                            "t_gen", "hop_count"),
    "packet_discarded": ("reason",) + _COMMON_RX,
    "cluster_created": ("cluster_id", "event_id", "leader"),
    "cluster_destroyed": ("cluster_id", "event_id", "reason"),
    "cluster_merged": ("survivor", "loser", "event_id", "moved"),
    "membership_change": ("vehicle", "cluster_id", "event_id", "change", "reason"),
    "detection_start": ("vehicle", "event_id"),
    "detection_end": ("vehicle", "event_id", "reason"),
    "role_snapshot": ("tick", "vehicle", "event_id", "monitor", "transmitter", "gateway"),
}


class EventLog:
    """Append-only list of records (plain dicts) with non-decreasing ``t``."""

    def __init__(self, records: Optional[Iterable[dict]] = None):
        self._records: List[dict] = []
        for r in records or ():
            self._append(r)

    def _append(self, rec: dict):
        if self._records and rec["t"] < self._records[-1]["t"]:
            raise DataError(f"log time went backwards: {rec['t']} < {self._records[-1]['t']}")
        self._records.append(rec)

    def append(self, type_: str, t: int, **fields) -> dict:
        rec = {"type": type_, "t": t}
        rec.update(fields)
        self._append(rec)
        return rec

    def __iter__(self) -> Iterator[dict]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def of_type(self, *types: str) -> List[dict]:
        return [r for r in self._records if r["type"] in types]

    @property
    def meta(self) -> dict:
        return self._records[0]

    def dumps(self) -> str:
        """Newline-delimited JSON, one record per line, fields in emission order."""
        return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self._records)

    def write(self, fh: IO[str]):
        fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        return cls.read(text.splitlines())

    @classmethod
    def read(cls, lines: Iterable[str]) -> "EventLog":
        """Parse and schema-check NDJSON lines; errors name the 1-based line."""
        log = cls()
        n = 0
        for n, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogSchemaError(f"invalid JSON: {exc.msg}", n) from None
            validate_record(rec, n)
            if not log._records and rec["type"] != "run_start":
                raise LogSchemaError("first record must be run_start", n)
            try:
                log._append(rec)
            except DataError as exc:
                raise LogSchemaError(str(exc), n) from None
        if not log._records:
            raise LogSchemaError("empty log", n or 1)
        if log._records[-1]["type"] != "run_end":
            raise LogSchemaError("truncated log: missing run_end record", n)
        return log


def validate_record(rec, line: Optional[int] = None):
    if not isinstance(rec, dict):
        raise LogSchemaError("record must be an object", line)
    kind = rec.get("type")
    if kind not in RECORD_FIELDS:
        raise LogSchemaError(f"unknown record type {kind!r}", line)
    if not isinstance(rec.get("t"), int) or isinstance(rec.get("t"), bool):
        raise LogSchemaError(f"{kind}: 't' must be an integer (microseconds)", line)
    for f in RECORD_FIELDS[kind]:
        if f not in rec:
            raise LogSchemaError(f"{kind}: missing field '{f}'", line)


@dataclass
class BatchOutcome:
    index: int
    log: Optional[EventLog] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class Simulator:
    """One run of one scenario. Use :func:`run` unless per-tick hooks are needed."""

    def __init__(self, scenario: Scenario, trace: Optional[Trace] = None):
        scenario.validate()
        self.scenario = scenario
        self.trace = trace if trace is not None else scenario.load_trace()
        self.events = {ev.event_id: ev for ev in sorted(scenario.events, key=lambda e: e.event_id)}
        self._event_list = list(self.events.values())
        self._mdt_us = {ev.event_id: to_us(ev.mdt) for ev in self._event_list}
        self.stations = sorted(scenario.base_stations, key=lambda b: b.bs_id)
        self.params = scenario.radio
        self.rng = random.Random(scenario.seed)
        self.log = EventLog()
        self.duration_us = to_us(scenario.duration)
        self.tick_us = to_us(scenario.tick)
        self.beacon_interval_us = to_us(scenario.beacon_interval)
        self.monitor_period_us = max(1, to_us(1.0 / scenario.monitor_rate_hz))
        self.now = 0
        self.tick_state = TickState(0, {}, {}, {}, self.params)
        self._queue: list = []
        self._seq = 0
        self._cluster_seq: Dict[str, int] = {}
        self._ever_present: set = set()
        self._spans = {
            vid: (states[0].t, states[-1].t) for vid, states in self.trace.samples.items()
        }
        self.protocol = Minuet(self)
        self.technique = make_technique(scenario.clustering_technique, self)

    # -- services for protocol and clustering --------------------------------

    def mdt_us(self, event_id: str) -> int:
        return self._mdt_us[event_id]

    def payload_size(self, kind: str) -> int:
        return 1000 if kind == "monitoring" else 100

    def record(self, type_: str, t: int, **fields):
        self.log.append(type_, t, **fields)

    def schedule_timer(self, t: int, key):
        if t < self.duration_us:
            self._push(t, RANK_TIMER, key[:3], ("timer", key))

    def transmit(self, sender: str, msg, include_bs: bool, tr: Optional[int] = None):
        deliveries = broadcast(msg, sender, self.tick_state, self.rng, include_bs=include_bs)
        for d in deliveries:
            if d.t_recv < self.duration_us:
                self._push(d.t_recv, RANK_DELIVERY, (d.msg_id, d.receiver),
                           ("delivery", d, msg, tr))
        return deliveries

    def send_cluster_msg(self, sender: str, kind: str, cluster_id, event_id):
        if sender not in self.tick_state.states:
            return
        node = self.protocol.node(sender)
        msg = ClusterMsg(node.next_msg_id(), kind, sender, cluster_id, event_id, self.now)
        self.record("packet_generated", self.now, vehicle=sender, msg_id=msg.msg_id, kind="cluster",
                    subkind=kind, event_id=event_id, cluster_id=cluster_id, td=None)
        self.transmit(sender, msg, include_bs=False)

    # -- main loop --------------------------------------------------------------

    def _push(self, t: int, rank: int, key, payload):
        self._seq += 1
        heapq.heappush(self._queue, (t, rank, key, self._seq, payload))

    def run(self, on_tick: Optional[Callable[["Simulator"], None]] = None) -> EventLog:
        sc = self.scenario
        self.record(
            "run_start", 0, name=sc.name, duration=self.duration_us, tick=self.tick_us, seed=sc.seed,
            technique=sc.clustering_technique, monitor_rate_hz=sc.monitor_rate_hz,
            beacon_interval=self.beacon_interval_us,
            events=[{"event_id": e.event_id, "x": e.pos[0], "y": e.pos[1],
                     "t_spawn": to_us(e.t_spawn), "lifetime": to_us(e.lifetime),
                     "detection_radius": e.detection_radius, "mdt": to_us(e.mdt)}
                    for e in self._event_list],
            base_stations=[{"bs_id": b.bs_id, "x": b.pos[0], "y": b.pos[1], "range": b.range}
                           for b in self.stations],
        )
        self._push(0, RANK_TICK, (), ("tick", None))
        last_tick = None
        while self._queue:
            t, _, _, _, payload = heapq.heappop(self._queue)
            if t >= self.duration_us:
                break
            self.now = t
            kind = payload[0]
            if kind == "tick":
                if last_tick is not None:
                    self.protocol.flush_roles(last_tick, t)
                self._tick(t)
                last_tick = t
                if on_tick is not None:
                    on_tick(self)
                nxt = t + self.tick_us
                if nxt < self.duration_us:
                    self._push(nxt, RANK_TICK, (), ("tick", None))
            elif kind == "timer":
                self.protocol.on_timer(payload[1], t)
            else:
                self._deliver(*payload[1:])
        end = self.duration_us
        self.now = max(self.now, self.log[-1]["t"])
        if last_tick is not None:
            self.protocol.flush_roles(last_tick, max(self.now, min(last_tick + self.tick_us, end)))
        stamp = max(end, self.log[-1]["t"])
        for vid in sorted(self.protocol.nodes):
            for ev in sorted(self.protocol.nodes[vid].detecting):
                self.record("detection_end", stamp, vehicle=vid, event_id=ev, reason="run_end")
        self.record("run_end", stamp, vehicles=sorted(self._ever_present))
        return self.log

    def _tick(self, t: int):
        ts = t / 1e6
        states = {}
        for vid in sorted(self._spans):
            lo, hi = self._spans[vid]
            if lo <= ts <= hi:
                s = position_at(self.trace, vid, ts)
                if s is None:
                    continue
                if not s.is_finite():
                    raise DataError(f"non-finite position for vehicle {vid} at t={ts:g}s")
                states[vid] = s
        self._ever_present.update(states)
        adjacency = neighbors(states.values(), self.params.range)
        self.tick_state = TickState(t, states, adjacency, bs_links(states, self.stations), self.params)
        self.protocol.on_tick(t, states, self._event_list)
        self.technique.maintain(t)
        self.technique.on_beacon(t)

    def _deliver(self, d, msg, tr_sender):
        t = d.t_recv
        if d.to_bs:
            self.record(
                "packet_delivered_bs", t, bs_id=d.receiver, gateway=d.sender, msg_id=msg.msg_id,
                event_id=msg.event_id, t_sent=d.t_sent, tr=tr_sender, td=msg.td, t_gen=msg.t_gen,
                hop_count=msg.hop_count,
            )
            return
        if isinstance(msg, ClusterMsg):
            if d.receiver in self.tick_state.states:
                self.technique.on_cluster_msg(d.receiver, msg)
            return
        if d.receiver not in self.tick_state.states:
            self.record("packet_discarded", t, reason="receiver_absent", vehicle=d.receiver,
                        msg_id=msg.msg_id, kind=msg.kind, event_id=msg.event_id, sender=d.sender,
                        t_sent=d.t_sent, td=msg.td, hop_count=msg.hop_count)
            return
        self.protocol.on_receive(d.receiver, msg, d, t)


def run(scenario: Scenario, on_tick=None) -> EventLog:
    """Simulate ``scenario`` and return its EventLog."""
    return Simulator(scenario).run(on_tick)


def _run_one(args):
    i, scenario = args
    try:
        return BatchOutcome(i, log=run(scenario))
    except (MinuetError, ValueError) as exc:
        return BatchOutcome(i, error=f"{type(exc).__name__}: {exc}")


def run_batch(scenarios: Sequence[Scenario], parallelism: int = 1) -> List[BatchOutcome]:
    """Run every scenario; failures are reported per scenario, never raised."""
    if not scenarios:
        raise ConfigError("scenarios", "batch needs at least one scenario")
    jobs = list(enumerate(scenarios))
    if parallelism <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(parallelism, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))
