"""Control management: event detection, AZ-gated dissemination, roles.

Every vehicle runs the same node logic. A detecting vehicle (monitor)
announces the event and generates monitoring packets; every receiver first
applies the announcement-zone test, then rebroadcasts announcements once and
forwards monitoring packets only while it is a cluster member
(transmitter). Any transmission that reaches a base station makes the
sender a gateway for that tick.

All times are integer microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Set, Tuple

from .errors import ClockOrderError
from .model import az_admits
from .radio import to_us

ANNOUNCEMENT = "announcement"
MONITORING = "monitoring"

DISCARD_AZ = "az_expired"
DISCARD_DUPLICATE = "duplicate"
DISCARD_NOT_MEMBER = "not_member"
DISCARD_ABSENT = "receiver_absent"
DISCARD_UNKNOWN_EVENT = "unknown_event"


@dataclass(frozen=True, slots=True)
class Message:
    """Announcement or monitoring packet. Forwards are copies sharing ``msg_id``."""

    msg_id: str
    kind: str
    event_id: str
    td: int
    origin: str
    t_sent: int
    hop_count: int = 0
    t_gen: int = 0
    payload_size: int = 0

    def forwarded(self, t: int) -> "Message":
        return replace(self, t_sent=t, hop_count=self.hop_count + 1)


@dataclass(frozen=True)
class RoleSet:
    monitor: bool = False
    transmitter: bool = False
    gateway: bool = False

    def any(self) -> bool:
        return self.monitor or self.transmitter or self.gateway


@dataclass
class NodeState:
    vehicle_id: str
    seen: Set[str] = field(default_factory=set)
    # freshest detection time learnt per event (own sensing or admitted msg)
    last_td: Dict[str, int] = field(default_factory=dict)
    announced: Dict[str, int] = field(default_factory=dict)
    detecting: Dict[str, int] = field(default_factory=dict)
    first_detection: Dict[str, int] = field(default_factory=dict)
    seq: int = 0

    def next_msg_id(self) -> str:
        self.seq += 1
        return f"{self.vehicle_id}#{self.seq}"


class Minuet:
    """Node logic for all vehicles of one run.

    ``sim`` is the engine; it supplies ``now``, ``events``, ``record``,
    ``transmit``, ``schedule_timer``, ``technique`` and the scenario rates.
    """

    def __init__(self, sim):
        self.sim = sim
        self.nodes: Dict[str, NodeState] = {}
        # (vehicle, event) -> [monitor, transmitter, gateway] for the running tick
        self.tick_roles: Dict[Tuple[str, str], list] = {}

    def node(self, vid: str) -> NodeState:
        n = self.nodes.get(vid)
        if n is None:
            n = self.nodes[vid] = NodeState(vid)
        return n

    # -- queries used by clustering -------------------------------------

    def is_fresh(self, vid: str, event_id: str, now: int) -> bool:
        n = self.nodes.get(vid)
        if n is None or event_id not in n.last_td:
            return False
        return now - n.last_td[event_id] <= self.sim.mdt_us(event_id)

    def in_az(self, vid: str, event_id: str, now: int) -> bool:
        """Detecting, or admitted an announcement and still fresh."""
        n = self.nodes.get(vid)
        if n is None:
            return False
        if event_id in n.detecting:
            return True
        return event_id in n.announced and self.is_fresh(vid, event_id, now)

    def detecting(self, vid: str, event_id: str) -> bool:
        n = self.nodes.get(vid)
        return n is not None and event_id in n.detecting

    def first_detection(self, vid: str, event_id: str) -> Optional[int]:
        n = self.nodes.get(vid)
        return None if n is None else n.first_detection.get(event_id)

    # -- roles ------------------------------------------------------------

    def _role(self, vid: str, event_id: str) -> list:
        key = (vid, event_id)
        r = self.tick_roles.get(key)
        if r is None:
            r = self.tick_roles[key] = [False, False, False]
        return r

    def flush_roles(self, tick_t: int, stamp: int):
        for (vid, ev) in sorted(self.tick_roles):
            mon, tx, gw = self.tick_roles[(vid, ev)]
            if mon or tx or gw:
                self.sim.record(
                    "role_snapshot", stamp, tick=tick_t, vehicle=vid, event_id=ev,
                    monitor=mon, transmitter=tx, gateway=gw,
                )
        self.tick_roles = {}

    # -- detection (runs once per tick) ------------------------------------

    def on_tick(self, t: int, states, events):
        """Evaluate detections for every present vehicle and event."""
        from .model import event_in_range

        for vid in sorted(set(self.nodes) | set(states)):
            s = states.get(vid)
            n = self.node(vid) if s is not None else self.nodes[vid]
            for ev in events:
                was = ev.event_id in n.detecting
                now_in = s is not None and event_in_range(s, ev)
                if now_in:
                    n.last_td[ev.event_id] = t
                    self._role(vid, ev.event_id)[0] = True
                    if not was:
                        self.on_detect(vid, ev, t)
                elif was:
                    if s is None:
                        reason = "absent"
                    elif not ev.active_at(t / 1e6):
                        reason = "expired"
                    else:
                        reason = "out_of_range"
                    self.end_detection(vid, ev.event_id, t, reason)

    def on_detect(self, vid: str, ev, t: int):
        """Detection onset: monitor role, clustering, announcement, monitoring timer."""
        n = self.node(vid)
        n.detecting[ev.event_id] = t
        n.first_detection.setdefault(ev.event_id, t)
        self.sim.record("detection_start", t, vehicle=vid, event_id=ev.event_id)
        self.sim.technique.on_detect(vid, ev.event_id)
        self._originate(vid, ev.event_id, ANNOUNCEMENT, t)
        self.sim.schedule_timer(t + self.sim.beacon_interval_us, ("announce", vid, ev.event_id, t))
        self.sim.schedule_timer(t, ("monitor", vid, ev.event_id, t))

    def end_detection(self, vid: str, event_id: str, t: int, reason: str):
        del self.nodes[vid].detecting[event_id]
        self.sim.record("detection_end", t, vehicle=vid, event_id=event_id, reason=reason)

    def on_timer(self, key, t: int):
        kind, vid, event_id, onset = key
        n = self.nodes.get(vid)
        # timers die with the detection interval that armed them
        if n is None or n.detecting.get(event_id) != onset:
            return
        if kind == "monitor":
            self._originate(vid, event_id, MONITORING, t)
            self.sim.schedule_timer(t + self.sim.monitor_period_us, key)
        else:
            self._originate(vid, event_id, ANNOUNCEMENT, t)
            self.sim.schedule_timer(t + self.sim.beacon_interval_us, key)

    def _originate(self, vid: str, event_id: str, kind: str, t: int):
        n = self.node(vid)
        msg = Message(n.next_msg_id(), kind, event_id, td=t, origin=vid, t_sent=t, t_gen=t,
                      payload_size=self.sim.payload_size(kind))
        n.seen.add(msg.msg_id)
        self.sim.record(
            "packet_generated", t, vehicle=vid, msg_id=msg.msg_id, kind=kind, subkind=None,
            event_id=event_id, cluster_id=None, td=t,
        )
        self._send(vid, msg, tr=t)

    def _send(self, vid: str, msg: Message, tr: int):
        deliveries = self.sim.transmit(vid, msg, include_bs=msg.kind == MONITORING, tr=tr)
        if any(d.to_bs for d in deliveries):
            self._role(vid, msg.event_id)[2] = True

    # -- dissemination ------------------------------------------------------

    def on_receive(self, vid: str, msg: Message, delivery, tr: int):
        """Handle one copy received by a vehicle; logs exactly one outcome."""
        ev = self.sim.events.get(msg.event_id)
        common = dict(vehicle=vid, msg_id=msg.msg_id, kind=msg.kind, event_id=msg.event_id,
                      sender=delivery.sender, t_sent=delivery.t_sent, td=msg.td,
                      hop_count=msg.hop_count)
        if ev is None:
            self.sim.record("packet_discarded", tr, reason=DISCARD_UNKNOWN_EVENT, **common)
            return
        if tr < msg.td:
            raise ClockOrderError(f"{vid} received {msg.msg_id} at {tr} before td={msg.td}")
        if not az_admits(tr, msg.td, self.sim.mdt_us(msg.event_id)):
            self.sim.record("packet_discarded", tr, reason=DISCARD_AZ, **common)
            return
        n = self.node(vid)
        if msg.td > n.last_td.get(msg.event_id, -1):
            n.last_td[msg.event_id] = msg.td
        if msg.kind == ANNOUNCEMENT:
            n.announced[msg.event_id] = tr
        if msg.msg_id in n.seen:
            self.sim.record("packet_discarded", tr, reason=DISCARD_DUPLICATE, **common)
            return
        if msg.kind == ANNOUNCEMENT:
            self._forward(vid, msg, delivery, tr)
            self.sim.technique.on_announcement(vid, msg)
            return
        if not self.sim.technique.is_member(vid, msg.event_id):
            self.sim.record("packet_discarded", tr, reason=DISCARD_NOT_MEMBER, **common)
            return
        self._role(vid, msg.event_id)[1] = True
        self._forward(vid, msg, delivery, tr)

    def _forward(self, vid: str, msg: Message, delivery, tr: int):
        n = self.nodes[vid]
        n.seen.add(msg.msg_id)
        out = msg.forwarded(tr)
        self.sim.record(
            "packet_forwarded", tr, vehicle=vid, msg_id=msg.msg_id, kind=msg.kind,
            event_id=msg.event_id, sender=delivery.sender, t_sent=delivery.t_sent, td=msg.td,
            t_gen=msg.t_gen, hop_count=out.hop_count,
        )
        self._send(vid, out, tr=tr)


def roles_of(log, vehicle: str, event_id: str, tick: int) -> RoleSet:
    """Roles recorded for ``vehicle`` / ``event_id`` during the tick starting at ``tick`` (µs)."""
    for rec in log:
        if (rec["type"] == "role_snapshot" and rec["tick"] == tick
                and rec["vehicle"] == vehicle and rec["event_id"] == event_id):
            return RoleSet(rec["monitor"], rec["transmitter"], rec["gateway"])
    return RoleSet()


def ever_roles(log, vehicle: str, event_id: str) -> RoleSet:
    """Union of the roles a vehicle held for an event over the whole run."""
    mon = tx = gw = False
    for rec in log:
        if rec["type"] == "role_snapshot" and rec["vehicle"] == vehicle and rec["event_id"] == event_id:
            mon |= rec["monitor"]
            tx |= rec["transmitter"]
            gw |= rec["gateway"]
    return RoleSet(mon, tx, gw)


def mdt_us(event) -> int:
    return to_us(event.mdt)
