"""Domain types of the urban environment and the predicates built on them.

Positions are planar ``(x, y)`` pairs in meters. "Within range" is inclusive
everywhere: a vehicle exactly ``r`` meters away from something with range
``r`` is in range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from .errors import ClockOrderError

Position = Tuple[float, float]


@dataclass(frozen=True, slots=True)
class VehicleState:
    """One time-stamped kinematic sample of a vehicle."""

    vehicle_id: str
    t: float
    pos: Position
    speed: float = 0.0
    heading: float = 0.0

    def is_finite(self) -> bool:
        return math.isfinite(self.pos[0]) and math.isfinite(self.pos[1])


@dataclass(frozen=True)
class CriticalEvent:
    """A fixed urban event, active on ``[t_spawn, t_spawn + lifetime)``.

    ``mdt`` is the maximum delivery time: monitored data older than this is
    useless to the external entity, and it bounds the announcement zone.
    """

    event_id: str
    pos: Position
    t_spawn: float
    lifetime: float
    detection_radius: float = 100.0
    mdt: float = 0.2

    def __post_init__(self):
        if not self.lifetime > 0:
            raise ValueError(f"event {self.event_id}: lifetime must be > 0")
        if not self.detection_radius > 0:
            raise ValueError(f"event {self.event_id}: detection_radius must be > 0")
        if not self.mdt > 0:
            raise ValueError(f"event {self.event_id}: mdt must be > 0")

    @property
    def t_end(self) -> float:
        return self.t_spawn + self.lifetime

    def active_at(self, t: float) -> bool:
        return self.t_spawn <= t < self.t_spawn + self.lifetime


@dataclass(frozen=True)
class BaseStation:
    bs_id: str
    pos: Position
    range: float = 100.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"base station {self.bs_id}: range must be > 0")


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def event_in_range(v: VehicleState, ev: CriticalEvent) -> bool:
    """True when ``ev`` is active at ``v.t`` and within its detection radius of ``v``."""
    if not ev.active_at(v.t):
        return False
    return distance(v.pos, ev.pos) <= ev.detection_radius


def az_admits(tr, td, mdt) -> bool:
    """Announcement-zone test: a message detected at ``td`` and received at
    ``tr`` is still useful iff ``tr - td <= mdt``.

    Works on any consistent time unit; the engine passes integer microseconds.
    """
    if tr < td:
        raise ClockOrderError(f"receipt time {tr} precedes detection time {td}")
    return tr - td <= mdt
