"""Unit-disk V2V/V2I connectivity with per-link delay and Bernoulli loss.

Stand-in for an 802.11p stack: no airtime, no collisions, no congestion.
Each receiver of a broadcast independently survives a loss draw and gets
its own uniform hop delay. All times here are integer microseconds.

RNG draw order for one ``broadcast`` call: receivers are visited vehicles
first (sorted by id), then base stations (sorted by id); for each receiver
one ``rng.random()`` decides loss, and survivors then take one
``rng.randint(hop_delay_min_us, hop_delay_max_us)`` for the delay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence

from .model import BaseStation, VehicleState, distance

US = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US))


@dataclass(frozen=True)
class RadioParams:
    range: float = 100.0
    hop_delay_min: float = 0.010
    hop_delay_max: float = 0.030
    loss_prob: float = 0.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("radio range must be > 0")
        if not 0 < self.hop_delay_min <= self.hop_delay_max:
            raise ValueError("need 0 < hop_delay_min <= hop_delay_max")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")

    @property
    def hop_delay_min_us(self) -> int:
        return max(1, to_us(self.hop_delay_min))

    @property
    def hop_delay_max_us(self) -> int:
        return max(self.hop_delay_min_us, to_us(self.hop_delay_max))


@dataclass(frozen=True, slots=True)
class Delivery:
    msg_id: str
    sender: str
    receiver: str
    to_bs: bool
    t_sent: int
    t_recv: int


@dataclass
class TickState:
    """Connectivity snapshot the engine builds once per tick."""

    t: int
    states: Dict[str, VehicleState]
    adjacency: Dict[str, List[str]]
    bs_links: Dict[str, List[str]] = field(default_factory=dict)
    params: RadioParams = field(default_factory=RadioParams)


def neighbors(positions: Iterable[VehicleState], range_m: float) -> Dict[str, List[str]]:
    """Symmetric unit-disk adjacency; every vehicle gets a (sorted) entry."""
    states = sorted(positions, key=lambda s: s.vehicle_id)
    adj: Dict[str, List[str]] = {s.vehicle_id: [] for s in states}
    r2 = range_m * range_m
    pts = [(s.vehicle_id, s.pos[0], s.pos[1]) for s in states]
    for i, (a, ax, ay) in enumerate(pts):
        for b, bx, by in pts[i + 1 :]:
            dx, dy = ax - bx, ay - by
            d2 = dx * dx + dy * dy
            # cheap reject first; hypot keeps the decision identical to distance()
            if d2 <= r2 * (1 + 1e-9) and math.hypot(dx, dy) <= range_m:
                adj[a].append(b)
                adj[b].append(a)
    return adj


def in_bs_range(v: VehicleState, bs: BaseStation) -> bool:
    return distance(v.pos, bs.pos) <= bs.range


def bs_links(states: Mapping[str, VehicleState], stations: Sequence[BaseStation]) -> Dict[str, List[str]]:
    """Base stations (sorted ids) each present vehicle can reach."""
    out = {}
    for vid, s in states.items():
        links = sorted(bs.bs_id for bs in stations if in_bs_range(s, bs))
        if links:
            out[vid] = links
    return out


def broadcast(msg, sender: str, tick_state: TickState, rng, include_bs: bool = True) -> List[Delivery]:
    """One-hop broadcast of ``msg`` (needs ``msg_id`` and integer ``t_sent``)."""
    p = tick_state.params
    receivers = [(r, False) for r in tick_state.adjacency.get(sender, ())]
    if include_bs:
        receivers += [(b, True) for b in tick_state.bs_links.get(sender, ())]
    out = []
    lo, hi = p.hop_delay_min_us, p.hop_delay_max_us
    for receiver, to_bs in receivers:
        if rng.random() < p.loss_prob:
            continue
        delay = rng.randint(lo, hi)
        out.append(Delivery(msg.msg_id, sender, receiver, to_bs, msg.t_sent, msg.t_sent + delay))
    return out
