"""Cluster coordination: formation and maintenance of monitoring groups.

Two techniques are provided, selected by name in the scenario file:

``dca_onehop``
    One-hop clusters open to every vehicle in the announcement zone. The
    leader has the highest neighbour degree among the candidates (ties go to
    the lowest id); every member must stay a direct neighbour of its leader.
``pctt_multihop``
    Multi-hop clusters made only of vehicles that detected the event at
    least once; a cluster is a connected component of those vehicles and is
    led by its earliest detector. A new cluster is opened only by a
    component holding a vehicle that is detecting right now.

Both are simplified stand-ins for the published DCA and PCTT algorithms that
keep the property the evaluation hinges on (open one-hop membership versus
detector-only multi-hop membership).

Neighbour degree comes from hello beacons (entries expire after two missed
beacons), so DCA-style formation waits until a candidate has beaconed
during an earlier tick; link decisions use the current tick's connectivity. Cluster state
is simulator bookkeeping, but every change a node would announce (hello,
join, leave, leader claim, merge) is transmitted through the radio so that
clustering overhead is accounted for.

A cluster is destroyed when it empties, loses its leader, merges into
another one, or when no member has learnt anything about the event for
longer than its maximum delivery time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

from .errors import ContractError

HELLO = "hello"
JOIN = "join"
LEAVE = "leave"
LEADER_CLAIM = "leader_claim"
MERGE = "merge"
CLUSTER_MSG_KINDS = (HELLO, JOIN, LEAVE, LEADER_CLAIM, MERGE)


@dataclass
class Cluster:
    cluster_id: str
    event_id: str
    leader: str
    members: Set[str]
    t_created: int
    t_destroyed: Optional[int] = None

    @property
    def alive(self) -> bool:
        return self.t_destroyed is None


@dataclass(frozen=True, slots=True)
class ClusterMsg:
    msg_id: str
    kind: str
    sender: str
    cluster_id: Optional[str]
    event_id: Optional[str]
    t_sent: int


def merge(a: Cluster, b: Cluster, t: int) -> Tuple[Cluster, Cluster]:
    """Merge two overlapping clusters of the same event.

    The larger cluster survives (ties: created earlier, then lower id) and
    absorbs the other's members. Returns ``(survivor, loser)`` as new
    objects; the loser is marked destroyed at ``t``.
    """
    if a.event_id != b.event_id:
        raise ContractError(f"cannot merge clusters of events {a.event_id} and {b.event_id}")
    if a.cluster_id == b.cluster_id:
        raise ContractError("cannot merge a cluster with itself")

    def rank(c):
        return (-len(c.members), c.t_created, c.cluster_id)

    win, lose = (a, b) if rank(a) <= rank(b) else (b, a)
    survivor = replace(win, members=set(win.members) | set(lose.members))
    loser = replace(lose, members=set(lose.members), t_destroyed=t)
    return survivor, loser


def dca_form(candidates: Iterable[str], adjacency, degree: Callable[[str], int],
             leaders: Dict[str, str]) -> Tuple[Dict[str, str], List[str]]:
    """One DCA formation sweep over unclustered candidates.

    Candidates are visited by decreasing degree (ties: lowest id). Each joins
    the best adjacent leader (highest degree, then lowest id) if one exists,
    otherwise it becomes a leader itself. ``leaders`` maps existing leader
    ids to their cluster ids.

    Returns ``(joins, new_leaders)`` where ``joins`` maps vehicle -> leader.
    """
    leaders = dict(leaders)
    joins: Dict[str, str] = {}
    new_leaders: List[str] = []
    for v in sorted(candidates, key=lambda u: (-degree(u), u)):
        near = [u for u in adjacency.get(v, ()) if u in leaders]
        if near:
            best = min(near, key=lambda u: (-degree(u), u))
            joins[v] = best
        else:
            leaders[v] = v
            new_leaders.append(v)
    return joins, new_leaders


def components(nodes: Iterable[str], adjacency) -> List[List[str]]:
    """Connected components of the subgraph induced by ``nodes``.

    Each component is sorted, and components are ordered by smallest id.
    """
    pool = set(nodes)
    out = []
    for start in sorted(pool):
        if start not in pool:
            continue
        pool.discard(start)
        comp, stack = [start], [start]
        while stack:
            u = stack.pop()
            for w in adjacency.get(u, ()):
                if w in pool:
                    pool.discard(w)
                    comp.append(w)
                    stack.append(w)
        out.append(sorted(comp))
    return out


class ClusterTechnique:
    """Base class and contract for clustering techniques.

    The engine calls ``on_detect``, ``on_announcement``, ``on_cluster_msg``,
    ``maintain`` (once per tick) and ``on_beacon`` (once per tick, after
    ``maintain``); the protocol queries ``is_member`` and ``cluster_of``.
    Subclasses implement ``maintain`` and ``wants_beacon``.
    """

    name = "abstract"

    def __init__(self, sim):
        self.sim = sim
        self.clusters: Dict[str, Cluster] = {}
        self.history: List[Cluster] = []
        self.member_of: Dict[Tuple[str, str], str] = {}
        self.nbr_seen: Dict[str, Dict[str, int]] = {}
        self._next_beacon: Dict[str, int] = {}
        # first tick of each vehicle's current beaconing streak
        self._beacon_since: Dict[str, int] = {}
        self._n_created = 0

    # -- queries --------------------------------------------------------

    def is_member(self, vid: str, event_id: str) -> bool:
        return (vid, event_id) in self.member_of

    def cluster_of(self, vid: str, event_id: str) -> Optional[Cluster]:
        cid = self.member_of.get((vid, event_id))
        return None if cid is None else self.clusters[cid]

    def live_clusters(self, event_id: str) -> List[Cluster]:
        return [self.clusters[c] for c in sorted(self.clusters) if self.clusters[c].event_id == event_id]

    def degree(self, vid: str) -> int:
        now = self.sim.now
        horizon = 2 * self.sim.beacon_interval_us
        return sum(1 for t in self.nbr_seen.get(vid, {}).values() if now - t <= horizon)

    # -- callbacks --------------------------------------------------------

    def on_detect(self, vid: str, event_id: str):
        pass

    def on_announcement(self, vid: str, msg):
        pass

    def on_cluster_msg(self, vid: str, msg: ClusterMsg):
        if msg.kind == HELLO:
            self.nbr_seen.setdefault(vid, {})[msg.sender] = self.sim.now

    def maintain(self, t: int):
        raise NotImplementedError

    def wants_beacon(self, vid: str, t: int) -> bool:
        raise NotImplementedError

    def on_beacon(self, t: int):
        """Send due hello beacons; a vehicle beacons only while it takes part."""
        present = self.sim.tick_state.states
        for vid in sorted(present):
            if not self.wants_beacon(vid, t):
                self._next_beacon.pop(vid, None)
                self._beacon_since.pop(vid, None)
                continue
            self._beacon_since.setdefault(vid, t)
            due = self._next_beacon.get(vid)
            if due is None or due <= t:
                self.sim.send_cluster_msg(vid, HELLO, None, None)
                self._next_beacon[vid] = t + self.sim.beacon_interval_us
        for vid in [v for v in self._next_beacon if v not in present]:
            del self._next_beacon[vid]
            self._beacon_since.pop(vid, None)

    def discovered(self, vid: str, t: int) -> bool:
        """True once ``vid`` has been beaconing since an earlier tick."""
        since = self._beacon_since.get(vid)
        return since is not None and since < t

    def events_in_play(self) -> List[str]:
        return sorted(self.sim.events)

    # -- bookkeeping helpers (log + radio) ----------------------------------

    def _create(self, event_id: str, leader: str, members: Iterable[str]) -> Cluster:
        self._n_created += 1
        t = self.sim.now
        c = Cluster(f"c{self._n_created}", event_id, leader, set(), t)
        self.clusters[c.cluster_id] = c
        self.history.append(c)
        self.sim.record("cluster_created", t, cluster_id=c.cluster_id, event_id=event_id, leader=leader)
        self.sim.send_cluster_msg(leader, LEADER_CLAIM, c.cluster_id, event_id)
        self._add(c, leader, "create")
        for v in sorted(set(members) - {leader}):
            self._add(c, v, "create")
            self.sim.send_cluster_msg(v, JOIN, c.cluster_id, event_id)
        return c

    def _add(self, c: Cluster, vid: str, reason: str):
        key = (vid, c.event_id)
        if key in self.member_of:
            raise ContractError(f"{vid} already in {self.member_of[key]} for {c.event_id}")
        c.members.add(vid)
        self.member_of[key] = c.cluster_id
        self.sim.record("membership_change", self.sim.now, vehicle=vid, cluster_id=c.cluster_id,
                        event_id=c.event_id, change="join", reason=reason)

    def _remove(self, c: Cluster, vid: str, reason: str):
        c.members.discard(vid)
        del self.member_of[(vid, c.event_id)]
        self.sim.record("membership_change", self.sim.now, vehicle=vid, cluster_id=c.cluster_id,
                        event_id=c.event_id, change="leave", reason=reason)

    def _join(self, vid: str, c: Cluster, reason: str = "join"):
        self._add(c, vid, reason)
        self.sim.send_cluster_msg(vid, JOIN, c.cluster_id, c.event_id)

    def _leave(self, vid: str, c: Cluster, reason: str, announce: bool):
        self._remove(c, vid, reason)
        if announce:
            self.sim.send_cluster_msg(vid, LEAVE, c.cluster_id, c.event_id)

    def _destroy(self, c: Cluster, reason: str):
        for v in sorted(c.members):
            self._remove(c, v, reason)
        c.t_destroyed = self.sim.now
        del self.clusters[c.cluster_id]
        self.sim.record("cluster_destroyed", self.sim.now, cluster_id=c.cluster_id,
                        event_id=c.event_id, reason=reason)

    def _set_leader(self, c: Cluster, vid: str):
        if c.leader == vid:
            return
        c.leader = vid
        self.sim.record("membership_change", self.sim.now, vehicle=vid, cluster_id=c.cluster_id,
                        event_id=c.event_id, change="leader", reason="leader_claim")
        self.sim.send_cluster_msg(vid, LEADER_CLAIM, c.cluster_id, c.event_id)

    def _merge(self, a: Cluster, b: Cluster) -> Cluster:
        t = self.sim.now
        survivor, loser = merge(a, b, t)
        keep = self.clusters[survivor.cluster_id]
        gone = self.clusters[loser.cluster_id]
        moved = sorted(gone.members)
        self.sim.record("cluster_merged", t, survivor=keep.cluster_id, loser=gone.cluster_id,
                        event_id=keep.event_id, moved=moved)
        for v in moved:
            self._remove(gone, v, "merge")
            self._add(keep, v, "merge")
        gone.t_destroyed = t
        del self.clusters[gone.cluster_id]
        self.sim.record("cluster_destroyed", t, cluster_id=gone.cluster_id,
                        event_id=gone.event_id, reason="merged")
        self.sim.send_cluster_msg(keep.leader, MERGE, keep.cluster_id, keep.event_id)
        return keep

    def _teardown(self, event_id: str, present, alive_member: Callable[[str], bool]):
        """Drop absent members; destroy leaderless, empty and stale clusters."""
        for c in self.live_clusters(event_id):
            for v in sorted(c.members):
                if v not in present:
                    self._remove(c, v, "absent")
            if c.leader not in c.members:
                self._destroy(c, "leader_lost")
            elif not any(alive_member(v) for v in c.members):
                self._destroy(c, "stale")


class DcaOneHop(ClusterTechnique):
    name = "dca_onehop"

    def _eligible(self, vid: str, event_id: str) -> bool:
        return self.sim.protocol.in_az(vid, event_id, self.sim.now)

    def _leaders(self, event_id: str) -> Dict[str, str]:
        return {c.leader: c.cluster_id for c in self.live_clusters(event_id)}

    def _try_join(self, vid: str, event_id: str):
        if self.is_member(vid, event_id) or vid not in self.sim.tick_state.states:
            return
        leaders = self._leaders(event_id)
        near = [u for u in self.sim.tick_state.adjacency.get(vid, ()) if u in leaders]
        if near:
            best = min(near, key=lambda u: (-self.degree(u), u))
            self._join(vid, self.clusters[leaders[best]])

    def on_detect(self, vid, event_id):
        # a detector is a member from its first tick: join a leader nearby or lead alone
        self._try_join(vid, event_id)
        if not self.is_member(vid, event_id) and vid in self.sim.tick_state.states:
            self._create(event_id, vid, ())

    def on_announcement(self, vid, msg):
        self._try_join(vid, msg.event_id)

    def wants_beacon(self, vid, t):
        return any(
            self._eligible(vid, ev) or self.is_member(vid, ev) for ev in self.sim.events
        )

    def maintain(self, t: int):
        ts = self.sim.tick_state
        adj = ts.adjacency
        protocol = self.sim.protocol
        for ev in self.events_in_play():
            self._teardown(ev, ts.states, lambda v: protocol.is_fresh(v, ev, t))
            # merge clusters whose leaders are one hop apart
            merged = True
            while merged:
                merged = False
                live = self.live_clusters(ev)
                for i, a in enumerate(live):
                    for b in live[i + 1:]:
                        if b.leader in adj.get(a.leader, ()):
                            self._merge(a, b)
                            merged = True
                            break
                    if merged:
                        break
            # members out of their leader's radio range leave
            for c in self.live_clusters(ev):
                near = set(adj.get(c.leader, ()))
                for v in sorted(c.members - {c.leader}):
                    if v not in near:
                        self._leave(v, c, "link_lost", announce=True)
            # formation waits for one round of neighbour discovery
            candidates = [v for v in sorted(ts.states)
                          if not self.is_member(v, ev) and self._eligible(v, ev)
                          and self.discovered(v, t)]
            if not candidates:
                continue
            leaders = self._leaders(ev)
            joins, new_leaders = dca_form(candidates, adj, self.degree, leaders)
            # leaders are created first so joins can reference them
            created = {}
            for v in new_leaders:
                created[v] = self._create(ev, v, ())
            for v in sorted(joins):
                leader = joins[v]
                cid = leaders.get(leader) or created[leader].cluster_id
                self._join(v, self.clusters[cid])


class PcttMultiHop(ClusterTechnique):
    name = "pctt_multihop"

    def _eligible(self, vid: str, event_id: str) -> bool:
        p = self.sim.protocol
        return p.first_detection(vid, event_id) is not None and p.is_fresh(vid, event_id, self.sim.now)

    def wants_beacon(self, vid, t):
        return any(self._eligible(vid, ev) for ev in self.sim.events)

    def _leader_of(self, comp: List[str], event_id: str) -> str:
        p = self.sim.protocol
        return min(comp, key=lambda v: (p.first_detection(v, event_id), v))

    def maintain(self, t: int):
        ts = self.sim.tick_state
        adj = ts.adjacency
        for ev in self.events_in_play():
            eligible = {v for v in ts.states if self._eligible(v, ev)}
            for c in self.live_clusters(ev):
                for v in sorted(c.members):
                    if v not in eligible:
                        self._remove(c, v, "absent" if v not in ts.states else "stale")
                if not c.members:
                    self._destroy(c, "empty")
            comps = components(eligible, adj)
            where = {v: i for i, comp in enumerate(comps) for v in comp}
            owned: Dict[int, List[Cluster]] = {}
            for c in self.live_clusters(ev):
                if c.leader in c.members:
                    home = where[c.leader]
                else:
                    counts: Dict[int, int] = {}
                    for v in c.members:
                        counts[where[v]] = counts.get(where[v], 0) + 1
                    home = min(counts, key=lambda i: (-counts[i], i))
                for v in sorted(c.members):
                    if where[v] != home:
                        self._leave(v, c, "partition", announce=True)
                owned.setdefault(home, []).append(c)
            protocol = self.sim.protocol
            for i, comp in enumerate(comps):
                leader = self._leader_of(comp, ev)
                mine = owned.get(i, [])
                if not mine:
                    # only a component that currently senses the event may open a cluster
                    if any(protocol.detecting(v, ev) for v in comp):
                        self._create(ev, leader, comp)
                    continue
                keep = mine[0]
                for other in mine[1:]:
                    keep = self._merge(keep, other)
                for v in comp:
                    if not self.is_member(v, ev):
                        self._join(v, keep)
                self._set_leader(keep, leader)


TECHNIQUES: Dict[str, type] = {}


def register_technique(cls):
    """Class decorator / function making a technique selectable by ``cls.name``."""
    TECHNIQUES[cls.name] = cls
    return cls


register_technique(DcaOneHop)
register_technique(PcttMultiHop)


def make_technique(name: str, sim) -> ClusterTechnique:
    try:
        cls = TECHNIQUES[name]
    except KeyError:
        raise ContractError(f"unknown clustering technique {name!r}; known: {sorted(TECHNIQUES)}") from None
    return cls(sim)
