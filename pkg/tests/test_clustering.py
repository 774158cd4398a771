import pytest
from hypothesis import given, settings, strategies as st

from minuet_sim import run
from minuet_sim.clustering import (
    TECHNIQUES, Cluster, ClusterTechnique, components, dca_form, make_technique, merge, register_technique,
)
from minuet_sim.errors import ContractError
from minuet_sim.model import CriticalEvent, VehicleState
from minuet_sim.radio import RadioParams, neighbors
from minuet_sim.scenario import Scenario

from desk import desk_scenario
from fixtures import static_trace


def line_adj(names, links):
    adj = {n: [] for n in names}
    for a, b in links:
        adj[a].append(b)
        adj[b].append(a)
    return adj


def brute_force_leader(cands, adj):
    deg = {v: len(adj[v]) for v in cands}
    return min(cands, key=lambda v: (-deg[v], v))


def test_dca_form_line_elects_middle():
    adj = line_adj("ABC", [("A", "B"), ("B", "C")])
    joins, leaders = dca_form("ABC", adj, lambda v: len(adj[v]), {})
    assert leaders == [brute_force_leader("ABC", adj)] == ["B"]
    assert joins == {"A": "B", "C": "B"}


def test_dca_form_tie_lower_id():
    adj = line_adj(["x", "y"], [("x", "y")])
    joins, leaders = dca_form(["y", "x"], adj, lambda v: 1, {})
    assert leaders == ["x"] and joins == {"y": "x"}


def test_dca_form_isolated_singleton():
    joins, leaders = dca_form(["a"], {"a": []}, lambda v: 0, {})
    assert leaders == ["a"] and joins == {}


def _sc(positions, detect_pos, radius, technique, duration=1.0, mdt=0.2):
    return Scenario(static_trace(positions, t_end=duration + 1),
                    events=[CriticalEvent("EV", detect_pos, 0.0, duration, radius, mdt)],
                    clustering_technique=technique, duration=duration)


def memberships(log):
    out = {}
    for r in log.of_type("membership_change"):
        if r["change"] == "join":
            out.setdefault(r["cluster_id"], set()).add(r["vehicle"])
    return out


def test_engine_dca_line_one_cluster_led_by_middle():
    log = run(_sc({"A": (0, 0), "B": (80, 0), "C": (160, 0)}, (80, 0), 10.0, "dca_onehop"))
    created = log.of_type("cluster_created")
    assert [c["leader"] for c in created] == ["B"]
    assert memberships(log) == {created[0]["cluster_id"]: {"A", "B", "C"}}


def test_engine_lone_detector_singleton():
    for tech in TECHNIQUES:
        log = run(_sc({"A": (0, 0)}, (0, 0), 10.0, tech))
        assert [(c["leader"]) for c in log.of_type("cluster_created")] == ["A"]
        assert memberships(log) == {"c1": {"A"}}


def test_pctt_excludes_az_non_detector():
    log = run(_sc({"A": (0, 0), "B": (50, 0)}, (0, 0), 10.0, "pctt_multihop"))
    assert all(r["vehicle"] == "A" for r in log.of_type("membership_change"))
    assert any(r["type"] == "packet_forwarded" and r["vehicle"] == "B" for r in log)  # B is in the AZ


def test_pctt_two_detectors_one_cluster():
    log = run(_sc({"A": (0, 0), "B": (50, 0)}, (25, 0), 30.0, "pctt_multihop"))
    assert memberships(log) == {"c1": {"A", "B"}}
    assert log.of_type("cluster_created")[0]["leader"] == "A"


def test_pctt_non_detecting_relay_does_not_bridge():
    # D1 and D2 sense the event but are out of radio range of each other;
    # R links both of them yet sits outside the detection radius.
    pos = {"D1": (-45.0, 0.0), "D2": (45.0, 0.0), "R": (0.0, 55.0)}
    radio = RadioParams(range=75.0)
    sc = Scenario(static_trace(pos, t_end=2.0), events=[CriticalEvent("EV", (0.0, 0.0), 0.0, 1.0, 50.0)],
                  radio=radio, clustering_technique="pctt_multihop", duration=1.0)
    log = run(sc)
    clusters = memberships(log)
    assert sorted(map(sorted, clusters.values())) == [["D1"], ["D2"]]
    # brute-force reachability over the detecting-only subgraph agrees
    adj = neighbors([VehicleState(v, 0.0, p) for v, p in pos.items()], radio.range)
    assert "R" in adj["D1"] and "R" in adj["D2"] and "D2" not in adj["D1"]
    assert components(["D1", "D2"], adj) == [["D1"], ["D2"]]


def test_merge_rules():
    a = Cluster("c1", "e", "x", {"x", "y", "z"}, 10)
    b = Cluster("c2", "e", "w", {"w"}, 5)
    win, lose = merge(a, b, 20)
    assert win.cluster_id == "c1" and win.members == {"x", "y", "z", "w"}
    assert lose.t_destroyed == 20 and not lose.alive
    old = Cluster("c3", "e", "p", {"p"}, 10_000_000)
    new = Cluster("c4", "e", "q", {"q"}, 12_000_000)
    assert merge(new, old, 0)[0].cluster_id == "c3"
    with pytest.raises(ContractError):
        merge(a, Cluster("c9", "other", "q", {"q"}, 0), 1)
    with pytest.raises(ContractError):
        merge(a, a, 1)


def test_merge_keeps_nc():
    from minuet_sim.metrics import nc

    log = run(desk_scenario("2WHD", 1, duration=12))
    assert log.of_type("cluster_merged")
    assert nc(log) == len(log.of_type("cluster_created"))


def test_registry():
    with pytest.raises(ContractError):
        make_technique("nope", None)

    @register_technique
    class Null(ClusterTechnique):
        name = "null_test"

        def maintain(self, t):
            pass

        def wants_beacon(self, vid, t):
            return False

    try:
        assert TECHNIQUES["null_test"] is Null
    finally:
        del TECHNIQUES["null_test"]


def _check_tick(sim):
    tech = sim.technique
    ts = sim.tick_state
    seen = set()
    for cid, c in tech.clusters.items():
        assert c.alive and c.members and c.leader in c.members
        for v in c.members:
            key = (v, c.event_id)
            assert key not in seen
            seen.add(key)
            assert tech.member_of[key] == cid
            if tech.name == "dca_onehop" and v != c.leader:
                assert v in ts.adjacency.get(c.leader, ())
            if tech.name == "pctt_multihop":
                assert sim.protocol.first_detection(v, c.event_id) is not None
    assert set(tech.member_of) == seen


@settings(max_examples=8, deadline=None)
@given(st.sampled_from(["1WLD", "2WHD"]), st.integers(1, 1000), st.sampled_from(sorted(TECHNIQUES)))
def test_cluster_invariants_every_tick(label, seed, technique):
    from minuet_sim.engine import Simulator

    Simulator(desk_scenario(label, seed, technique, duration=10)).run(on_tick=_check_tick)


def test_every_cluster_message_is_counted():
    from minuet_sim.engine import Simulator
    from minuet_sim.metrics import transmission_totals

    sim = Simulator(desk_scenario("2WLD", 2, duration=12))
    sent = []
    orig = sim.send_cluster_msg

    def spy(sender, kind, cid, ev):
        if sender in sim.tick_state.states:
            sent.append(kind)
        orig(sender, kind, cid, ev)

    sim.send_cluster_msg = spy
    log = sim.run()
    assert sent and transmission_totals(log)["cp_total"] == len(sent)
