import pytest
from hypothesis import given, settings, strategies as st

from minuet_sim import run
from minuet_sim.engine import Simulator
from minuet_sim.errors import ClockOrderError
from minuet_sim.minuet import ANNOUNCEMENT, MONITORING, Message, RoleSet, ever_roles, roles_of
from minuet_sim.mobility import position_at
from minuet_sim.model import BaseStation, CriticalEvent, distance
from minuet_sim.radio import Delivery
from minuet_sim.scenario import Scenario

from desk import desk_scenario
from fixtures import single_detector_scenario, static_trace, walkthrough_scenario


def monitoring_generated(log, vehicle=None):
    return [r for r in log.of_type("packet_generated")
            if r["kind"] == MONITORING and (vehicle is None or r["vehicle"] == vehicle)]


def test_detector_in_bs_range_delivers_directly():
    log = run(single_detector_scenario())
    deliveries = log.of_type("packet_delivered_bs")
    assert deliveries and all(r["hop_count"] == 0 and r["gateway"] == "v" for r in deliveries)


def test_isolated_detector_generates_but_never_delivers():
    sc = Scenario(static_trace({"v": (0.0, 0.0)}), events=[CriticalEvent("EV", (0, 0), 0, 1.0, 10.0)],
                  duration=1.0)
    log = run(sc)
    assert len(monitoring_generated(log)) == 10
    assert log.of_type("packet_delivered_bs") == []


def test_ten_hz_for_two_seconds_gives_twenty_packets():
    sc = Scenario(static_trace({"v": (0.0, 0.0)}, t_end=4.0),
                  events=[CriticalEvent("EV", (0, 0), 0.5, 2.0, 10.0)], duration=3.0, monitor_rate_hz=10)
    log = run(sc)
    assert len(monitoring_generated(log, "v")) == 20
    starts, ends = log.of_type("detection_start"), log.of_type("detection_end")
    assert [r["t"] for r in starts] == [500_000] and [r["t"] for r in ends] == [2_500_000]


def test_one_announcement_per_onset_plus_refresh():
    sc = Scenario(static_trace({"v": (0.0, 0.0)}, t_end=4.0),
                  events=[CriticalEvent("EV", (0, 0), 0.0, 2.5, 10.0)], duration=3.0, beacon_interval=1.0)
    log = run(sc)
    ann = [r["t"] for r in log.of_type("packet_generated") if r["kind"] == ANNOUNCEMENT]
    assert ann == [0, 1_000_000, 2_000_000]


def test_az_expired_announcement_not_forwarded():
    log = run(walkthrough_scenario())
    a_recs = [r for r in log if r.get("vehicle") == "A"]
    assert a_recs and all(r["type"] == "packet_discarded" and r["reason"] == "az_expired" for r in a_recs)
    assert all(r["t"] - r["td"] > 100_000 for r in a_recs)


def test_member_in_bs_range_forwards_and_delivers_same_tick():
    log = run(walkthrough_scenario())
    both = [r for r in log.of_type("role_snapshot")
            if r["vehicle"] == "G" and r["transmitter"] and r["gateway"]]
    assert both


def test_duplicates_never_reforwarded():
    log = run(desk_scenario("2WHD", 4, duration=12))
    fwd = [(r["vehicle"], r["msg_id"]) for r in log.of_type("packet_forwarded")]
    assert len(fwd) == len(set(fwd))
    assert any(r["reason"] == "duplicate" for r in log.of_type("packet_discarded"))


def test_unknown_event_discarded_and_logged():
    sim = Simulator(single_detector_scenario())
    msg = Message("x#1", MONITORING, "nope", td=0, origin="x", t_sent=0)
    sim.protocol.on_receive("v", msg, Delivery("x#1", "x", "v", False, 0, 10), 10)
    rec = sim.log[-1]
    assert rec["type"] == "packet_discarded" and rec["reason"] == "unknown_event"


def test_receipt_before_detection_is_a_bug():
    sim = Simulator(single_detector_scenario())
    msg = Message("x#1", MONITORING, "EV", td=50, origin="x", t_sent=50)
    with pytest.raises(ClockOrderError):
        sim.protocol.on_receive("v", msg, Delivery("x#1", "x", "v", False, 50, 10), 10)


def test_message_forward_copy():
    m = Message("a#1", MONITORING, "EV", td=5, origin="a", t_sent=5)
    f = m.forwarded(9)
    assert (f.msg_id, f.hop_count, f.t_sent, f.td) == ("a#1", 1, 9, 5)


def test_roles_of_examples():
    log = run(walkthrough_scenario())
    assert ever_roles(log, "G", "EV").gateway
    assert ever_roles(log, "A", "EV") == RoleSet()
    assert not ever_roles(log, "A", "EV").any()
    d = [r["tick"] for r in log.of_type("role_snapshot") if r["vehicle"] == "D" and r["monitor"] and r["gateway"]]
    assert d and roles_of(log, "D", "EV", d[0]).monitor and roles_of(log, "D", "EV", d[0]).gateway
    assert roles_of(log, "H", "EV", 0) == RoleSet()


def check_protocol_invariants(sc, log):
    """AZ soundness, members-only forwarding, hop accounting, role sanity, flooding bound."""
    mdt = {e.event_id: round(e.mdt * 1e6) for e in sc.events}
    events = {e.event_id: e for e in sc.events}
    trace = sc.load_trace()
    n_present = len(log[-1]["vehicles"])
    members = set()
    hop_at = {}
    fwd_count = {}
    for r in log:
        k = r["type"]
        if k == "membership_change":
            key = (r["vehicle"], r["event_id"])
            if r["change"] == "join":
                members.add(key)
            elif r["change"] == "leave":
                members.discard(key)
        elif k == "packet_generated" and r["kind"] in (MONITORING, ANNOUNCEMENT):
            hop_at[(r["msg_id"], r["vehicle"])] = 0
            assert r["td"] <= r["t"]
        elif k == "packet_forwarded":
            assert r["t"] - r["td"] <= mdt[r["event_id"]]
            assert r["t"] > r["t_sent"]
            assert r["hop_count"] == hop_at[(r["msg_id"], r["sender"])] + 1
            hop_at[(r["msg_id"], r["vehicle"])] = r["hop_count"]
            fwd_count[r["msg_id"]] = fwd_count.get(r["msg_id"], 0) + 1
            if r["kind"] == MONITORING:
                assert (r["vehicle"], r["event_id"]) in members
        elif k == "packet_delivered_bs":
            assert r["tr"] - r["td"] <= mdt[r["event_id"]]
            assert r["hop_count"] == hop_at[(r["msg_id"], r["gateway"])]
        elif k == "role_snapshot":
            s = position_at(trace, r["vehicle"], r["tick"] / 1e6)
            if r["monitor"]:
                e = events[r["event_id"]]
                assert e.active_at(r["tick"] / 1e6) and distance(s.pos, e.pos) <= e.detection_radius
            if r["gateway"]:
                assert any(distance(s.pos, b.pos) <= b.range for b in sc.base_stations)
    assert all(c <= n_present for c in fwd_count.values())


@settings(max_examples=6, deadline=None)
@given(st.sampled_from(["1WLD", "1WHD", "2WLD", "2WHD"]), st.integers(0, 10_000),
       st.sampled_from(["dca_onehop", "pctt_multihop"]))
def test_protocol_invariants_on_random_runs(label, seed, technique):
    sc = desk_scenario(label, seed, technique, duration=10)
    check_protocol_invariants(sc, run(sc))


def test_protocol_invariants_with_loss():
    from minuet_sim.radio import RadioParams

    sc = desk_scenario("2WHD", 5, duration=10, radio=RadioParams(loss_prob=0.3))
    check_protocol_invariants(sc, run(sc))


def test_monitoring_generation_is_technique_independent():
    a = run(desk_scenario("2WLD", 8, "dca_onehop", duration=12))
    b = run(desk_scenario("2WLD", 8, "pctt_multihop", duration=12))
    key = lambda log: [(r["t"], r["vehicle"]) for r in monitoring_generated(log)]
    assert key(a) == key(b) and key(a)
