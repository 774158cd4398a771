import dataclasses
import hashlib
import math

import pytest

from minuet_sim import run, run_batch
from minuet_sim.engine import EventLog, Simulator, validate_record
from minuet_sim.errors import ConfigError, DataError, LogSchemaError
from minuet_sim.minuet import MONITORING
from minuet_sim.mobility import SynthParams, Trace
from minuet_sim.model import CriticalEvent, VehicleState
from minuet_sim.scenario import Scenario, SynthSpec, TraceFile

from desk import desk_scenario
from fixtures import single_detector_scenario, static_trace

PACKET_TYPES = ("packet_generated", "packet_forwarded", "packet_delivered_bs", "packet_discarded")


def digest(log):
    return hashlib.sha256(log.dumps().encode()).hexdigest()


def test_empty_trace_has_no_packets():
    sc = Scenario(SynthSpec(SynthParams(0, duration=5)), duration=5,
                  events=[CriticalEvent("EV", (0, 0), 0, 5, 10)])
    log = run(sc)
    assert log.of_type(*PACKET_TYPES) == []
    assert log[0]["type"] == "run_start" and log[-1]["type"] == "run_end"


def test_single_detector_hand_count():
    log = run(single_detector_scenario(duration=1.0))
    gen = [r for r in log.of_type("packet_generated") if r["kind"] == MONITORING]
    assert len(gen) == 10
    assert len(log.of_type("packet_delivered_bs")) == 10


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_replay_determinism(seed):
    sc = desk_scenario("2WHD", seed, duration=8)
    assert digest(run(sc)) == digest(run(sc))


def test_seed_changes_log():
    assert digest(run(desk_scenario("2WHD", 1, duration=8))) != digest(run(desk_scenario("2WHD", 2, duration=8)))


def test_batch_of_one_is_run():
    sc = desk_scenario("1WLD", 3, duration=8)
    (out,) = run_batch([sc])
    assert out.ok and out.log.dumps() == run(sc).dumps()


def test_batch_parallel_matches_sequential():
    scs = [desk_scenario(lab, 7, duration=8) for lab in ("1WLD", "1WHD", "2WLD", "2WHD")]
    seq = run_batch(scs, parallelism=1)
    par = run_batch(scs, parallelism=4)
    assert [o.log.dumps() for o in seq] == [o.log.dumps() for o in par]


def test_batch_reports_failures_per_scenario(tmp_path):
    scs = [desk_scenario("1WLD", s, duration=8) for s in range(3)]
    scs.insert(1, dataclasses.replace(scs[0], trace_source=TraceFile(str(tmp_path / "missing.csv"))))
    outs = run_batch(scs, parallelism=2)
    assert [o.ok for o in outs] == [True, False, True, True]
    assert "missing.csv" in outs[1].error
    with pytest.raises(ConfigError):
        run_batch([])


def test_missing_trace_is_config_error(tmp_path):
    sc = Scenario(TraceFile(str(tmp_path / "nope.csv")), duration=1)
    with pytest.raises(ConfigError) as exc:
        run(sc)
    assert exc.value.field == "trace.path"


def test_event_outside_duration_rejected():
    sc = Scenario(static_trace({"v": (0, 0)}), events=[CriticalEvent("EV", (0, 0), 0.5, 1.0)], duration=1.0)
    with pytest.raises(ConfigError):
        run(sc)


def test_nan_position_names_vehicle_and_time():
    states = (VehicleState("bad", 0.0, (0.0, 0.0)), VehicleState("bad", 1.0, (math.nan, 0.0)))
    sc = Scenario(Trace({"bad": states}, 1.0), duration=2.0)
    with pytest.raises(DataError, match=r"vehicle bad at t=0.1s"):
        run(sc)


def test_causality_and_schema():
    log = run(desk_scenario("2WHD", 9, duration=10))
    for r in log:
        validate_record(r)
        if r["type"] in ("packet_forwarded", "packet_delivered_bs", "packet_discarded"):
            assert r["t"] > r["t_sent"]
    ts = [r["t"] for r in log]
    assert ts == sorted(ts)


def test_conservation_every_delivery_accounted():
    sim = Simulator(desk_scenario("2WHD", 11, duration=10))
    scheduled = []
    orig = sim.transmit

    def spy(sender, msg, include_bs, tr=None):
        out = orig(sender, msg, include_bs, tr)
        if hasattr(msg, "td"):
            scheduled.extend(d for d in out if d.t_recv < sim.duration_us)
        return out

    sim.transmit = spy
    log = sim.run()
    to_vehicles = sum(1 for d in scheduled if not d.to_bs)
    to_bs = sum(1 for d in scheduled if d.to_bs)
    handled = len(log.of_type("packet_forwarded")) + len(log.of_type("packet_discarded"))
    assert handled == to_vehicles
    assert len(log.of_type("packet_delivered_bs")) == to_bs


def test_log_roundtrip_and_append_only():
    log = run(single_detector_scenario())
    again = EventLog.loads(log.dumps())
    assert list(again) == list(log)
    with pytest.raises(DataError):
        again.append("detection_start", 0, vehicle="v", event_id="EV")


def test_read_rejects_bad_lines():
    text = run(single_detector_scenario()).dumps().splitlines()
    with pytest.raises(LogSchemaError, match="truncated"):
        EventLog.read(text[:-1])
    broken = text[:3] + ['{"type":"packet_generated","t":5}'] + text[3:]
    with pytest.raises(LogSchemaError) as exc:
        EventLog.read(broken)
    assert exc.value.line == 4
    with pytest.raises(LogSchemaError, match="line 2"):
        EventLog.read([text[0], "not json", *text[1:]])
    with pytest.raises(LogSchemaError, match="empty"):
        EventLog.read([])


def test_run_end_closes_open_detections():
    sc = Scenario(static_trace({"v": (0.0, 0.0)}, t_end=3.0),
                  events=[CriticalEvent("EV", (0, 0), 0.0, 2.0, 10.0)], duration=2.0)
    log = run(sc)
    assert [r["reason"] for r in log.of_type("detection_end")] == ["run_end"]
    assert log[-1]["vehicles"] == ["v"]
