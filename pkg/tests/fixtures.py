"""Hand-built scenarios shared by several test modules."""

from minuet_sim.mobility import _build
from minuet_sim.model import BaseStation, CriticalEvent, VehicleState
from minuet_sim.radio import RadioParams
from minuet_sim.scenario import Scenario


def static_trace(positions, t_end=2.0, step=1.0):
    """Parked vehicles: one sample per ``step`` over [0, t_end]."""
    rows, times = [], []
    k = 0
    while k * step <= t_end + 1e-9:
        t = round(k * step, 9)
        times.append(t)
        for vid, pos in positions.items():
            rows.append(VehicleState(vid, t, pos, 0.0, 90.0))
        k += 1
    return _build(rows, times, step)


# Walkthrough line: D and E sense the event, D and G reach a base station.
# With 40 ms per hop and a 100 ms delivery deadline, vehicles two hops away
# from a monitor are inside the announcement zone and three hops are not.
WALKTHROUGH = {
    "A": (-290.0, 0.0), "B": (-200.0, 0.0), "C": (-110.0, 0.0), "D": (-20.0, 0.0),
    "E": (20.0, 0.0), "F": (110.0, 0.0), "G": (200.0, 0.0), "H": (290.0, 0.0),
}


def walkthrough_scenario(technique="dca_onehop", duration=1.0) -> Scenario:
    return Scenario(
        static_trace(WALKTHROUGH, t_end=duration + 1.0),
        events=[CriticalEvent("EV", (0.0, 0.0), 0.0, duration, detection_radius=30.0, mdt=0.1)],
        base_stations=[BaseStation("BS1", (-20.0, -60.0), 70.0), BaseStation("BS2", (200.0, 60.0), 70.0)],
        radio=RadioParams(range=100.0, hop_delay_min=0.04, hop_delay_max=0.04),
        clustering_technique=technique,
        duration=duration,
        seed=0,
    )


def chain_scenario(n_relays=5, seed=0, duration=2.0, radio=None) -> Scenario:
    """Monitor at x=0, relays every 90 m, base station past the last relay."""
    pos = {f"v{i}": (90.0 * i, 0.0) for i in range(n_relays + 1)}
    bs_x = 90.0 * n_relays + 60.0
    return Scenario(
        static_trace(pos, t_end=duration + 1.0),
        events=[CriticalEvent("EV", (-10.0, 0.0), 0.0, duration, detection_radius=20.0, mdt=1.0)],
        base_stations=[BaseStation("BS", (bs_x, 0.0), 65.0)],
        radio=radio or RadioParams(),
        duration=duration,
        seed=seed,
    )


def single_detector_scenario(duration=1.0) -> Scenario:
    return Scenario(
        static_trace({"v": (0.0, 0.0)}, t_end=duration + 1.0),
        events=[CriticalEvent("EV", (10.0, 0.0), 0.0, duration, detection_radius=50.0)],
        base_stations=[BaseStation("BS", (0.0, 50.0), 100.0)],
        duration=duration,
        monitor_rate_hz=10.0,
    )
