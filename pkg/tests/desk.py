"""Desk-scale analogues of the four evaluation scenarios (1W/2W x low/high density)."""

from minuet_sim.mobility import SynthParams
from minuet_sim.model import BaseStation, CriticalEvent
from minuet_sim.scenario import Scenario, SynthSpec

# vehicles per 1000 m of road
DENSITIES = {
    "1WLD": ("one-way", 17),
    "1WHD": ("one-way", 46),
    "2WLD": ("two-way", 16),
    "2WHD": ("two-way", 32),
}


def desk_scenario(label: str, seed: int, technique: str = "dca_onehop", duration: float = 30.0,
                  **overrides) -> Scenario:
    lanes, n = DENSITIES[label]
    params = SynthParams(n, lanes=lanes, length_m=1000.0, speed_range=(8.0, 14.0),
                         duration=duration, step=1.0)
    kw = dict(
        events=[CriticalEvent("ev1", (500.0, 2.0), 2.0, duration - 6.0, 100.0, 0.2)],
        base_stations=[BaseStation("bs1", (680.0, 30.0), 100.0)],
        clustering_technique=technique,
        duration=duration,
        seed=seed,
        name=f"{label}-s{seed}",
    )
    kw.update(overrides)
    return Scenario(SynthSpec(params), **kw)
