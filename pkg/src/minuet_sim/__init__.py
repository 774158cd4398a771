"""Event-monitoring simulation for vehicular networks.

A scenario (mobility trace, critical events, base stations, radio model and
clustering technique) is replayed by a deterministic discrete-event engine;
the resulting EventLog is the only input of the metrics module.
"""

from .engine import EventLog, Simulator, run, run_batch
from .metrics import MetricsReport, compute_report
from .scenario import Scenario, load_scenario, scenario_from_dict

__version__ = "0.1.0"

__all__ = [
    "EventLog", "MetricsReport", "Scenario", "Simulator", "__version__", "compute_report",
    "load_scenario", "run", "run_batch", "scenario_from_dict",
]
