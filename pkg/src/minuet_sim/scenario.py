"""Scenario configuration: JSON loading, validation, and trace resolution."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Optional, Union

import jsonschema

from .errors import ConfigError
from .mobility import SynthParams, Trace, parse_csv_trace, parse_fcd_trace, synth_trace
from .model import BaseStation, CriticalEvent
from .radio import RadioParams


@dataclass(frozen=True)
class TraceFile:
    path: str
    format: str = "csv"
    time_offset: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    params: SynthParams
    seed: Optional[int] = None


TraceSource = Union[Trace, TraceFile, SynthSpec]


@dataclass
class Scenario:
    trace_source: TraceSource
    events: List[CriticalEvent] = field(default_factory=list)
    base_stations: List[BaseStation] = field(default_factory=list)
    radio: RadioParams = field(default_factory=RadioParams)
    clustering_technique: str = "dca_onehop"
    monitor_rate_hz: float = 10.0
    beacon_interval: float = 1.0
    duration: float = 60.0
    seed: int = 0
    tick: float = 0.1
    name: str = "scenario"

    def validate(self):
        from .clustering import TECHNIQUES

        if not self.duration > 0:
            raise ConfigError("duration", "must be > 0")
        if not self.monitor_rate_hz > 0:
            raise ConfigError("monitor_rate_hz", "must be > 0")
        if not self.beacon_interval > 0:
            raise ConfigError("beacon_interval", "must be > 0")
        if not self.tick > 0:
            raise ConfigError("tick", "must be > 0")
        if self.clustering_technique not in TECHNIQUES:
            raise ConfigError("clustering_technique",
                              f"unknown technique {self.clustering_technique!r}; known: {sorted(TECHNIQUES)}")
        ids = set()
        for i, ev in enumerate(self.events):
            if ev.event_id in ids:
                raise ConfigError(f"events[{i}].event_id", f"duplicate id {ev.event_id!r}")
            ids.add(ev.event_id)
            if ev.t_spawn < 0 or ev.t_spawn + ev.lifetime > self.duration + 1e-9:
                raise ConfigError(f"events[{i}]", "spawn window must lie within [0, duration)")
        bs_ids = set()
        for i, bs in enumerate(self.base_stations):
            if bs.bs_id in bs_ids:
                raise ConfigError(f"base_stations[{i}].bs_id", f"duplicate id {bs.bs_id!r}")
            bs_ids.add(bs.bs_id)

    def load_trace(self) -> Trace:
        src = self.trace_source
        if isinstance(src, Trace):
            return src
        if isinstance(src, SynthSpec):
            seed = self.seed if src.seed is None else src.seed
            return synth_trace(src.params, seed)
        if isinstance(src, TraceFile):
            if not os.path.exists(src.path):
                raise ConfigError("trace.path", f"trace file not found: {src.path}")
            parse = parse_fcd_trace if src.format == "fcd" else parse_csv_trace
            trace = parse(src.path)
            return trace.shifted(src.time_offset) if src.time_offset else trace
        raise ConfigError("trace", f"unsupported trace source {type(src).__name__}")


def schema() -> dict:
    text = resources.files("minuet_sim").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def _path_of(err: jsonschema.ValidationError) -> str:
    out = ""
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def scenario_from_dict(doc: dict, base_dir: str = ".") -> Scenario:
    """Build a validated Scenario; raises ConfigError naming the bad field."""
    validator = jsonschema.Draft7Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(_path_of(e), e.message)

    tdoc = doc["trace"]
    if "synthetic" in tdoc:
        s = tdoc["synthetic"]
        params = SynthParams(
            n_vehicles=s["n_vehicles"],
            lanes=s.get("lanes", "one-way"),
            length_m=s.get("length_m", 1000.0),
            speed_range=tuple(s.get("speed_range", (8.0, 14.0))),
            duration=s.get("duration", doc["duration"]),
            step=s.get("step", 1.0),
        )
        try:
            params.validate()
        except ValueError as exc:
            raise ConfigError("trace.synthetic", str(exc)) from None
        source: TraceSource = SynthSpec(params, s.get("seed"))
    else:
        path = tdoc["path"]
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        source = TraceFile(path, tdoc.get("format", "csv"), tdoc.get("time_offset", 0.0))

    def build(i, kind, fn):
        try:
            return fn()
        except ValueError as exc:
            raise ConfigError(f"{kind}[{i}]", str(exc)) from None

    events = [
        build(i, "events", lambda e=e: CriticalEvent(
            e["event_id"], (e["x"], e["y"]), e["t_spawn"], e["lifetime"],
            e.get("detection_radius", 100.0), e.get("mdt", 0.2)))
        for i, e in enumerate(doc.get("events", []))
    ]
    stations = [
        build(i, "base_stations", lambda b=b: BaseStation(b["bs_id"], (b["x"], b["y"]), b.get("range", 100.0)))
        for i, b in enumerate(doc.get("base_stations", []))
    ]
    try:
        radio = RadioParams(**doc.get("radio", {}))
    except ValueError as exc:
        raise ConfigError("radio", str(exc)) from None
    sc = Scenario(
        trace_source=source,
        events=events,
        base_stations=stations,
        radio=radio,
        clustering_technique=doc.get("clustering_technique", "dca_onehop"),
        monitor_rate_hz=doc.get("monitor_rate_hz", 10.0),
        beacon_interval=doc.get("beacon_interval", 1.0),
        duration=doc["duration"],
        seed=doc.get("seed", 0),
        tick=doc.get("tick", 0.1),
        name=doc.get("name", "scenario"),
    )
    sc.validate()
    return sc


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(doc, os.path.dirname(os.path.abspath(path)))
