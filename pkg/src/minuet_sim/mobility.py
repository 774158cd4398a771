"""Mobility traces: FCD/CSV ingestion, synthetic lanes, and position replay.

A trace is replayed, never extrapolated. Each vehicle's samples are split
into presence intervals wherever two consecutive samples are further apart
than one native trace step (the vehicle left the clipped region and came
back); positions are interpolated linearly inside an interval only.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import os
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import IO, Dict, Iterable, List, Optional, Tuple, Union

from .errors import TraceError, TraceSchemaError
from .model import VehicleState

CSV_HEADER = ("t", "vehicle_id", "x", "y", "speed", "heading")
FCD_VEHICLE_ATTRS = ("id", "x", "y", "speed", "angle")

# relative slack when deciding whether a gap exceeds one trace step
_GAP_SLACK = 1e-9

Source = Union[str, os.PathLike, bytes, IO]


@dataclass(frozen=True)
class Trace:
    """Immutable, per-vehicle time-ordered samples.

    ``step`` is the native sampling period, inferred from the distinct
    sample times when not given. ``None`` means a single time instant.
    """

    samples: Dict[str, Tuple[VehicleState, ...]]
    step: Optional[float] = None
    _intervals: Dict[str, List[Tuple[int, int]]] = field(
        default=None, init=False, repr=False, compare=False
    )
    _times: Dict[str, List[float]] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        intervals, times = {}, {}
        for vid, states in self.samples.items():
            if not states:
                raise TraceError(f"vehicle {vid} has no samples")
            ts = [s.t for s in states]
            for a, b in zip(ts, ts[1:]):
                if not b > a:
                    raise TraceError(f"vehicle {vid}: sample times must strictly increase ({a}, {b})")
            times[vid] = ts
            intervals[vid] = _split_presence(ts, self.step)
        object.__setattr__(self, "_intervals", intervals)
        object.__setattr__(self, "_times", times)

    @property
    def vehicle_ids(self) -> List[str]:
        return sorted(self.samples)

    @property
    def t_min(self) -> Optional[float]:
        if not self.samples:
            return None
        return min(s[0].t for s in self.samples.values())

    @property
    def t_max(self) -> Optional[float]:
        if not self.samples:
            return None
        return max(s[-1].t for s in self.samples.values())

    def __len__(self) -> int:
        return sum(len(s) for s in self.samples.values())

    def presence_intervals(self, vehicle_id: str) -> List[Tuple[float, float]]:
        ts = self._times.get(vehicle_id)
        if ts is None:
            return []
        return [(ts[i], ts[j]) for i, j in self._intervals[vehicle_id]]

    def shifted(self, offset: float) -> "Trace":
        """Copy of the trace with ``offset`` subtracted from every time."""
        samples = {
            vid: tuple(
                VehicleState(s.vehicle_id, s.t - offset, s.pos, s.speed, s.heading) for s in states
            )
            for vid, states in self.samples.items()
        }
        return Trace(samples, self.step)


def _split_presence(ts: List[float], step: Optional[float]) -> List[Tuple[int, int]]:
    """Index ranges ``(first, last)`` of each presence interval."""
    out = []
    start = 0
    for i in range(1, len(ts)):
        if step is None or ts[i] - ts[i - 1] > step * (1 + _GAP_SLACK):
            out.append((start, i - 1))
            start = i
    out.append((start, len(ts) - 1))
    return out


def _infer_step(times: Iterable[float]) -> Optional[float]:
    distinct = sorted(set(times))
    if len(distinct) < 2:
        return None
    return min(b - a for a, b in zip(distinct, distinct[1:]))


def _build(rows: Iterable[VehicleState], all_times: Iterable[float], step=None) -> Trace:
    by_vehicle: Dict[str, List[VehicleState]] = {}
    for s in rows:
        by_vehicle.setdefault(s.vehicle_id, []).append(s)
    samples = {}
    for vid in sorted(by_vehicle):
        states = sorted(by_vehicle[vid], key=lambda s: s.t)
        samples[vid] = tuple(states)
    if step is None:
        step = _infer_step(all_times)
    return Trace(samples, step)


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    data = source.read()
    return data.encode("utf-8") if isinstance(data, str) else data


def parse_fcd_trace(source: Source) -> Trace:
    """Parse a SUMO floating-car-data export.

    Expects ``<timestep time=...>`` elements holding ``<vehicle id x y speed
    angle .../>`` children. The SUMO ``angle`` (degrees, 0 = north,
    clockwise) is stored unchanged as the heading.
    """
    data = _read_bytes(source)
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line = exc.position[0] if getattr(exc, "position", None) else None
        raise TraceError(f"malformed XML: {exc}", line) from exc

    # ElementTree drops line numbers; recover them for schema errors
    lines = _element_lines(data)
    rows, times = [], []
    seen = set()
    steps = root.iter("timestep")
    n_steps = 0
    for ts_el in steps:
        n_steps += 1
        raw_t = ts_el.get("time")
        if raw_t is None:
            raise TraceSchemaError("time", lines.get(("timestep", n_steps - 1)))
        t = _to_float(raw_t, "time", lines.get(("timestep", n_steps - 1)))
        times.append(t)
        for veh in ts_el.iter("vehicle"):
            line = lines.get(("vehicle", len(rows)))
            for attr in FCD_VEHICLE_ATTRS:
                if veh.get(attr) is None:
                    raise TraceSchemaError(attr, line)
            vid = veh.get("id")
            if (t, vid) in seen:
                raise TraceError(f"duplicate sample for vehicle {vid} at t={t}", line)
            seen.add((t, vid))
            rows.append(
                VehicleState(
                    vid,
                    t,
                    (_to_float(veh.get("x"), "x", line), _to_float(veh.get("y"), "y", line)),
                    _to_float(veh.get("speed"), "speed", line),
                    _to_float(veh.get("angle"), "angle", line),
                )
            )
    if n_steps == 0:
        raise TraceError("empty trace")
    return _build(rows, times)


def _element_lines(data: bytes) -> Dict[Tuple[str, int], int]:
    """Map (tag, ordinal) -> source line for timestep and vehicle elements."""
    out: Dict[Tuple[str, int], int] = {}
    counts = {"timestep": 0, "vehicle": 0}
    parser = ET.XMLPullParser(events=("start",))
    # feed line by line so the parser's position tracks the current line
    for lineno, raw in enumerate(data.splitlines(keepends=True), start=1):
        parser.feed(raw)
        for _, el in parser.read_events():
            if el.tag in counts:
                out[(el.tag, counts[el.tag])] = lineno
                counts[el.tag] += 1
    return out


def _to_float(raw: str, name: str, line) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise TraceError(f"non-numeric value {raw!r} for '{name}'", line) from None


def parse_csv_trace(source: Source) -> Trace:
    """Parse the ``t,vehicle_id,x,y,speed,heading`` interchange format."""
    text = _read_bytes(source).decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TraceError("empty trace", 1) from None
    header = [h.strip() for h in header]
    for col in CSV_HEADER:
        if col not in header:
            raise TraceSchemaError(col, 1)
    idx = {c: header.index(c) for c in CSV_HEADER}
    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise TraceError(f"expected {len(header)} fields, got {len(rec)}", lineno)
        vid = rec[idx["vehicle_id"]].strip()
        vals = {}
        for col in ("t", "x", "y", "speed", "heading"):
            vals[col] = _to_float(rec[idx[col]].strip(), col, lineno)
        key = (vals["t"], vid)
        if key in seen:
            raise TraceError(f"duplicate sample for vehicle {vid} at t={vals['t']}", lineno)
        seen.add(key)
        rows.append(VehicleState(vid, vals["t"], (vals["x"], vals["y"]), vals["speed"], vals["heading"]))
    return _build(rows, [r.t for r in rows])


def write_csv_trace(trace: Trace, dest: Optional[IO[str]] = None) -> str:
    """Serialize ``trace`` to CSV, rows ordered by (t, vehicle_id).

    Floats are written with ``repr`` so that re-parsing is lossless.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    rows = [s for states in trace.samples.values() for s in states]
    rows.sort(key=lambda s: (s.t, s.vehicle_id))
    for s in rows:
        w.writerow([repr(s.t), s.vehicle_id, repr(s.pos[0]), repr(s.pos[1]), repr(s.speed), repr(s.heading)])
    text = buf.getvalue()
    if dest is not None:
        dest.write(text)
    return text


def position_at(trace: Trace, vehicle_id: str, t: float) -> Optional[VehicleState]:
    """Interpolated state of ``vehicle_id`` at ``t``, or None when absent."""
    ts = trace._times.get(vehicle_id)
    if ts is None:
        return None
    states = trace.samples[vehicle_id]
    i = bisect.bisect_right(ts, t) - 1
    if i < 0:
        return None
    if ts[i] == t:
        s = states[i]
        return s
    if i + 1 >= len(ts):
        return None
    # both bracketing samples must belong to the same presence interval
    for first, last in trace._intervals[vehicle_id]:
        if first <= i < last:
            break
    else:
        return None
    a, b = states[i], states[i + 1]
    w = (t - a.t) / (b.t - a.t)
    pos = (a.pos[0] + w * (b.pos[0] - a.pos[0]), a.pos[1] + w * (b.pos[1] - a.pos[1]))
    return VehicleState(vehicle_id, t, pos, a.speed + w * (b.speed - a.speed), a.heading)


@dataclass(frozen=True)
class SynthParams:
    """Straight-road synthetic traffic.

    Vehicles drive along the x axis over ``[0, length_m)``. Leaving the road
    at one end, a vehicle is replaced by a fresh one entering at the other
    end (new id, ``<base>.<lap>``), so the density stays at
    ``n_vehicles / length_m`` for the whole run.
    """

    n_vehicles: int
    lanes: str = "one-way"
    length_m: float = 1000.0
    speed_range: Tuple[float, float] = (8.0, 14.0)
    duration: float = 60.0
    step: float = 1.0
    lane_gap: float = 4.0

    def validate(self):
        if self.n_vehicles < 0:
            raise ValueError("n_vehicles must be >= 0")
        if self.lanes not in ("one-way", "two-way"):
            raise ValueError("lanes must be 'one-way' or 'two-way'")
        if not self.length_m > 0:
            raise ValueError("length_m must be > 0")
        lo, hi = self.speed_range
        if lo > hi:
            raise ValueError("empty speed_range")
        if lo < 0:
            raise ValueError("speeds must be >= 0")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")


def synth_trace(params: SynthParams, seed: int) -> Trace:
    """Generate a deterministic straight-lane trace.

    Draw order per vehicle ``i`` (0-based): initial offset along the road,
    then speed, both uniform. Even-indexed vehicles drive towards +x
    (heading 90); in two-way mode odd-indexed vehicles drive towards -x on
    the opposite lane (heading 270). One-way traffic alternates between two
    parallel lanes with the same heading.
    """
    params.validate()
    rng = random.Random(seed)
    L = params.length_m
    n_samples = int(math.floor(params.duration / params.step + 1e-9)) + 1
    times = [round(k * params.step, 9) for k in range(n_samples)]
    rows: List[VehicleState] = []
    for i in range(params.n_vehicles):
        x0 = rng.uniform(0.0, L)
        v = rng.uniform(*params.speed_range)
        backwards = params.lanes == "two-way" and i % 2 == 1
        lane = i % 2
        y = lane * params.lane_gap
        heading = 270.0 if backwards else 90.0
        base = f"v{i:03d}"
        for t in times:
            travelled = x0 + v * t
            lap = int(travelled // L)
            x = travelled - lap * L
            if backwards:
                x = L - x
            rows.append(VehicleState(f"{base}.{lap}", t, (x, y), v, heading))
    # step is inferred from the (rounded) sample grid, exactly as a CSV
    # re-parse would, so serialization round trips compare equal
    return _build(rows, times)
