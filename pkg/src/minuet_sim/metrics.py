"""Evaluation metrics computed from an EventLog.

Every function here is a pure function of the log records. Times in the log
are integer microseconds; series are bucketed into windows of ``dt``
seconds covering ``[0, duration)``, and reported delays are in seconds.

Transmission accounting (``nmo``) counts one transmission per originated
packet and one per forward: monitoring (MP), announcement (AP) and
clustering control (CP, which includes hello beacons).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

from .radio import to_us

SERIES_COLUMNS = ("window", "t_start", "t_end", "dv", "mp_gen", "mp_deliv",
                  "mp_transm", "ap_transm", "cp_transm", "nmo")

_KIND_KEY = {"monitoring": "mp_transm", "announcement": "ap_transm", "cluster": "cp_transm"}


def _records(log) -> List[dict]:
    return log if isinstance(log, list) else list(log)


def _duration_us(recs: List[dict], duration: Optional[float]) -> int:
    if duration is not None:
        return to_us(duration)
    for r in recs:
        if r["type"] == "run_start":
            return r["duration"]
    raise ValueError("log has no run_start record; pass duration explicitly")


def _windowing(recs, dt: float, duration: Optional[float]):
    if not dt > 0:
        raise ValueError("dt must be > 0")
    dur = _duration_us(recs, duration)
    width = to_us(dt)
    n = max(1, math.ceil(dur / width))
    return dur, width, n


def _slot(t: int, width: int, n: int) -> int:
    return min(max(t // width, 0), n - 1)


def dv(log, dt: float = 1.0, duration: Optional[float] = None) -> List[int]:
    """Distinct vehicles with a detection interval overlapping each window."""
    recs = _records(log)
    dur, width, n = _windowing(recs, dt, duration)
    open_at: Dict[tuple, int] = {}
    sets = [set() for _ in range(n)]

    def mark(vid, t0, t1):
        # interval [t0, t1) touches windows first..last
        first = _slot(t0, width, n)
        last = _slot(max(t0, t1 - 1), width, n)
        for w in range(first, last + 1):
            sets[w].add(vid)

    for r in recs:
        if r["type"] == "detection_start":
            open_at[(r["vehicle"], r["event_id"])] = r["t"]
        elif r["type"] == "detection_end":
            t0 = open_at.pop((r["vehicle"], r["event_id"]), None)
            if t0 is not None:
                mark(r["vehicle"], t0, r["t"])
    for (vid, _), t0 in open_at.items():
        mark(vid, t0, dur)
    return [len(s) for s in sets]


def mp_gen(log, dt: float = 1.0, duration: Optional[float] = None) -> List[int]:
    recs = _records(log)
    _, width, n = _windowing(recs, dt, duration)
    out = [0] * n
    for r in recs:
        if r["type"] == "packet_generated" and r["kind"] == "monitoring":
            out[_slot(r["t"], width, n)] += 1
    return out


def _bs_deliveries(recs) -> Dict[str, List[dict]]:
    by_msg: Dict[str, List[dict]] = {}
    for r in recs:
        if r["type"] == "packet_delivered_bs":
            by_msg.setdefault(r["msg_id"], []).append(r)
    return by_msg


def mp_deliv(log, dt: float = 1.0, duration: Optional[float] = None) -> List[int]:
    """Distinct monitoring packets per window, counted at their first BS delivery."""
    recs = _records(log)
    _, width, n = _windowing(recs, dt, duration)
    out = [0] * n
    for copies in _bs_deliveries(recs).values():
        out[_slot(copies[0]["t"], width, n)] += 1
    return out


def mp_ddeliv(log) -> int:
    """Distinct packets that reached a base station more than once."""
    return sum(1 for c in _bs_deliveries(_records(log)).values() if len(c) > 1)


def mp_ddeliv_copies(log) -> int:
    """Extra copies beyond the first, summed over all packets."""
    return sum(len(c) - 1 for c in _bs_deliveries(_records(log)).values())


def nmo_components(log, dt: float = 1.0, duration: Optional[float] = None) -> Dict[str, List[int]]:
    recs = _records(log)
    _, width, n = _windowing(recs, dt, duration)
    out = {k: [0] * n for k in ("mp_transm", "ap_transm", "cp_transm")}
    for r in recs:
        if r["type"] in ("packet_generated", "packet_forwarded"):
            out[_KIND_KEY[r["kind"]]][_slot(r["t"], width, n)] += 1
    return out


def nmo(log, dt: float = 1.0, duration: Optional[float] = None) -> List[int]:
    c = nmo_components(log, dt, duration)
    return [a + b + d for a, b, d in zip(c["mp_transm"], c["ap_transm"], c["cp_transm"])]


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def txd(log) -> float:
    recs = _records(log)
    gen = sum(1 for r in recs if r["type"] == "packet_generated" and r["kind"] == "monitoring")
    return _pct(len(_bs_deliveries(recs)), gen)


def txr(log) -> float:
    recs = _records(log)
    by_msg = _bs_deliveries(recs)
    return _pct(sum(1 for c in by_msg.values() if len(c) > 1), len(by_msg))


def add(log) -> Dict[int, float]:
    """Mean delivery delay (s) of every delivered copy, keyed by hop count."""
    sums: Dict[int, int] = {}
    counts: Dict[int, int] = {}
    for r in _records(log):
        if r["type"] == "packet_delivered_bs":
            h = r["hop_count"]
            sums[h] = sums.get(h, 0) + (r["t"] - r["t_gen"])
            counts[h] = counts.get(h, 0) + 1
    return {h: sums[h] / counts[h] / 1e6 for h in sorted(sums)}


def nc(log) -> int:
    return sum(1 for r in _records(log) if r["type"] == "cluster_created")


def _ever_present(recs) -> Optional[set]:
    for r in reversed(recs):
        if r["type"] == "run_end":
            return set(r["vehicles"])
    return None


def txcv(log, vehicles_present: Optional[Iterable[str]] = None) -> float:
    """Share of present vehicles that were ever a cluster member, in percent."""
    recs = _records(log)
    present = set(vehicles_present) if vehicles_present is not None else _ever_present(recs)
    members = {r["vehicle"] for r in recs
               if r["type"] == "membership_change" and r["change"] == "join"}
    if present is None:
        raise ValueError("log has no run_end record; pass vehicles_present explicitly")
    return _pct(len(members & present), len(present))


def transmission_totals(log) -> Dict[str, int]:
    tot = {"mp_total": 0, "ap_total": 0, "cp_total": 0}
    key = {"monitoring": "mp_total", "announcement": "ap_total", "cluster": "cp_total"}
    for r in _records(log):
        if r["type"] in ("packet_generated", "packet_forwarded"):
            tot[key[r["kind"]]] += 1
    return tot


def co(log) -> float:
    t = transmission_totals(log)
    return _pct(t["cp_total"], t["mp_total"] + t["ap_total"] + t["cp_total"])


@dataclass
class MetricsReport:
    dt: float
    duration: float
    dv: List[int]
    mp_gen: List[int]
    mp_deliv: List[int]
    nmo_components: Dict[str, List[int]]
    txd: float
    txr: float
    add: Dict[int, float]
    nc: int
    txcv: float
    co: float
    totals: Dict[str, int] = field(default_factory=dict)

    @property
    def nmo(self) -> List[int]:
        c = self.nmo_components
        return [a + b + d for a, b, d in zip(c["mp_transm"], c["ap_transm"], c["cp_transm"])]

    @property
    def n_windows(self) -> int:
        return len(self.dv)

    def summary(self) -> dict:
        return {
            "dt": self.dt,
            "duration": self.duration,
            "n_windows": self.n_windows,
            "totals": dict(self.totals),
            "txd": self.txd,
            "txr": self.txr,
            "nc": self.nc,
            "txcv": self.txcv,
            "co": self.co,
            "add": {str(h): v for h, v in self.add.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=False) + "\n"

    def series_rows(self) -> List[list]:
        c = self.nmo_components
        width = to_us(self.dt)
        end = to_us(self.duration)
        rows = []
        for w in range(self.n_windows):
            rows.append([w, w * width / 1e6, min((w + 1) * width, end) / 1e6, self.dv[w],
                         self.mp_gen[w], self.mp_deliv[w], c["mp_transm"][w], c["ap_transm"][w],
                         c["cp_transm"][w], self.nmo[w]])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        w.writerows(self.series_rows())
        return buf.getvalue()


def compute_report(log, dt: float = 1.0) -> MetricsReport:
    recs = _records(log)
    dur_us = _duration_us(recs, None)
    gen = mp_gen(recs, dt)
    deliv = mp_deliv(recs, dt)
    tot = transmission_totals(recs)
    tot.update(mp_gen=sum(gen), mp_deliv=sum(deliv), mp_ddeliv=mp_ddeliv(recs),
               mp_ddeliv_copies=mp_ddeliv_copies(recs))
    return MetricsReport(
        dt=dt, duration=dur_us / 1e6, dv=dv(recs, dt), mp_gen=gen, mp_deliv=deliv,
        nmo_components=nmo_components(recs, dt), txd=txd(recs), txr=txr(recs), add=add(recs),
        nc=nc(recs), txcv=txcv(recs), co=co(recs), totals=tot,
    )
