"""Internet Threat Monitors and the data center.

Monitors count traffic addressed to their watched range in fixed-width
time buckets and keep a sliding window of every packet record seen at
their attachment node. The data center collects logs, runs centralized
detection or accepts distributed "attacked" notifications, blocks
attacked monitors, and answers status queries with private users first.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional

from .engine import ControlMessage, Engine, Event
from .errors import AlreadyBlocked, RejectedBlocked, RejectedUnregistered, UnknownMonitor
from .net import FloodType, Link, Network, Packet, Subnet

log = logging.getLogger(__name__)


class Status(str, Enum):
    ACTIVE = "active"
    ATTACKED = "attacked"
    BLOCKED = "blocked"


class Mode(str, Enum):
    CENTRALIZED = "centralized"
    DISTRIBUTED = "distributed"


class Requester(str, Enum):
    PRIVATE = "private"
    PUBLIC = "public"


@dataclass(frozen=True)
class PacketRecord:
    seen_at: int
    src: int
    dst: int
    flood_type: FloodType
    size: int
    direction: str  # "incoming" | "outgoing"
    link: Optional[int]


@dataclass
class Bucket:
    start: int
    count: int = 0
    bytes: int = 0
    by_type: Counter = field(default_factory=Counter)

    def add(self, flood_type: FloodType, size: int) -> None:
        self.count += 1
        self.bytes += size
        self.by_type[flood_type.value] += 1

    def copy(self) -> "Bucket":
        return Bucket(self.start, self.count, self.bytes, Counter(self.by_type))

    def as_dict(self) -> dict:
        return {"start": self.start, "count": self.count, "bytes": self.bytes,
                "by_type": dict(sorted(self.by_type.items()))}


def first_exceeding(counts: Mapping[int, int], threshold: int) -> Optional[int]:
    """Earliest bucket whose count is strictly greater than ``threshold``."""
    for start in sorted(counts):
        if counts[start] > threshold:
            return start
    return None


@dataclass(frozen=True)
class Alarm:
    bucket: int
    aggregate: int
    attacked: tuple[str, ...]


def detect_centralized(logs: Mapping[str, Mapping[int, int]], global_threshold: int,
                       thresholds: Mapping[str, int]) -> list[Alarm]:
    """Alarm on every bucket whose aggregate count exceeds ``global_threshold``.

    Each alarm names the monitors whose own count in that bucket exceeds
    their individual threshold.
    """
    starts = sorted({b for series in logs.values() for b in series})
    alarms = []
    for start in starts:
        aggregate = sum(series.get(start, 0) for series in logs.values())
        if aggregate > global_threshold:
            attacked = tuple(sorted(
                m for m, series in logs.items() if series.get(start, 0) > thresholds[m]
            ))
            alarms.append(Alarm(start, aggregate, attacked))
    return alarms


class Monitor:
    def __init__(self, monitor_id: str, attachment: str, watched_range: Subnet, threshold: int,
                 bucket_width: int = 10, window: int = 100, report_period: int = 50,
                 mode: Mode = Mode.DISTRIBUTED):
        if bucket_width < 1 or window < 0 or report_period < 1:
            raise ValueError("bucket_width and report_period must be >= 1, window >= 0")
        self.monitor_id = monitor_id
        self.attachment = attachment
        self.watched_range = watched_range
        self.threshold = threshold
        self.bucket_width = bucket_width
        self.window_ticks = window
        self.report_period = report_period
        self.mode = Mode(mode)
        self.status = Status.ACTIVE
        self.buckets: dict[int, Bucket] = {}
        self.window: deque[PacketRecord] = deque()
        self.attacked_at: Optional[int] = None
        self.blocked_at: Optional[int] = None
        self.on_attacked: Optional[Callable[["Monitor"], None]] = None
        self.submitted_through = 0
        self.submissions = 0
        self.observed = 0

    def bucket_start(self, t: int) -> int:
        return (t // self.bucket_width) * self.bucket_width

    def counts(self) -> dict[int, int]:
        return {s: b.count for s, b in sorted(self.buckets.items())}

    def _evict(self, now: int) -> None:
        cutoff = now - self.window_ticks
        win = self.window
        while win and win[0].seen_at < cutoff:
            win.popleft()

    def record_traffic(self, packet: Packet, direction: str, link: Optional[Link], now: int) -> bool:
        """Observe one packet at the attachment node. Returns True if counted in a bucket."""
        if self.status == Status.BLOCKED:
            return False
        self._evict(now)
        if link is not None:
            self.window.append(PacketRecord(now, packet.src, packet.dst, packet.flood_type,
                                            packet.size, direction, link.id))
            self.observed += 1
        if direction != "incoming" or packet.dst not in self.watched_range:
            return False
        start = self.bucket_start(now)
        bucket = self.buckets.get(start)
        if bucket is None:
            bucket = self.buckets[start] = Bucket(start)
        bucket.add(packet.flood_type, packet.size)
        # earlier buckets were already checked when they were filled
        if self.mode == Mode.DISTRIBUTED and self.status == Status.ACTIVE and bucket.count > self.threshold:
            self._mark_attacked(now)
        return True

    def detect_distributed(self, now: int) -> bool:
        """Flip Active -> Attacked on the first bucket strictly above threshold."""
        if self.status != Status.ACTIVE:
            return False
        if first_exceeding(self.counts(), self.threshold) is None:
            return False
        self._mark_attacked(now)
        return True

    def _mark_attacked(self, now: int) -> None:
        self.status = Status.ATTACKED
        self.attacked_at = now
        if self.on_attacked is not None:
            self.on_attacked(self)

    def window_records(self, now: int) -> list[PacketRecord]:
        self._evict(now)
        return list(self.window)

    def completed_buckets(self, now: int) -> list[Bucket]:
        """Buckets that closed since the last submission."""
        out = []
        for start in sorted(self.buckets):
            if start >= self.submitted_through and start + self.bucket_width <= now:
                out.append(self.buckets[start].copy())
        self.submitted_through = self.bucket_start(now)
        return out

    def attach(self, network: Network) -> None:
        network.add_observer(self.attachment, self.record_traffic)


@dataclass
class Query:
    query_id: int
    requester: Requester
    monitor_id: str
    time_range: tuple[int, int]
    enqueued_at: int = 0


@dataclass
class Report:
    monitor_id: str
    status: Status
    buckets: list[dict]
    at: int

    def as_dict(self) -> dict:
        return {"monitor_id": self.monitor_id, "status": self.status.value,
                "buckets": self.buckets, "at": self.at}


@dataclass
class ServiceRecord:
    query: Query
    served_at: int
    report: Optional[Report]
    error: Optional[str] = None


class DataCenter:
    def __init__(self, engine: Engine, network: Network, node: str, mode: Mode = Mode.DISTRIBUTED,
                 global_threshold: int = 0, blocking: bool = True, honeypot: Optional[str] = None,
                 query_service_time: int = 1):
        self.engine = engine
        self.network = network
        self.node = node
        self.mode = Mode(mode)
        self.global_threshold = global_threshold
        self.blocking = blocking
        self.honeypot = honeypot
        self.monitors: dict[str, Monitor] = {}
        self.registered: set[str] = set()
        self.collected_logs: dict[str, dict[int, Bucket]] = {}
        self.reported_attacked: dict[str, int] = {}
        self.block_list: dict[str, int] = {}
        self.alarms: list[dict] = []
        self._alarmed_buckets: set[int] = set()
        self.published_reports: list[dict] = []
        self.submissions: list[dict] = []
        self.block_listeners: list[str] = []
        self.lanes: dict[Requester, deque[Query]] = {Requester.PRIVATE: deque(), Requester.PUBLIC: deque()}
        self.service_log: list[ServiceRecord] = []
        self.query_service_time = query_service_time
        self._serving = False
        self._next_query = 0
        engine.on("log_submit", self._on_logs)
        engine.on("itm_attacked", self._on_attacked)

    # -- registration / logs -------------------------------------------
    def register(self, monitor: Monitor, registered: bool = True) -> None:
        self.monitors[monitor.monitor_id] = monitor
        if registered:
            self.registered.add(monitor.monitor_id)
        self.collected_logs.setdefault(monitor.monitor_id, {})
        if monitor.mode == Mode.DISTRIBUTED:
            monitor.on_attacked = self._notify_attacked
        self._schedule_submission(monitor)

    def _schedule_submission(self, monitor: Monitor) -> None:
        def submit():
            buckets = monitor.completed_buckets(self.engine.now)
            monitor.submissions += 1
            lat = self.network.latency(monitor.attachment, self.node)
            if lat is not None:
                self.engine.schedule(lat, self.node, ControlMessage(
                    "log_submit", (monitor.monitor_id, self.engine.now, buckets), monitor.attachment))
            self.engine.call_later(monitor.report_period, submit, "submit", monitor.attachment)

        self.engine.call_later(monitor.report_period, submit, "submit", monitor.attachment)

    def submit_logs(self, monitor_id: str, sent_at: int, buckets: Iterable[Bucket]) -> int:
        if monitor_id not in self.registered:
            raise RejectedUnregistered(monitor_id)
        if monitor_id in self.block_list:
            raise RejectedBlocked(monitor_id)
        series = self.collected_logs[monitor_id]
        touched = []
        for b in buckets:
            series[b.start] = b
            touched.append(b.start)
        return len(touched)

    def _on_logs(self, ev: Event) -> None:
        monitor_id, sent_at, buckets = ev.payload.body
        entry = {"monitor": monitor_id, "sent_at": sent_at, "received_at": self.engine.now,
                 "buckets": len(buckets), "accepted": True, "reason": None}
        try:
            self.submit_logs(monitor_id, sent_at, buckets)
        except (RejectedBlocked, RejectedUnregistered) as exc:
            entry["accepted"] = False
            entry["reason"] = type(exc).__name__
            self.submissions.append(entry)
            return
        self.submissions.append(entry)
        self.published_reports.append(self.report(monitor_id).as_dict())
        if self.mode == Mode.CENTRALIZED:
            self.run_centralized_detection()

    # -- detection ------------------------------------------------------
    def count_logs(self) -> dict[str, dict[int, int]]:
        return {m: {s: b.count for s, b in series.items()}
                for m, series in sorted(self.collected_logs.items()) if m in self.registered}

    def detect_centralized(self) -> list[Alarm]:
        thresholds = {m: self.monitors[m].threshold for m in self.monitors}
        return detect_centralized(self.count_logs(), self.global_threshold, thresholds)

    def run_centralized_detection(self) -> None:
        for alarm in self.detect_centralized():
            if alarm.bucket in self._alarmed_buckets:
                continue
            self._alarmed_buckets.add(alarm.bucket)
            self.alarms.append({"time": self.engine.now, "bucket": alarm.bucket,
                                "aggregate": alarm.aggregate, "monitors": list(alarm.attacked)})
            for mid in alarm.attacked:
                mon = self.monitors[mid]
                if mon.status == Status.ACTIVE:
                    mon.status = Status.ATTACKED
                    mon.attacked_at = self.engine.now
                self._confirm_attacked(mid)

    def _notify_attacked(self, monitor: Monitor) -> None:
        lat = self.network.latency(monitor.attachment, self.node)
        if lat is None:
            log.warning("monitor %s cannot reach the data center", monitor.monitor_id)
            return
        self.engine.schedule(lat, self.node, ControlMessage(
            "itm_attacked", (monitor.monitor_id, self.engine.now), monitor.attachment))

    def _on_attacked(self, ev: Event) -> None:
        monitor_id, detected_at = ev.payload.body
        if monitor_id not in self.registered:
            return
        mon = self.monitors[monitor_id]
        bucket = first_exceeding(mon.counts(), mon.threshold)
        self.alarms.append({"time": self.engine.now, "bucket": bucket, "aggregate": None,
                            "monitors": [monitor_id], "detected_at": detected_at})
        self._confirm_attacked(monitor_id)

    def _confirm_attacked(self, monitor_id: str) -> None:
        if monitor_id in self.reported_attacked:
            return
        self.reported_attacked[monitor_id] = self.engine.now
        if self.blocking:
            self.block_monitor(monitor_id)

    # -- blocking -------------------------------------------------------
    def block_monitor(self, monitor_id: str) -> None:
        if monitor_id not in self.monitors:
            raise UnknownMonitor(monitor_id)
        if monitor_id in self.block_list:
            raise AlreadyBlocked(monitor_id)
        now = self.engine.now
        mon = self.monitors[monitor_id]
        self.reported_attacked.setdefault(monitor_id, now)
        self.block_list[monitor_id] = now
        mon.status = Status.BLOCKED
        mon.blocked_at = now
        self.network.add_redirect(mon.watched_range, self.honeypot, now)
        self.published_reports.append(self.report(monitor_id).as_dict())
        for listener in self.block_listeners:
            lat = self.network.latency(self.node, listener)
            if lat is not None:
                self.engine.schedule(lat, listener, ControlMessage(
                    "itm_blocked", (monitor_id, now, mon.watched_range), self.node))

    def published_status(self, monitor_id: str) -> Status:
        if monitor_id in self.block_list:
            return Status.BLOCKED
        if monitor_id in self.reported_attacked:
            return Status.ATTACKED
        return Status.ACTIVE

    # -- queries --------------------------------------------------------
    def report(self, monitor_id: str, time_range: Optional[tuple[int, int]] = None) -> Report:
        if monitor_id not in self.monitors:
            raise UnknownMonitor(monitor_id)
        lo, hi = time_range if time_range is not None else (0, self.engine.now)
        series = self.collected_logs.get(monitor_id, {})
        buckets = [series[s].as_dict() for s in sorted(series) if lo <= s <= hi]
        return Report(monitor_id, self.published_status(monitor_id), buckets, self.engine.now)

    def answer_query(self, query: Query) -> Report:
        return self.report(query.monitor_id, query.time_range)

    def enqueue_query(self, requester: Requester, monitor_id: str,
                      time_range: tuple[int, int]) -> Query:
        self._next_query += 1
        q = Query(self._next_query, Requester(requester), monitor_id, tuple(time_range), self.engine.now)
        self.lanes[q.requester].append(q)
        if not self._serving:
            self._serving = True
            self.engine.call_later(0, self._serve, "query", self.node)
        return q

    def _next_in_line(self) -> Optional[Query]:
        for lane in (Requester.PRIVATE, Requester.PUBLIC):
            if self.lanes[lane]:
                return self.lanes[lane].popleft()
        return None

    def _serve(self) -> None:
        q = self._next_in_line()
        if q is None:
            self._serving = False
            return
        try:
            self.service_log.append(ServiceRecord(q, self.engine.now, self.answer_query(q)))
        except UnknownMonitor as exc:
            self.service_log.append(ServiceRecord(q, self.engine.now, None, f"UnknownMonitor: {exc}"))
        self.engine.call_later(self.query_service_time, self._serve, "query", self.node)
