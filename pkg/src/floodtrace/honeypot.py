"""Honeypot: accept and log everything, aggregate flows, request traces.

Any packet arriving here is hostile by construction (legit traffic never
targets the honeypot address). Captured packets are grouped per flow
signature ``(dst, flood_type, capture window)``; when a window closes and
a trigger holds (an entrap lure was touched, or a monitor was reported
blocked), one trace request is sent to the trace console.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .engine import ControlMessage, Engine, Event
from .errors import ConsoleUnreachable
from .net import FloodType, Link, Network, Packet, Subnet

log = logging.getLogger(__name__)

REPLY_TYPES = {
    FloodType.TCP_SYN: FloodType.TCP_ACK,
    FloodType.ICMP_ECHO_REQ: FloodType.ICMP_ECHO_REPLY,
}


@dataclass(frozen=True, order=True)
class FlowSignature:
    dst: int
    flood_type: FloodType
    start: int
    end: int  # inclusive

    def matches(self, dst: int, flood_type: FloodType, seen_at: int, slack: int = 0) -> bool:
        return (dst == self.dst and flood_type == self.flood_type
                and self.start - slack <= seen_at <= self.end)


@dataclass
class TraceRequest:
    itm_name: str
    flow_size: int
    flow_bytes: int
    visit_time: int
    last_seen: int
    dst: int
    observed_src: int
    flood_type: FloodType
    window: tuple[int, int]
    initiator: str
    trigger: str

    @property
    def flow_signature(self) -> FlowSignature:
        return FlowSignature(self.dst, self.flood_type, self.window[0], self.window[1])


@dataclass
class Capture:
    seen_at: int
    src: int
    dst: int
    flood_type: FloodType
    size: int
    link: Optional[int]
    lure: Optional[str] = None


@dataclass
class _Flow:
    first_seen: int
    last_seen: int
    observed_src: int
    count: int = 0
    bytes: int = 0
    lure_hit: bool = False
    closed: bool = False
    requested: bool = False


class Honeypot:
    def __init__(self, engine: Engine, network: Network, node: str, console: Optional[str],
                 entrap: Optional[dict[int, str]] = None, bandwidth_cap: int = 0,
                 trace_window: int = 50, respond: bool = False):
        if trace_window < 1:
            raise ValueError("trace_window must be >= 1")
        self.engine = engine
        self.network = network
        self.node = node
        self.address = network.topology.nodes[node].address
        self.console = console
        self.entrap = dict(entrap or {})
        self.bandwidth_cap = bandwidth_cap
        self.trace_window = trace_window
        self.respond = respond
        self.capture_log: list[Capture] = []
        self.entrap_events: list[tuple[int, str]] = []
        self.flows: dict[FlowSignature, _Flow] = {}
        self.blocked: dict[str, tuple[int, Subnet]] = {}
        self.emitted_requests: list[TraceRequest] = []
        self.failed_requests: list[TraceRequest] = []
        self.unreachable_log: list[int] = []
        self.results: list[dict] = []
        self.sent = 0
        self.throttled = 0
        self._tick = -1
        self._sent_this_tick = 0
        network.set_receiver(node, self.on_packet)
        engine.on("itm_blocked", self._on_blocked)
        engine.on("trace_result", self._on_result)

    # -- information capture -------------------------------------------
    def signature_for(self, dst: int, flood_type: FloodType, t: int) -> FlowSignature:
        start = (t // self.trace_window) * self.trace_window
        return FlowSignature(dst, flood_type, start, start + self.trace_window - 1)

    def on_packet(self, packet: Packet, link: Optional[Link] = None) -> None:
        now = self.engine.now
        lure = self.entrap.get(packet.selector) if packet.selector is not None else None
        self.capture_log.append(Capture(now, packet.src, packet.dst, packet.flood_type, packet.size,
                                        None if link is None else link.id, lure))
        if lure is not None:
            self.entrap_events.append((now, lure))
        sig = self.signature_for(packet.dst, packet.flood_type, now)
        flow = self.flows.get(sig)
        if flow is None:
            flow = self.flows[sig] = _Flow(now, now, packet.src)
            self.engine.call_at(sig.end + 1, lambda: self._close(sig), "flow_close", self.node)
        flow.count += 1
        flow.bytes += packet.size
        flow.last_seen = now
        flow.lure_hit = flow.lure_hit or lure is not None
        if self.respond:
            reply = REPLY_TYPES.get(packet.flood_type, FloodType.UDP)
            self.throttle(packet.src, reply)

    def _on_blocked(self, ev: Event) -> None:
        monitor_id, blocked_at, watched = ev.payload.body
        self.blocked[monitor_id] = (blocked_at, watched)
        # flows that closed before the notice arrived
        for sig in sorted(self.flows):
            flow = self.flows[sig]
            if flow.closed and not flow.requested and sig.dst in watched:
                self._request(sig, flow, "blocked")

    def _close(self, sig: FlowSignature) -> None:
        flow = self.flows[sig]
        flow.closed = True
        if flow.lure_hit:
            self._request(sig, flow, "entrap")
        elif self.blocked:
            self._request(sig, flow, "blocked")

    def _itm_name(self, dst: int) -> str:
        for monitor_id in sorted(self.blocked):
            if dst in self.blocked[monitor_id][1]:
                return monitor_id
        return self.node

    def _request(self, sig: FlowSignature, flow: _Flow, trigger: str) -> None:
        flow.requested = True
        request = TraceRequest(
            itm_name=self._itm_name(sig.dst), flow_size=flow.count, flow_bytes=flow.bytes,
            visit_time=flow.first_seen, last_seen=flow.last_seen, dst=sig.dst,
            observed_src=flow.observed_src, flood_type=sig.flood_type,
            window=(sig.start, sig.end), initiator=self.node, trigger=trigger,
        )
        self.emit_trace_request(request)

    # -- communication control -----------------------------------------
    def emit_trace_request(self, request: TraceRequest, retry: bool = True) -> None:
        lat = None if self.console is None else self.network.latency(self.node, self.console)
        if lat is None:
            self.unreachable_log.append(self.engine.now)
            log.warning("%s", ConsoleUnreachable(f"console {self.console} unreachable from {self.node}"))
            if retry:
                self.engine.call_later(1, lambda: self.emit_trace_request(request, retry=False),
                                       "trace_retry", self.node)
            else:
                self.failed_requests.append(request)
            return
        self.emitted_requests.append(request)
        self.engine.schedule(lat, self.console, ControlMessage("trace_request", request, self.node))

    def _on_result(self, ev: Event) -> None:
        self.results.append(ev.payload.body)

    # -- information control -------------------------------------------
    def throttle(self, dst: int, flood_type: FloodType, size: int = 60) -> bool:
        """Send one outbound packet unless this tick's bandwidth cap is spent."""
        now = self.engine.now
        if now != self._tick:
            self._tick = now
            self._sent_this_tick = 0
        if self._sent_this_tick >= self.bandwidth_cap:
            self.throttled += 1
            return False
        self._sent_this_tick += 1
        self.sent += 1
        self.network.inject_packet(self.node, self.address, dst, flood_type, size)
        return True

    def summary(self) -> dict:
        by_type: dict[str, int] = {}
        for c in self.capture_log:
            by_type[c.flood_type.value] = by_type.get(c.flood_type.value, 0) + 1
        return {
            "node": self.node,
            "captured": len(self.capture_log),
            "captured_by_type": dict(sorted(by_type.items())),
            "legit_captured": by_type.get(FloodType.LEGIT.value, 0),
            "entrap_events": len(self.entrap_events),
            "flows": len(self.flows),
            "requests_emitted": len(self.emitted_requests),
            "requests_failed": len(self.failed_requests),
            "console_unreachable": len(self.unreachable_log),
            "outbound_sent": self.sent,
            "outbound_throttled": self.throttled,
        }
