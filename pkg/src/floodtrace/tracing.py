"""Trace service console and trace agents.

The console serial-numbers each honeypot request, sends one instruction
to every non-blocked monitor, collects their feedback and rebuilds the
attack route from it. The console only knows *monitor adjacency*: for each
agent, which node it sits on and what is at the far end of each link.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from .engine import ControlMessage, Engine, Event
from .honeypot import FlowSignature, TraceRequest
from .itm import DataCenter, Monitor, PacketRecord, Status
from .net import NodeKind, Topology, format_address

log = logging.getLogger(__name__)


class Confidence(str, Enum):
    EXACT = "exact"
    PARTIAL = "partial"


@dataclass(frozen=True)
class LinkInfo:
    neighbor: str
    host_facing: bool


@dataclass(frozen=True)
class AgentInfo:
    agent_id: str
    attachment: str
    attachment_is_host: bool
    links: Mapping[int, LinkInfo]


def build_monitor_adjacency(topology: Topology, monitors: Iterable[Monitor]) -> dict[str, AgentInfo]:
    out = {}
    for mon in monitors:
        node = topology.nodes[mon.attachment]
        links = {}
        for nbr, link in topology.neighbors(mon.attachment):
            links[link.id] = LinkInfo(nbr, topology.nodes[nbr].kind != NodeKind.ROUTER)
        out[mon.monitor_id] = AgentInfo(mon.monitor_id, mon.attachment, node.kind != NodeKind.ROUTER, links)
    return out


@dataclass(frozen=True)
class TraceInstruction:
    serial: int
    flow_signature: FlowSignature
    issued_at: int
    slack: int = 0


@dataclass
class AgentFeedback:
    agent_id: str
    serial: int
    incoming_match: bool
    outgoing_match: bool
    matched_records: list[PacketRecord]
    first_seen: Optional[int]
    upstream_links: list[int]
    downstream_links: list[int]
    source_candidates: list[str]
    stale: bool = False

    @property
    def positive(self) -> bool:
        return self.incoming_match or self.outgoing_match

    def as_dict(self) -> dict:
        return {
            "agent_id": self.agent_id, "serial": self.serial,
            "incoming_match": self.incoming_match, "outgoing_match": self.outgoing_match,
            "matched": len(self.matched_records), "first_seen": self.first_seen,
            "upstream_links": self.upstream_links, "downstream_links": self.downstream_links,
            "source_candidates": self.source_candidates, "stale": self.stale,
        }


def agent_analyze(agent: Monitor, info: AgentInfo, instruction: TraceInstruction, now: int) -> AgentFeedback:
    """Match the instruction's flow signature against the agent's sliding window."""
    sig = instruction.flow_signature
    if sig.end < now - agent.window_ticks:
        # every record the instruction could match has already been evicted
        return AgentFeedback(agent.monitor_id, instruction.serial, False, False, [], None, [], [], [], stale=True)
    matched = [
        r for r in agent.window_records(now)
        if sig.matches(r.dst, r.flood_type, r.seen_at, instruction.slack)
    ]
    incoming = sorted({r.link for r in matched if r.direction == "incoming"})
    outgoing = sorted({r.link for r in matched if r.direction == "outgoing"})
    candidates = {info.links[l].neighbor for l in incoming if info.links[l].host_facing}
    if info.attachment_is_host and outgoing and not incoming:
        candidates.add(info.attachment)
    return AgentFeedback(
        agent_id=agent.monitor_id,
        serial=instruction.serial,
        incoming_match=bool(incoming),
        outgoing_match=bool(outgoing),
        matched_records=matched,
        first_seen=min((r.seen_at for r in matched), default=None),
        upstream_links=incoming,
        downstream_links=outgoing,
        source_candidates=sorted(candidates),
    )


@dataclass
class RebuiltPath:
    serial: int
    edges: list[tuple[str, str]]
    sources: list[str]
    confidence: Confidence
    conclusion: str

    def as_dict(self) -> dict:
        return {"serial": self.serial, "edges": [list(e) for e in self.edges], "sources": self.sources,
                "confidence": self.confidence.value, "conclusion": self.conclusion}


def rebuild_path(serial: int, feedbacks: Iterable[AgentFeedback],
                 adjacency: Mapping[str, AgentInfo]) -> RebuiltPath:
    positive = [f for f in feedbacks if f.positive]
    if not positive:
        return RebuiltPath(serial, [], [], Confidence.PARTIAL, "untraceable")

    edges: set[tuple[str, str]] = set()
    endpoint_kind: dict[str, bool] = {}  # node -> is non-router endpoint
    for fb in positive:
        info = adjacency[fb.agent_id]
        endpoint_kind[info.attachment] = info.attachment_is_host
        for lid in fb.upstream_links:
            li = info.links[lid]
            edges.add((li.neighbor, info.attachment))
            endpoint_kind.setdefault(li.neighbor, li.host_facing)
        for lid in fb.downstream_links:
            li = info.links[lid]
            edges.add((info.attachment, li.neighbor))
            endpoint_kind.setdefault(li.neighbor, li.host_facing)

    # a host's own agent speaks for it, so router agents defer to it
    reporting_hosts = {adjacency[f.agent_id].attachment for f in positive
                       if adjacency[f.agent_id].attachment_is_host and f.outgoing_match}
    sources: set[str] = set()
    for fb in positive:
        for cand in fb.source_candidates:
            if cand == adjacency[fb.agent_id].attachment or cand not in reporting_hosts:
                sources.add(cand)

    heads = {v for _, v in edges}
    tails = {u for u, _ in edges}
    gapless = bool(sources) and all(
        (u in sources or u in heads) and (endpoint_kind.get(v, False) or v in tails)
        for u, v in edges
    )
    confidence = Confidence.EXACT if gapless else Confidence.PARTIAL
    return RebuiltPath(serial, sorted(edges), sorted(sources), confidence, "traced")


@dataclass
class TraceEvent:
    serial: int
    initiator: str
    initiated_at: int
    request: TraceRequest
    expected_agents: list[str]
    instructions: dict[str, int] = field(default_factory=dict)
    feedback: dict[str, AgentFeedback] = field(default_factory=dict)
    result: Optional[RebuiltPath] = None
    concluded_at: Optional[int] = None

    def as_dict(self) -> dict:
        req = self.request
        return {
            "serial": self.serial,
            "initiator": self.initiator,
            "initiated_at": self.initiated_at,
            "request": {
                "itm_name": req.itm_name, "flow_size": req.flow_size, "flow_bytes": req.flow_bytes,
                "visit_time": req.visit_time, "last_seen": req.last_seen, "dst": format_address(req.dst),
                "observed_src": format_address(req.observed_src), "flood_type": req.flood_type.value,
                "window": list(req.window), "trigger": req.trigger,
            },
            "agents": self.expected_agents,
            "instructions_delivered_at": dict(sorted(self.instructions.items())),
            "feedback": [self.feedback[a].as_dict() for a in sorted(self.feedback)],
            "result": None if self.result is None else self.result.as_dict(),
            "concluded_at": self.concluded_at,
        }


class TraceDatabase:
    """Append-only store of trace events, queryable by serial, time range or initiator."""

    def __init__(self):
        self._events: dict[int, TraceEvent] = {}

    def add(self, event: TraceEvent) -> None:
        if event.serial in self._events:
            raise ValueError(f"serial {event.serial} already recorded")
        self._events[event.serial] = event

    def get(self, serial: int) -> TraceEvent:
        return self._events[serial]

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self):
        return iter(self._events[s] for s in sorted(self._events))

    def statistical_inquiry(self, serial: Optional[int] = None, time_range: Optional[tuple[int, int]] = None,
                            initiator: Optional[str] = None) -> list[TraceEvent]:
        out = []
        for ev in self:
            if serial is not None and ev.serial != serial:
                continue
            if time_range is not None and not (time_range[0] <= ev.initiated_at <= time_range[1]):
                continue
            if initiator is not None and ev.initiator != initiator:
                continue
            out.append(ev)
        return out


class TraceConsole:
    """Runs on the data center node; agents are the data center's monitors."""

    def __init__(self, engine: Engine, datacenter: DataCenter, match_slack: int = 32):
        self.engine = engine
        self.datacenter = datacenter
        self.network = datacenter.network
        self.node = datacenter.node
        self.match_slack = match_slack
        self.adjacency = build_monitor_adjacency(self.network.topology, datacenter.monitors.values())
        self.database = TraceDatabase()
        self._serial = 0
        self.messages = 0
        engine.on("trace_request", self._on_request)
        engine.on("trace_instruction", self._on_instruction)
        engine.on("trace_feedback", self._on_feedback)

    def agents(self) -> list[str]:
        dc = self.datacenter
        return sorted(m for m in dc.registered
                      if m not in dc.block_list and dc.monitors[m].status != Status.BLOCKED)

    def _on_request(self, ev: Event) -> None:
        self.receive_trace_request(ev.payload.body)

    def receive_trace_request(self, request: TraceRequest) -> int:
        self._serial += 1
        serial = self._serial
        now = self.engine.now
        agents = self.agents()
        event = TraceEvent(serial, request.initiator, now, request, agents)
        self.database.add(event)
        instruction = TraceInstruction(serial, request.flow_signature, now, self.match_slack)
        max_lat = 0
        for agent_id in agents:
            mon = self.datacenter.monitors[agent_id]
            lat = self.network.latency(self.node, mon.attachment)
            if lat is None:
                continue
            max_lat = max(max_lat, lat)
            self.messages += 1
            self.engine.schedule(lat, mon.attachment,
                                 ControlMessage("trace_instruction", (agent_id, instruction), self.node))
        # collection timeout: twice the longest instruction round trip
        self.engine.call_later(max(1, 4 * max_lat), lambda: self._conclude(serial), "trace_timeout", self.node)
        return serial

    def _on_instruction(self, ev: Event) -> None:
        agent_id, instruction = ev.payload.body
        mon = self.datacenter.monitors[agent_id]
        event = self.database.get(instruction.serial)
        event.instructions[agent_id] = self.engine.now
        fb = agent_analyze(mon, self.adjacency[agent_id], instruction, self.engine.now)
        lat = self.network.latency(mon.attachment, self.node)
        if lat is None:
            return
        self.messages += 1
        self.engine.schedule(lat, self.node, ControlMessage("trace_feedback", fb, mon.attachment))

    def _on_feedback(self, ev: Event) -> None:
        fb: AgentFeedback = ev.payload.body
        event = self.database.get(fb.serial)
        if event.result is not None:
            return
        event.feedback[fb.agent_id] = fb
        if len(event.feedback) == len(event.expected_agents):
            self._conclude(fb.serial)

    def _conclude(self, serial: int) -> None:
        event = self.database.get(serial)
        if event.result is not None:
            return
        event.result = rebuild_path(serial, event.feedback.values(), self.adjacency)
        event.concluded_at = self.engine.now
        # advisory copy back to the requesting honeypot
        lat = self.network.latency(self.node, event.initiator)
        if lat is not None:
            self.messages += 1
            self.engine.schedule(lat, event.initiator,
                                 ControlMessage("trace_result", event.result.as_dict(), self.node))
