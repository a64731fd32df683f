"""Scenario file schema (JSON, ``"schema": 1``) and loader.

Unknown fields are rejected. Cross-references (node ids, addresses,
subnets) are resolved at load time so a scenario that validates can be
run without further checks.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .attack import AttackType, Spoof
from .errors import ParseError, ScenarioValidationError, TopologyError
from .itm import Mode, Requester
from .net import NodeKind, Subnet, build_topology, parse_address


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class NodeSpec(_Strict):
    id: str
    kind: NodeKind = NodeKind.HOST
    address: Optional[str] = None
    responds_to_broadcast: bool = False


class LinkSpec(_Strict):
    a: str
    b: str
    latency: int = Field(1, ge=1)
    capacity: Optional[int] = Field(None, ge=0)


class SubnetSpec(_Strict):
    prefix: str
    router: str


class TopologySpec(_Strict):
    nodes: list[NodeSpec]
    links: list[LinkSpec] = []
    subnets: list[SubnetSpec] = []


class MonitorSpec(_Strict):
    id: str
    attach: str
    range: str
    threshold: int = Field(ge=0)
    registered: bool = True


class ItmSpec(_Strict):
    datacenter: str
    mode: Mode = Mode.DISTRIBUTED
    bucket_width: int = Field(10, ge=1)
    window: int = Field(200, ge=0)
    report_period: int = Field(50, ge=1)
    global_threshold: Optional[int] = Field(None, ge=0)
    blocking: bool = True
    query_service_time: int = Field(1, ge=1)
    monitors: list[MonitorSpec] = []


class HoneypotSpec(_Strict):
    node: str
    console: Optional[str] = None
    entrap: dict[int, str] = {}
    bandwidth_cap: int = Field(0, ge=0)
    respond: bool = False
    trace_window: int = Field(50, ge=1)


class TracebackSpec(_Strict):
    enabled: bool = True
    match_slack: int = Field(32, ge=0)


class CommandSpec(_Strict):
    at: int = Field(ge=0)
    flood_type: AttackType
    target: str
    rate: int = Field(1, ge=1)
    duration: int = Field(1, ge=1)
    spoof: Spoof = Spoof.NONE
    amplifier: Optional[str] = None
    selector: Optional[int] = None


class BotnetSpec(_Strict):
    botmaster: str
    cnc: str
    candidates: list[str]
    vulnerability_prob: float = Field(1.0, ge=0.0, le=1.0)
    scan_start: int = Field(0, ge=0)
    scan_rate: int = Field(10, ge=1)
    establish_at: int = Field(ge=0)
    poll_interval: int = Field(5, ge=1)
    commands: list[CommandSpec] = []
    updates: list[int] = []
    ddns: Optional[str] = None
    static_ip: Optional[str] = None


class LegitSpec(_Strict):
    hosts: list[str]
    rate: float = Field(ge=0.0)
    dst_pool: list[str]
    start: int = Field(0, ge=0)
    stop: Optional[int] = None


class PpmSpec(_Strict):
    enabled: bool = False
    probability: float = Field(0.04, ge=0.0, le=1.0)


class PreventionSpec(_Strict):
    agent: str
    infiltrate_at: Optional[int] = Field(None, ge=0)
    shutdown_at: Optional[int] = Field(None, ge=0)


class QuerySpec(_Strict):
    at: int = Field(ge=0)
    requester: Requester
    monitor: str
    time_range: Optional[tuple[int, int]] = None


def _fail(constraint: str, message: str):
    raise ValueError(f"[{constraint}] {message}")


class Scenario(_Strict):
    schema_version: Literal[1] = Field(alias="schema")
    name: str
    seed: int = 0
    duration: int = Field(ge=1)
    victim: Optional[str] = None
    topology: TopologySpec
    itm: Optional[ItmSpec] = None
    honeypot: Optional[HoneypotSpec] = None
    traceback: TracebackSpec = TracebackSpec()
    botnet: Optional[BotnetSpec] = None
    legit: Optional[LegitSpec] = None
    ppm: PpmSpec = PpmSpec()
    prevention: Optional[PreventionSpec] = None
    queries: list[QuerySpec] = []

    @model_validator(mode="after")
    def _cross_references(self) -> "Scenario":
        try:
            topo = build_topology(
                [n.model_dump() for n in self.topology.nodes],
                [l.model_dump() for l in self.topology.links],
                [s.model_dump() for s in self.topology.subnets],
            )
        except TopologyError as exc:
            _fail(type(exc).__name__, str(exc))
        except ValueError as exc:
            _fail("address-format", str(exc))
        nodes = topo.nodes

        def need(node_id: Optional[str], where: str):
            if node_id is not None and node_id not in nodes:
                _fail("unknown-node", f"{where} references unknown node {node_id!r}")

        def addr(text: str, where: str) -> int:
            try:
                return parse_address(text)
            except ValueError:
                _fail("address-format", f"{where}: bad address {text!r}")

        def subnet(text: str, where: str) -> Subnet:
            try:
                return Subnet.parse(text)
            except ValueError:
                _fail("address-format", f"{where}: bad subnet {text!r}")

        need(self.victim, "victim")
        ranges = []
        if self.itm is not None:
            need(self.itm.datacenter, "itm.datacenter")
            ids = [m.id for m in self.itm.monitors]
            if len(ids) != len(set(ids)):
                _fail("unique-monitor-ids", "monitor ids must be unique")
            for m in self.itm.monitors:
                need(m.attach, f"monitor {m.id}")
                ranges.append((m.id, subnet(m.range, f"monitor {m.id}")))
        if self.queries and self.itm is None:
            _fail("queries-need-itm", "queries require an itm section")

        hp_addr = None
        if self.honeypot is not None:
            need(self.honeypot.node, "honeypot.node")
            need(self.honeypot.console, "honeypot.console")
            hp_addr = nodes[self.honeypot.node].address
            if hp_addr is None:
                _fail("honeypot-address", "honeypot node needs an address")

        if self.botnet is not None:
            b = self.botnet
            need(b.botmaster, "botnet.botmaster")
            need(b.cnc, "botnet.cnc")
            for c in b.candidates:
                need(c, "botnet.candidates")
                if nodes[c].kind not in (NodeKind.HOST, NodeKind.BOT):
                    _fail("candidates-are-hosts", f"candidate {c} is a {nodes[c].kind.value}")
            subnets = {str(s) for s, _ in topo.subnets}
            for i, cmd in enumerate(b.commands):
                addr(cmd.target, f"botnet.commands[{i}].target")
                if cmd.flood_type == AttackType.SMURF:
                    if cmd.amplifier is None:
                        _fail("smurf-amplifier", f"command {i} is smurf but names no amplifier")
                    if str(subnet(cmd.amplifier, f"command {i}")) not in subnets:
                        _fail("smurf-amplifier", f"amplifier {cmd.amplifier} is not a declared subnet")

        if self.legit is not None:
            for h in self.legit.hosts:
                need(h, "legit.hosts")
                if nodes[h].address is None:
                    _fail("legit-host-address", f"legit host {h} has no address")
            for text in self.legit.dst_pool:
                a = addr(text, "legit.dst_pool")
                if hp_addr is not None and a == hp_addr:
                    _fail("honeypot-excluded-from-legit", f"legit dst_pool contains the honeypot address {text}")
                for mid, rng in ranges:
                    if a in rng:
                        _fail("legit-avoids-monitored-ranges",
                              f"legit dst {text} falls inside monitor {mid}'s watched range {rng}")

        if self.prevention is not None:
            need(self.prevention.agent, "prevention.agent")
            if self.botnet is None:
                _fail("prevention-needs-botnet", "prevention requires a botnet section")
        return self

    def normalized(self) -> dict:
        """Defaults filled in, JSON-ready, with the ``schema`` key restored."""
        return self.model_dump(mode="json", by_alias=True)


def _wrap(exc: ValidationError) -> ScenarioValidationError:
    errors = []
    constraint = None
    for err in exc.errors():
        msg = err.get("msg", "")
        loc = ".".join(str(p) for p in err.get("loc", ()))
        tag = None
        if "[" in msg and "]" in msg:
            tag = msg[msg.index("[") + 1: msg.index("]")]
        else:
            tag = err.get("type")
        constraint = constraint or tag
        errors.append({"field": loc, "constraint": tag, "message": msg})
    first = errors[0] if errors else {"field": "", "message": str(exc)}
    return ScenarioValidationError(f"{first['field'] or '<root>'}: {first['message']}", constraint, errors)


def parse_scenario(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise _wrap(exc) from None


def loads_scenario(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ParseError("top level must be a JSON object", 1, 1)
    return parse_scenario(data)


def load_scenario(path) -> Scenario:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))
