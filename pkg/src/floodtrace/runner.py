"""Wire a Scenario onto one engine, run it, and sweep parameters."""

from __future__ import annotations

import copy
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Iterable, Optional, Sequence

from .attack import AttackCommand, AttackType, Botnet, LegitTraffic, Spoof, enable_amplifiers
from .engine import Engine
from .errors import ChannelDown, NoBots, UnknownParameter
from .honeypot import Honeypot
from .itm import DataCenter, Monitor
from .net import Network, Subnet, build_topology, parse_address
from .ppm import PpmMarker
from .scenario import Scenario, parse_scenario
from .tracing import TraceConsole

log = logging.getLogger(__name__)


class Simulation:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None, record_trace: bool = False):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        sc = scenario
        self.engine = Engine(self.seed, horizon=sc.duration, record_trace=record_trace)
        self.topology = build_topology(
            [n.model_dump() for n in sc.topology.nodes],
            [l.model_dump() for l in sc.topology.links],
            [s.model_dump() for s in sc.topology.subnets],
        )
        self.network = Network(self.engine, self.topology)
        self.amplifiers = enable_amplifiers(self.network)
        self.events: list[dict] = []

        self.ppm: Optional[PpmMarker] = None
        self.ppm_log: list[tuple[int, int, Optional[tuple[str, int]]]] = []
        if sc.ppm.enabled:
            self.ppm = PpmMarker(sc.ppm.probability, self.engine.stream("ppm"))
            self.network.marker = self.ppm

        self.datacenter: Optional[DataCenter] = None
        self.monitors: dict[str, Monitor] = {}
        self.honeypot: Optional[Honeypot] = None
        self.console: Optional[TraceConsole] = None
        self.botnet: Optional[Botnet] = None
        self.legit: Optional[LegitTraffic] = None
        self.victim = self._victim()
        self._setup_itm()
        self._setup_honeypot()
        self._setup_botnet()
        self._setup_legit()
        self._setup_queries()
        self._setup_ppm_collection()
        self.summary = None

    def _victim(self) -> Optional[str]:
        if self.scenario.victim is not None:
            return self.scenario.victim
        b = self.scenario.botnet
        if b is not None and b.commands:
            return self.topology.owner(parse_address(b.commands[0].target))
        return None

    def _setup_itm(self) -> None:
        cfg = self.scenario.itm
        if cfg is None:
            return
        hp = self.scenario.honeypot
        thresholds = [m.threshold for m in cfg.monitors]
        global_threshold = cfg.global_threshold
        if global_threshold is None:
            global_threshold = min(thresholds) if thresholds else 0
        dc = DataCenter(self.engine, self.network, cfg.datacenter, cfg.mode, global_threshold,
                        cfg.blocking, None if hp is None else hp.node, cfg.query_service_time)
        for m in cfg.monitors:
            mon = Monitor(m.id, m.attach, Subnet.parse(m.range), m.threshold, cfg.bucket_width,
                          cfg.window, cfg.report_period, cfg.mode)
            mon.attach(self.network)
            dc.register(mon, m.registered)
            self.monitors[m.id] = mon
        self.datacenter = dc

    def _setup_honeypot(self) -> None:
        cfg = self.scenario.honeypot
        if cfg is None:
            return
        console = cfg.console
        if console is None and self.datacenter is not None:
            console = self.datacenter.node
        self.honeypot = Honeypot(self.engine, self.network, cfg.node, console, cfg.entrap,
                                 cfg.bandwidth_cap, cfg.trace_window, cfg.respond)
        if self.datacenter is not None:
            self.datacenter.block_listeners.append(cfg.node)
            if self.scenario.traceback.enabled:
                self.console = TraceConsole(self.engine, self.datacenter, self.scenario.traceback.match_slack)

    def _setup_botnet(self) -> None:
        cfg = self.scenario.botnet
        if cfg is None:
            return
        eng = self.engine
        bn = Botnet(eng, self.network, cfg.botmaster, {"ddns": cfg.ddns, "static_ip": cfg.static_ip})
        self.botnet = bn

        eng.call_at(cfg.scan_start, lambda: bn.discover_vulnerable_hosts(
            cfg.candidates, cfg.scan_rate, cfg.vulnerability_prob, poll_interval=cfg.poll_interval), "scan")

        def establish():
            try:
                bn.establish_botnet(cfg.cnc)
                self.events.append({"time": eng.now, "event": "botnet_established",
                                    "members": sorted(bn.channel.members)})
            except NoBots:
                self.events.append({"time": eng.now, "event": "no_bots"})

        eng.call_at(cfg.establish_at, establish, "establish")

        for cmd_spec in cfg.commands:
            amp = None if cmd_spec.amplifier is None else Subnet.parse(cmd_spec.amplifier)
            command = AttackCommand(AttackType(cmd_spec.flood_type), parse_address(cmd_spec.target),
                                    cmd_spec.rate, cmd_spec.duration, Spoof(cmd_spec.spoof), amp,
                                    cmd_spec.selector)

            def issue(command=command):
                try:
                    bn.issue_command(cfg.botmaster, command)
                except ChannelDown:
                    self.events.append({"time": eng.now, "event": "command_rejected", "reason": "ChannelDown"})

            eng.call_at(cmd_spec.at, issue, "command")

        for t in cfg.updates:
            def update():
                try:
                    bn.issue_update(cfg.botmaster)
                except ChannelDown:
                    self.events.append({"time": eng.now, "event": "update_rejected", "reason": "ChannelDown"})

            eng.call_at(t, update, "update")

        prev = self.scenario.prevention
        if prev is not None:
            if prev.infiltrate_at is not None:
                def infiltrate():
                    try:
                        bn.infiltrate(prev.agent)
                        self.events.append({"time": eng.now, "event": "infiltrated", "agent": prev.agent})
                    except ChannelDown:
                        self.events.append({"time": eng.now, "event": "infiltration_failed"})

                eng.call_at(prev.infiltrate_at, infiltrate, "infiltrate")
            if prev.shutdown_at is not None:
                def shutdown():
                    bn.shutdown_cnc()
                    self.events.append({"time": eng.now, "event": "cnc_shutdown"})

                eng.call_at(prev.shutdown_at, shutdown, "shutdown")

    def _setup_legit(self) -> None:
        cfg = self.scenario.legit
        if cfg is None:
            return
        self.legit = LegitTraffic(self.engine, self.network, cfg.hosts, cfg.rate,
                                  [parse_address(a) for a in cfg.dst_pool], cfg.start, cfg.stop)

    def _setup_queries(self) -> None:
        dc = self.datacenter
        for q in self.scenario.queries:
            rng = q.time_range if q.time_range is not None else (0, q.at)
            self.engine.call_at(q.at, lambda q=q, rng=rng: dc.enqueue_query(q.requester, q.monitor, rng), "query")

    def _setup_ppm_collection(self) -> None:
        if self.ppm is None:
            return
        # victim-side mark collection at the attacked host and at the honeypot
        hp = self.scenario.honeypot.node if self.scenario.honeypot else None
        for node in dict.fromkeys(n for n in (self.victim, hp) if n):
            def collect(pkt, direction, link, now, node=node):
                if direction != "incoming" or link is None:
                    return
                if node == hp or self.topology.owner(pkt.dst) == node:
                    self.ppm_log.append((now, pkt.packet_id, pkt.mark))

            self.network.add_observer(node, collect)

    def run(self):
        self.summary = self.engine.run(self.scenario.duration)
        return self.summary


def run_scenario(scenario: Scenario, seed: Optional[int] = None) -> dict:
    from .metrics import build_report

    sim = Simulation(scenario, seed)
    sim.run()
    return build_report(sim)


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, separators=(",", ":"))


def _lookup(data: Any, path: str):
    parent, key = None, None
    node = data
    for part in path.split("."):
        parent = node
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise UnknownParameter(path)
            key = int(part)
        elif isinstance(node, dict):
            if part not in node:
                raise UnknownParameter(path)
            key = part
        else:
            raise UnknownParameter(path)
        node = node[key]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise UnknownParameter(f"{path} is not numeric")
    return parent, key, node


def with_parameter(scenario: Scenario, axis: str, value) -> Scenario:
    data = copy.deepcopy(scenario.normalized())
    parent, key, current = _lookup(data, axis)
    parent[key] = int(value) if isinstance(current, int) and float(value).is_integer() else value
    return parse_scenario(data)


def _aggregate_row(axis: str, value, report: dict) -> dict:
    rows = {r["method"]: r for r in report["comparison"]}
    hp = rows.get("honeypot", {})
    ppm = rows.get("ppm", {})
    traces = report["traceback"]["events"]
    return {
        "axis": axis,
        "value": value,
        "seed": report["seed"],
        "injected": report["conservation"]["injected"],
        "alarms": len(report["detection"]["alarms"]),
        "blocked": len(report["detection"]["blocked"]),
        "trace_events": len(traces),
        "sources_exact": all(t["accuracy"]["sources_match"] for t in traces) if traces else None,
        "trace_messages": report["traceback"]["messages"],
        "honeypot_packets_needed": hp.get("packets_needed"),
        "honeypot_traceback_latency": hp.get("traceback_latency"),
        "ppm_packets_needed": ppm.get("packets_needed"),
        "ppm_in_packet_markings": ppm.get("in_packet_markings"),
    }


def _run_one(args) -> dict:
    data, seed = args
    return run_scenario(parse_scenario(data), seed)


def sweep(scenario: Scenario, axis: str, values: Sequence, jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """One run per value, seed = base seed + index. Output order follows ``values``."""
    values = list(values)
    variants = [with_parameter(scenario, axis, v) for v in values]
    if axis == "seed":
        seeds = [v.seed for v in variants]
    else:
        seeds = [scenario.seed + i for i in range(len(values))]
    tasks = [(v.normalized(), s) for v, s in zip(variants, seeds)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, tasks))
    else:
        reports = [_run_one(t) for t in tasks]
    table = [_aggregate_row(axis, v, r) for v, r in zip(values, reports)]
    return reports, table
