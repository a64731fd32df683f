"""Metrics report assembly.

This is the validation boundary: the only module (besides tests) that
reads the ground-truth ledger. Accuracy figures for traceback and PPM are
computed here and never fed back into protocol state.
"""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from typing import Optional

from .errors import PpmIncomplete
from .net import FloodType, GroundTruthLedger, NodeKind, format_address
from .ppm import ppm_reconstruct


def arrival_series(ledger: GroundTruthLedger, node: Optional[str], duration: int,
                   include_legit: bool = True) -> list[int]:
    series = [0] * (duration + 1)
    if node is None:
        return series
    for _, e in ledger.items():
        if e.outcome == "delivered" and e.true_path and e.true_path[-1] == node:
            if include_legit or e.flood_type != FloodType.LEGIT:
                series[e.outcome_at] += 1
    return series


def trace_truth(ledger: GroundTruthLedger, dst: int, flood_type: FloodType, lo: int, hi: int):
    """Ledger hops of the traced flow.

    Returns (edges with an endpoint seen in [lo, hi], origins of those
    packets whose first hop falls in the window, every edge of the flow).
    """
    window_edges: set[tuple[str, str]] = set()
    sources: set[str] = set()
    all_edges: set[tuple[str, str]] = set()
    paths_in_window: list[list[tuple[str, str]]] = []
    for _, e in ledger.items():
        if e.dst != dst or e.flood_type != flood_type:
            continue
        path, times = e.true_path, e.hop_times
        hops = list(zip(path, path[1:]))
        all_edges.update(hops)
        touched = False
        for i, hop in enumerate(hops):
            if lo <= times[i] <= hi or lo <= times[i + 1] <= hi:
                window_edges.add(hop)
                touched = True
                if i == 0:
                    sources.add(e.true_origin)
        if touched:
            paths_in_window.append(hops)
    return window_edges, sources, all_edges, paths_in_window


def _trace_accuracy(sim, event) -> dict:
    ledger = sim.network.validation_ledger()
    req = event.request
    slack = sim.console.match_slack if sim.console else 0
    lo, hi = req.window[0] - slack, req.window[1]
    window_edges, true_sources, all_edges, paths = trace_truth(ledger, req.dst, req.flood_type, lo, hi)
    rebuilt = set(map(tuple, event.result.edges)) if event.result else set()
    sources = set(event.result.sources) if event.result else set()
    false_edges = sorted(rebuilt - all_edges)
    hit = rebuilt & window_edges
    union = rebuilt | window_edges
    return {
        "true_sources": sorted(true_sources),
        "sources_match": sources == true_sources,
        "false_edges": [list(e) for e in false_edges],
        "edge_precision": (len(hit) / len(rebuilt)) if rebuilt else None,
        "edge_recall": (len(hit) / len(window_edges)) if window_edges else None,
        "edge_jaccard": (len(hit) / len(union)) if union else None,
        "covers_a_ledger_path": any(hops and set(hops) <= rebuilt for hops in paths),
    }


def _ppm_row(sim) -> dict:
    ledger = sim.network.validation_ledger()
    groups: dict[str, dict[tuple, list]] = defaultdict(lambda: defaultdict(list))
    marked = 0
    first_seen: dict[str, int] = {}
    for t, pid, mark in sim.ppm_log:
        e = ledger[pid]
        if e.flood_type == FloodType.LEGIT:
            continue
        if mark is not None:
            marked += 1
        routers = tuple(n for n in e.true_path if sim.topology.nodes[n].kind == NodeKind.ROUTER)
        groups[e.true_origin][routers].append((t, mark))
        first_seen.setdefault(e.true_origin, t)

    needed, latency, accuracy = [], [], []
    complete = bool(groups)
    for origin in sorted(groups):
        routers, arrivals = max(groups[origin].items(), key=lambda kv: (len(kv[1]), kv[0]))
        d = len(routers)
        truth = list(reversed(routers))  # distance 0 = router nearest the victim
        try:
            res = ppm_reconstruct((m for _, m in arrivals), d)
            needed.append(res.packets_consumed)
            done_at = arrivals[res.packets_consumed - 1][0] if res.packets_consumed else first_seen[origin]
            latency.append(done_at - first_seen[origin])
        except PpmIncomplete as exc:
            res = exc.partial
            complete = False
        hits = sum(1 for k in range(d) if res.path[k] == truth[k])
        accuracy.append(hits / d if d else 1.0)
    return {
        "method": "ppm",
        "complete": complete,
        "packets_needed": max(needed) if complete and needed else None,
        "in_packet_markings": marked,
        "marking_writes": sim.ppm.writes,
        "traceback_latency": max(latency) if complete and latency else None,
        "path_accuracy": (sum(accuracy) / len(accuracy)) if accuracy else None,
        "sources": len(groups),
    }


def _honeypot_row(sim, trace_events: list[dict]) -> dict:
    done = [t for t in trace_events if t["result"] and t["result"]["conclusion"] == "traced"
            and t["result"]["sources"]]
    first = done[0] if done else None
    return {
        "method": "honeypot",
        "complete": first is not None,
        "packets_needed": 1 if first else None,
        "in_packet_markings": 0,
        "traceback_latency": (first["concluded_at"] - first["request"]["visit_time"]) if first else None,
        "path_accuracy": first["accuracy"]["edge_jaccard"] if first else None,
        "messages": sim.console.messages if sim.console else 0,
    }


def _detection(sim) -> dict:
    dc = sim.datacenter
    if dc is None:
        return {"mode": None, "alarms": [], "attacked": [], "blocked": [], "monitors": {}, "submissions": {}}
    return {
        "mode": dc.mode.value,
        "global_threshold": dc.global_threshold,
        "alarms": dc.alarms,
        "attacked": [{"monitor": m, "at": t} for m, t in sorted(dc.reported_attacked.items())],
        "blocked": [{"monitor": m, "at": t} for m, t in sorted(dc.block_list.items())],
        "monitors": {
            mid: {
                "status": mon.status.value, "published_status": dc.published_status(mid).value,
                "attached_to": mon.attachment, "range": str(mon.watched_range), "threshold": mon.threshold,
                "attacked_at": mon.attacked_at, "blocked_at": mon.blocked_at,
                "observed_records": mon.observed, "bucket_total": sum(b.count for b in mon.buckets.values()),
                "submissions": mon.submissions,
            }
            for mid, mon in sorted(sim.monitors.items())
        },
        "submissions": {
            "accepted": sum(1 for s in dc.submissions if s["accepted"]),
            "rejected": sum(1 for s in dc.submissions if not s["accepted"]),
            "log": dc.submissions,
        },
        "published_reports": len(dc.published_reports),
    }


def _queries(sim) -> list[dict]:
    dc = sim.datacenter
    if dc is None:
        return []
    return [{
        "query_id": r.query.query_id, "requester": r.query.requester.value, "monitor": r.query.monitor_id,
        "enqueued_at": r.query.enqueued_at, "served_at": r.served_at,
        "status": r.report.status.value if r.report else None, "error": r.error,
    } for r in dc.service_log]


def _botnet(sim) -> Optional[dict]:
    bn = sim.botnet
    if bn is None:
        return None
    ch = bn.channel
    cmd = lambda t, c: {"at": t, "flood_type": c.flood_type.value, "target": format_address(c.target),
                        "rate": c.rate, "duration": c.duration, "spoof": c.spoof.value}
    last = max((b.last_packet_at for b in bn.bots.values() if b.last_packet_at is not None), default=None)
    return {
        "metadata": bn.metadata,
        "bots": {
            n: {"phase": b.phase.value, "history": [[t, p.value] for t, p in b.history],
                "packets_sent": b.packets_sent, "first_packet_at": b.first_packet_at,
                "last_packet_at": b.last_packet_at, "noticed_shutdown_at": b.noticed_shutdown_at}
            for n, b in sorted(bn.bots.items())
        },
        "channel": None if ch is None else {
            "server": ch.server, "members": sorted(ch.members), "active": ch.active,
            "shutdown_at": ch.shutdown_at, "command_log": [cmd(t, c) for t, c in ch.command_log],
        },
        "deliveries": [{"bot": d.bot, "issued_at": d.issued_at, "delivered_at": d.delivered_at}
                       for d in bn.deliveries],
        "attack_packets": bn.attack_packets,
        "expected_attack_packets": bn.expected_attack_packets(sim.scenario.duration),
        "last_attack_injection": last,
        "infiltration": {
            a: {"joined_at": ag.joined_at, "observed": [cmd(t, c) for t, c in ag.observed_commands]}
            for a, ag in sorted(bn.agents.items())
        },
    }


def _conservation(sim) -> dict:
    net = sim.network
    out = net.conservation()
    by_outcome = Counter()
    per_type: dict[str, dict] = {}
    for (outcome, ft), n in net.outcomes.items():
        by_outcome[outcome] += n
    for ft in FloodType:
        inj = net.injected.get(ft, 0)
        if not inj:
            continue
        delivered = net.outcomes.get(("delivered", ft), 0)
        dropped = sum(n for (o, f), n in net.outcomes.items() if f == ft and o != "delivered")
        per_type[ft.value] = {"injected": inj, "delivered": delivered, "dropped": dropped,
                              "in_flight": inj - delivered - dropped}
    redirected = sum(1 for _, e in net.validation_ledger().items() if e.redirected)
    out.update({"by_outcome": dict(sorted(by_outcome.items())), "by_flood_type": per_type,
                "redirected": redirected})
    return out


def build_report(sim) -> dict:
    sc = sim.scenario
    ledger = sim.network.validation_ledger()
    hp_node = sim.honeypot.node if sim.honeypot else None

    trace_events = []
    if sim.console is not None:
        for ev in sim.console.database:
            d = ev.as_dict()
            d["accuracy"] = _trace_accuracy(sim, ev)
            trace_events.append(d)

    comparison = [_honeypot_row(sim, trace_events)]
    if sim.ppm is not None:
        comparison.append(_ppm_row(sim))

    honeypot = None
    if sim.honeypot is not None:
        honeypot = sim.honeypot.summary()
        bots = set(sim.botnet.bots) if sim.botnet else set()
        honeypot["non_bot_origins"] = sum(
            1 for _, e in ledger.items()
            if e.outcome == "delivered" and e.true_path[-1] == hp_node and e.true_origin not in bots
            and e.true_origin not in sim.amplifiers
        )
        honeypot["requests"] = [
            {"itm_name": r.itm_name, "flow_size": r.flow_size, "visit_time": r.visit_time,
             "dst": format_address(r.dst), "flood_type": r.flood_type.value, "window": list(r.window),
             "trigger": r.trigger}
            for r in sim.honeypot.emitted_requests
        ]

    return {
        "schema": 1,
        "scenario": sc.name,
        "seed": sim.seed,
        "duration": sc.duration,
        "summary": {"events_dispatched": sim.summary.events_dispatched, "final_time": sim.summary.final_time,
                    "events_pending": sim.engine.pending},
        "conservation": _conservation(sim),
        "series": {
            "victim": sim.victim,
            "victim_arrivals": arrival_series(ledger, sim.victim, sc.duration),
            "victim_attack_arrivals": arrival_series(ledger, sim.victim, sc.duration, include_legit=False),
            "honeypot_arrivals": arrival_series(ledger, hp_node, sc.duration),
        },
        "detection": _detection(sim),
        "queries": _queries(sim),
        "honeypot": honeypot,
        "traceback": {"events": trace_events, "messages": sim.console.messages if sim.console else 0},
        "botnet": _botnet(sim),
        "comparison": comparison,
        "events": sim.events,
    }


COMPARISON_FIELDS = ["method", "complete", "packets_needed", "in_packet_markings",
                     "traceback_latency", "path_accuracy"]


def series_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tick", "victim_arrivals", "victim_attack_arrivals", "honeypot_arrivals"])
    s = report["series"]
    for t, row in enumerate(zip(s["victim_arrivals"], s["victim_attack_arrivals"], s["honeypot_arrivals"])):
        w.writerow([t, *row])
    return buf.getvalue()


def comparison_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COMPARISON_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in report["comparison"]:
        w.writerow(row)
    return buf.getvalue()


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()
