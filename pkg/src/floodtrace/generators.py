"""Scenario builders: random attack topologies and small fixed layouts.

All builders return plain scenario dicts (the JSON file shape), so the
output can be written to disk, edited, or fed to ``parse_scenario``.
"""

from __future__ import annotations

import random
from typing import Optional

VICTIM_RANGE = "172.16.0.0/24"
VICTIM_ADDR = "172.16.0.10"
HONEYPOT_ADDR = "10.250.0.2"


def _router_addr(i: int) -> str:
    return f"10.0.{i}.1"


def random_attack_scenario(seed: int, n_routers: int = 10, n_bots: int = 4, n_legit: int = 3,
                           extra_links: int = 2, duration: int = 300, attack_at: int = 20,
                           attack_duration: int = 150, rate: int = 1, threshold: int = 8,
                           legit_rate: float = 0.2, agents: Optional[list[int]] = None,
                           window: Optional[int] = None, trace_window: int = 100,
                           flood_type: str = "tcp_syn", spoof: str = "uniform_random",
                           mode: str = "distributed", ppm: Optional[float] = None) -> dict:
    """Random connected router graph with bots, a victim ITM, honeypot and data center.

    ``agents`` selects which routers host a trace-agent monitor (default:
    all of them). The victim ITM watches dark space, so legit traffic only
    runs between ordinary hosts.
    """
    rnd = random.Random(seed)
    routers = [f"r{i:02d}" for i in range(n_routers)]
    nodes = [{"id": r, "kind": "router", "address": _router_addr(i)} for i, r in enumerate(routers)]
    links = []
    for i in range(1, n_routers):
        links.append({"a": routers[rnd.randrange(i)], "b": routers[i], "latency": rnd.randint(1, 3)})
    existing = {frozenset((l["a"], l["b"])) for l in links}
    for _ in range(extra_links):
        a, b = rnd.sample(routers, 2) if n_routers > 1 else (routers[0], routers[0])
        if a != b and frozenset((a, b)) not in existing:
            existing.add(frozenset((a, b)))
            links.append({"a": a, "b": b, "latency": rnd.randint(1, 3)})
    subnets = [{"prefix": f"10.0.{i}.0/24", "router": r} for i, r in enumerate(routers)]

    host_seq = {r: 10 for r in routers}

    def attach(node_id: str, kind: str = "host", address: Optional[str] = None) -> str:
        r_idx = rnd.randrange(n_routers)
        router = routers[r_idx]
        if address is None:
            host_seq[router] += 1
            address = f"10.0.{r_idx}.{host_seq[router]}"
        nodes.append({"id": node_id, "kind": kind, "address": address})
        links.append({"a": node_id, "b": router, "latency": 1})
        return address

    bots = [f"bot{i}" for i in range(n_bots)]
    for b in bots:
        attach(b)
    legit_hosts = [f"h{i}" for i in range(n_legit)]
    legit_addrs = [attach(h) for h in legit_hosts]
    attach("itm", "monitor", VICTIM_ADDR)
    attach("hp", "honeypot", HONEYPOT_ADDR)
    attach("dc", "datacenter")
    attach("cnc", "cnc")
    attach("bm", "botmaster")

    agent_idx = range(n_routers) if agents is None else agents
    monitors = [{"id": "m-victim", "attach": "itm", "range": VICTIM_RANGE, "threshold": threshold}]
    monitors += [{"id": f"a-{routers[i]}", "attach": routers[i], "range": f"172.20.{i}.0/24",
                  "threshold": 10**9} for i in sorted(agent_idx)]

    scenario = {
        "schema": 1,
        "name": f"random-{seed}",
        "seed": seed,
        "duration": duration,
        "victim": "itm",
        "topology": {"nodes": nodes, "links": links, "subnets": subnets},
        "itm": {"datacenter": "dc", "mode": mode, "bucket_width": 10,
                "window": window if window is not None else duration,
                "report_period": 50, "monitors": monitors},
        "honeypot": {"node": "hp", "entrap": {"7": "passwords.txt"}, "trace_window": trace_window},
        "traceback": {"enabled": True, "match_slack": 32},
        "botnet": {"botmaster": "bm", "cnc": "cnc", "candidates": bots, "vulnerability_prob": 1.0,
                   "scan_start": 0, "scan_rate": 8, "establish_at": 5,
                   "commands": [{"at": attack_at, "flood_type": flood_type, "target": VICTIM_ADDR,
                                 "rate": rate, "duration": attack_duration, "spoof": spoof}]},
        "legit": {"hosts": legit_hosts, "rate": legit_rate, "dst_pool": legit_addrs} if legit_hosts else None,
    }
    if ppm is not None:
        scenario["ppm"] = {"enabled": True, "probability": ppm}
    return scenario


def chain_scenario(path_routers: int, packets: int, p: float = 0.04, seed: int = 0,
                   rate: int = 1, selector: Optional[int] = 7, duration: Optional[int] = None) -> dict:
    """bot - r1 - ... - rd - hp, with the honeypot as the attack target.

    Every router carries a trace agent; the bot touches an entrap lure so
    each captured flow triggers a trace request directly.
    """
    routers = [f"r{i}" for i in range(1, path_routers + 1)]
    nodes = [{"id": r, "kind": "router", "address": f"10.1.{i}.1"} for i, r in enumerate(routers, 1)]
    nodes += [
        {"id": "bot", "kind": "host", "address": "10.9.0.5"},
        {"id": "hp", "kind": "honeypot", "address": HONEYPOT_ADDR},
        {"id": "dc", "kind": "datacenter", "address": "10.8.0.2"},
        {"id": "cnc", "kind": "cnc", "address": "10.7.0.2"},
        {"id": "bm", "kind": "botmaster", "address": "10.6.0.2"},
    ]
    chain = ["bot", *routers, "hp"]
    links = [{"a": a, "b": b, "latency": 1} for a, b in zip(chain, chain[1:])]
    links += [{"a": n, "b": routers[0], "latency": 1} for n in ("dc", "cnc", "bm")]
    ticks = -(-packets // rate)
    trace_window = ticks + 2 * path_routers + 8
    duration = duration or trace_window + 6 * path_routers + 60
    return {
        "schema": 1,
        "name": f"chain-d{path_routers}-n{packets}",
        "seed": seed,
        "duration": duration,
        "victim": "hp",
        "topology": {"nodes": nodes, "links": links},
        "itm": {"datacenter": "dc", "window": duration, "monitors": [
            {"id": f"a-{r}", "attach": r, "range": f"172.20.{i}.0/24", "threshold": 10**9}
            for i, r in enumerate(routers, 1)]},
        "honeypot": {"node": "hp", "entrap": {"7": "passwords.txt"}, "trace_window": trace_window},
        "botnet": {"botmaster": "bm", "cnc": "cnc", "candidates": ["bot"], "establish_at": 1,
                   "commands": [{"at": 2, "flood_type": "udp", "target": HONEYPOT_ADDR, "rate": rate,
                                 "duration": ticks, "spoof": "uniform_random", "selector": selector}]},
        "ppm": {"enabled": True, "probability": p},
    }
