"""Small topology and scenario builders shared by the tests."""

from __future__ import annotations

import copy

from floodtrace.engine import Engine
from floodtrace.net import Network, build_topology
from floodtrace.runner import Simulation
from floodtrace.scenario import parse_scenario


def network(nodes, links, subnets=(), seed=0, horizon=None):
    """nodes: list of (id, kind, address|None); links: list of (a, b[, latency[, capacity]])."""
    topo = build_topology(
        [{"id": n[0], "kind": n[1], "address": n[2], **(n[3] if len(n) > 3 else {})} for n in nodes],
        [{"a": l[0], "b": l[1], "latency": l[2] if len(l) > 2 else 1,
          "capacity": l[3] if len(l) > 3 else None} for l in links],
        [{"prefix": p, "router": r} for p, r in subnets],
    )
    eng = Engine(seed, horizon=horizon)
    return eng, Network(eng, topo)


def chain(routers=2, latency=1, **kw):
    """bot - r1 - ... - rN - dst, plus nothing else."""
    names = [f"r{i}" for i in range(1, routers + 1)]
    nodes = [("bot", "host", "10.9.0.5"), ("dst", "host", "10.8.0.9")]
    nodes += [(r, "router", f"10.1.{i}.1") for i, r in enumerate(names, 1)]
    hops = ["bot", *names, "dst"]
    links = [(a, b, latency) for a, b in zip(hops, hops[1:])]
    return network(nodes, links, **kw)


def simulate(data: dict, seed=None, **kw) -> Simulation:
    sim = Simulation(parse_scenario(data), seed, **kw)
    sim.run()
    return sim


def variant(data: dict, **changes) -> dict:
    """Deep copy with dotted-path overrides, e.g. variant(d, **{"itm.blocking": False})."""
    out = copy.deepcopy(data)
    for path, value in changes.items():
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            node = node[int(part)] if isinstance(node, list) else node[part]
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return out


def attack_pids(sim):
    ledger = sim.network.validation_ledger()
    return {pid for pid, e in ledger.items() if e.flood_type.value != "legit" and e.true_origin in sim.botnet.bots}


ACCEPTANCE_LINES: list[str] = []
CONSERVATION = {"runs": 0}


def verdict(n: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
