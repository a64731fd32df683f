"""Topology, addressing, hop-count routing and packet forwarding.

Ground truth about where a packet really came from lives only in the
``GroundTruthLedger`` kept by :class:`Network`. Protocol code (monitors,
honeypot, trace console) only ever sees ``Packet`` headers and the
``PacketRecord`` copies monitors make of them.
"""

from __future__ import annotations

import ipaddress
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .engine import ControlMessage, Engine, Event, PacketArrival
from .errors import AddressCollision, DanglingLink, DuplicateNodeId, TopologyError, UnknownOrigin

log = logging.getLogger(__name__)

ADDRESS_SPACE = 1 << 32


class FloodType(str, Enum):
    LEGIT = "legit"
    TCP_SYN = "tcp_syn"
    TCP_ACK = "tcp_ack"
    TCP_RST = "tcp_rst"
    UDP = "udp"
    ICMP_ECHO_REQ = "icmp_echo_req"
    ICMP_ECHO_REPLY = "icmp_echo_reply"


class NodeKind(str, Enum):
    HOST = "host"
    ROUTER = "router"
    BOT = "bot"
    CNC = "cnc"
    BOTMASTER = "botmaster"
    MONITOR = "monitor"
    HONEYPOT = "honeypot"
    DATACENTER = "datacenter"


def parse_address(value) -> int:
    if isinstance(value, int):
        if not 0 <= value < ADDRESS_SPACE:
            raise ValueError(f"address out of range: {value}")
        return value
    return int(ipaddress.IPv4Address(value))


def format_address(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


@dataclass(frozen=True)
class Subnet:
    prefix: int
    length: int

    @classmethod
    def parse(cls, text: str) -> "Subnet":
        net = ipaddress.IPv4Network(text, strict=False)
        return cls(int(net.network_address), net.prefixlen)

    @property
    def mask(self) -> int:
        return ((1 << self.length) - 1) << (32 - self.length) if self.length else 0

    @property
    def broadcast(self) -> int:
        return self.prefix | (~self.mask & 0xFFFFFFFF)

    def __contains__(self, address: int) -> bool:
        return (address & self.mask) == self.prefix

    def __str__(self) -> str:
        return f"{format_address(self.prefix)}/{self.length}"


@dataclass
class Node:
    id: str
    kind: NodeKind
    address: Optional[int] = None
    responds_to_broadcast: bool = False
    links: list[int] = field(default_factory=list)

    @property
    def is_router(self) -> bool:
        return self.kind == NodeKind.ROUTER


@dataclass(frozen=True)
class Link:
    id: int
    a: str
    b: str
    latency: int = 1
    capacity: Optional[int] = None

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


@dataclass
class Packet:
    packet_id: int
    src: int
    dst: int
    flood_type: FloodType
    size: int
    sent_at: int
    mark: Optional[tuple[str, int]] = None
    selector: Optional[int] = None


@dataclass
class LedgerEntry:
    true_origin: str
    true_path: list[str]
    hop_times: list[int]
    flood_type: FloodType
    dst: int
    outcome: str = "in_flight"
    outcome_at: Optional[int] = None
    redirected: bool = False


class GroundTruthLedger:
    """packet_id -> true origin and hop-by-hop path. Validation code only."""

    def __init__(self):
        self._entries: dict[int, LedgerEntry] = {}

    def open(self, pid: int, origin: str, packet: Packet) -> None:
        self._entries[pid] = LedgerEntry(origin, [], [], packet.flood_type, packet.dst)

    def hop(self, pid: int, node: str, at: int) -> None:
        entry = self._entries[pid]
        entry.true_path.append(node)
        entry.hop_times.append(at)

    def close(self, pid: int, outcome: str, at: int, redirected: bool = False) -> None:
        entry = self._entries[pid]
        entry.outcome = outcome
        entry.outcome_at = at
        entry.redirected = redirected

    def __getitem__(self, pid: int) -> LedgerEntry:
        return self._entries[pid]

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()


class Topology:
    def __init__(self, nodes: dict[str, Node], links: list[Link], subnets: list[tuple[Subnet, str]]):
        self.nodes = nodes
        self.links = links
        self.subnets = subnets
        self.by_address: dict[int, str] = {n.address: n.id for n in nodes.values() if n.address is not None}
        self._adj: dict[str, list[tuple[str, Link]]] = {nid: [] for nid in nodes}
        for link in links:
            self._adj[link.a].append((link.b, link))
            self._adj[link.b].append((link.a, link))
        for nbrs in self._adj.values():
            nbrs.sort(key=lambda item: (item[0], item[1].id))

    def neighbors(self, node: str) -> list[tuple[str, Link]]:
        return self._adj[node]

    def link_between(self, a: str, b: str) -> Optional[Link]:
        best = None
        for nbr, link in self._adj[a]:
            if nbr == b and (best is None or link.latency < best.latency):
                best = link
        return best

    def owner(self, address: int) -> Optional[str]:
        return self.by_address.get(address)

    def broadcast_subnet(self, address: int) -> Optional[tuple[Subnet, str]]:
        for subnet, router in self.subnets:
            if subnet.broadcast == address:
                return subnet, router
        return None

    def subnet_hosts(self, subnet: Subnet) -> list[str]:
        return sorted(
            n.id for n in self.nodes.values()
            if n.address is not None and not n.is_router and n.address in subnet
        )

    def __len__(self) -> int:
        return len(self.nodes)


def build_topology(nodes: Iterable[dict], links: Iterable[dict], subnets: Iterable[dict] = ()) -> Topology:
    """Validate a topology description and build an immutable Topology.

    ``nodes`` entries carry ``id``, ``kind`` and optionally ``address`` and
    ``responds_to_broadcast``; ``links`` carry ``a``, ``b``, ``latency`` and
    optionally ``capacity``; ``subnets`` carry ``prefix`` (CIDR) and ``router``.
    """
    table: dict[str, Node] = {}
    owners: dict[int, str] = {}
    for entry in nodes:
        nid = entry["id"]
        if nid in table:
            raise DuplicateNodeId(nid)
        kind = NodeKind(entry.get("kind", "host"))
        addr = entry.get("address")
        addr = None if addr is None else parse_address(addr)
        if addr is not None:
            if addr in owners:
                raise AddressCollision(f"{format_address(addr)} owned by {owners[addr]} and {nid}")
            owners[addr] = nid
        table[nid] = Node(nid, kind, addr, bool(entry.get("responds_to_broadcast", False)))

    built: list[Link] = []
    for idx, entry in enumerate(links):
        a, b = entry["a"], entry["b"]
        for end in (a, b):
            if end not in table:
                raise DanglingLink(f"link {a}-{b} references unknown node {end}")
        if a == b:
            raise TopologyError(f"self-loop on {a}")
        latency = int(entry.get("latency", 1))
        if latency < 1:
            raise TopologyError(f"link {a}-{b} latency must be >= 1")
        link = Link(idx, a, b, latency, entry.get("capacity"))
        built.append(link)
        table[a].links.append(idx)
        table[b].links.append(idx)

    nets = []
    for entry in subnets:
        router = entry["router"]
        if router not in table:
            raise DanglingLink(f"subnet {entry['prefix']} references unknown router {router}")
        nets.append((Subnet.parse(entry["prefix"]), router))
    return Topology(table, built, nets)


class RoutingTable:
    """Hop-count shortest paths; ties go to the smallest next-hop node id."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.dist: dict[str, dict[str, int]] = {}
        self.next_hop: dict[tuple[str, str], str] = {}
        for dst in sorted(topology.nodes):
            dist = self._bfs(dst)
            self.dist[dst] = dist
            for node, d in dist.items():
                if d == 0:
                    continue
                for nbr, _ in topology.neighbors(node):
                    if dist.get(nbr) == d - 1:
                        self.next_hop[(node, dst)] = nbr
                        break

    def _bfs(self, source: str) -> dict[str, int]:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v, _ in self.topology.neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def route(self, node: str, dst: str) -> Optional[str]:
        return self.next_hop.get((node, dst))

    def path(self, src: str, dst: str) -> Optional[list[str]]:
        if dst not in self.dist or src not in self.dist[dst]:
            return None
        path = [src]
        while path[-1] != dst:
            path.append(self.next_hop[(path[-1], dst)])
        return path

    def latency(self, src: str, dst: str) -> Optional[int]:
        path = self.path(src, dst)
        if path is None:
            return None
        return sum(self.topology.link_between(a, b).latency for a, b in zip(path, path[1:]))

    def hop_count(self, src: str, dst: str) -> Optional[int]:
        return self.dist.get(dst, {}).get(src)


def compute_routes(topology: Topology) -> RoutingTable:
    return RoutingTable(topology)


@dataclass
class Redirect:
    subnet: Subnet
    to_node: Optional[str]  # None blackholes the range
    since: int


Observer = Callable[[Packet, str, Optional[Link], int], None]


class Network:
    """Forwarding plane running as event handlers on an Engine.

    Each packet ends in exactly one outcome: ``delivered`` (possibly
    redirected to a honeypot), ``dropped:no-route``, ``dropped:capacity``
    or ``dropped:blocked``; anything else is in flight. Redirects apply at
    every hop except the destination's owner.
    """

    def __init__(self, engine: Engine, topology: Topology, routes: Optional[RoutingTable] = None):
        self.engine = engine
        self.topology = topology
        self.routes = routes or compute_routes(topology)
        self._ledger = GroundTruthLedger()
        self._next_pid = 0
        self._observers: dict[str, list[Observer]] = {}
        self._receivers: dict[str, Callable[[Packet, Optional[Link]], None]] = {}
        self._broadcast_listeners: dict[str, Callable[[Packet], None]] = {}
        self.redirects: list[Redirect] = []
        self.marker: Optional[Callable[[str, Packet], None]] = None
        self._cap_tick = -1
        self._cap_used: Counter = Counter()
        self.injected: Counter = Counter()
        self.outcomes: Counter = Counter()
        engine.on("packet", self._on_arrival)
        engine.on("broadcast_copy", self._on_broadcast_copy)

    # -- wiring ---------------------------------------------------------
    def add_observer(self, node: str, fn: Observer) -> None:
        self._observers.setdefault(node, []).append(fn)

    def set_receiver(self, node: str, fn: Callable[[Packet, Optional[Link]], None]) -> None:
        self._receivers[node] = fn

    def set_broadcast_listener(self, node: str, fn: Callable[[Packet], None]) -> None:
        self._broadcast_listeners[node] = fn

    def add_redirect(self, subnet: Subnet, to_node: Optional[str], since: int) -> None:
        self.redirects.append(Redirect(subnet, to_node, since))

    def validation_ledger(self) -> GroundTruthLedger:
        """Ground truth. Only metrics and tests may call this."""
        return self._ledger

    def latency(self, a: str, b: str) -> Optional[int]:
        return self.routes.latency(a, b)

    # -- packets --------------------------------------------------------
    def inject_packet(self, origin: str, src: int, dst: int, flood_type: FloodType,
                      size: int = 64, selector: Optional[int] = None) -> int:
        if origin not in self.topology.nodes:
            raise UnknownOrigin(origin)
        self._next_pid += 1
        pid = self._next_pid
        pkt = Packet(pid, src, dst, FloodType(flood_type), size, self.engine.now, selector=selector)
        self._ledger.open(pid, origin, pkt)
        self.injected[pkt.flood_type] += 1
        self.engine.schedule(0, origin, PacketArrival(pkt))
        return pid

    def in_flight(self) -> int:
        """Packets on a link or queued at a node, counted from pending arrival events."""
        return self.engine.count_pending(PacketArrival)

    def conservation(self) -> dict:
        delivered = dropped = 0
        for (outcome, _), n in self.outcomes.items():
            if outcome == "delivered":
                delivered += n
            else:
                dropped += n
        injected = sum(self.injected.values())
        return {
            "injected": injected,
            "delivered": delivered,
            "dropped": dropped,
            "in_flight": self.in_flight(),
        }

    def _finish(self, pkt: Packet, node: str, outcome: str, redirected: bool = False) -> None:
        self._ledger.close(pkt.packet_id, outcome, self.engine.now, redirected)
        self.outcomes[(outcome, pkt.flood_type)] += 1

    def _target(self, node: str, pkt: Packet) -> tuple[Optional[str], bool]:
        now = self.engine.now
        owner = self.topology.owner(pkt.dst)
        if owner == node:
            return owner, False
        for rd in self.redirects:
            if now >= rd.since and pkt.dst in rd.subnet:
                return rd.to_node, True
        if owner is not None:
            return owner, False
        bsub = self.topology.broadcast_subnet(pkt.dst)
        if bsub is not None:
            return bsub[1], False
        return None, False

    def _on_arrival(self, ev: Event) -> None:
        payload: PacketArrival = ev.payload
        pkt = payload.packet
        node = ev.target
        now = self.engine.now
        self._ledger.hop(pkt.packet_id, node, now)
        link = None if payload.via_link is None else self.topology.links[payload.via_link]
        for fn in self._observers.get(node, ()):
            fn(pkt, "incoming", link, now)

        target, redirected = self._target(node, pkt)
        if target is None:
            self._finish(pkt, node, "dropped:blocked" if redirected else "dropped:no-route")
            return
        if target == node:
            self._finish(pkt, node, "delivered", redirected)
            if not redirected and self.topology.owner(pkt.dst) != node:
                self._broadcast(node, pkt)
            else:
                receiver = self._receivers.get(node)
                if receiver is not None:
                    receiver(pkt, link)
            return
        nxt = self.routes.route(node, target)
        if nxt is None:
            self._finish(pkt, node, "dropped:no-route")
            return
        out = self.topology.link_between(node, nxt)
        if out.capacity is not None:
            if now != self._cap_tick:
                self._cap_tick = now
                self._cap_used.clear()
            key = (out.id, node)
            if self._cap_used[key] >= out.capacity:
                self._finish(pkt, node, "dropped:capacity")
                return
            self._cap_used[key] += 1
        if self.marker is not None and self.topology.nodes[node].is_router:
            self.marker(node, pkt)
        for fn in self._observers.get(node, ()):
            fn(pkt, "outgoing", out, now)
        self.engine.schedule(out.latency, nxt, PacketArrival(pkt, out.id))

    def _broadcast(self, router: str, pkt: Packet) -> None:
        subnet, _ = self.topology.broadcast_subnet(pkt.dst)
        for host in self.topology.subnet_hosts(subnet):
            self.engine.schedule(1, host, ControlMessage("broadcast_copy", pkt, router))

    def _on_broadcast_copy(self, ev: Event) -> None:
        listener = self._broadcast_listeners.get(ev.target)
        if listener is not None:
            listener(ev.payload.body)
