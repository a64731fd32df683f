"""Botnet lifecycle, C&C command distribution, flood generation and prevention.

The C&C channel is an abstract publish/subscribe channel: commands are
pushed to members with the routed latency from the C&C server.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .engine import ControlMessage, Engine, Event, Rng
from .errors import ChannelDown, InvalidTransition, NoBots, NotController
from .net import ADDRESS_SPACE, FloodType, Network, Subnet

log = logging.getLogger(__name__)


class Phase(str, Enum):
    VULNERABLE = "vulnerable"
    COMPROMISED = "compromised"
    JOINED = "joined"
    ATTACKING = "attacking"
    UPDATED = "updated"
    DISABLED = "disabled"


# Vulnerable covers herder config / DDNS / static IP; Compromised covers infect + spread.
ALLOWED = {
    Phase.VULNERABLE: {Phase.COMPROMISED},
    Phase.COMPROMISED: {Phase.JOINED},
    Phase.JOINED: {Phase.ATTACKING, Phase.UPDATED},
    Phase.ATTACKING: {Phase.JOINED, Phase.UPDATED},
    Phase.UPDATED: {Phase.ATTACKING, Phase.JOINED},
    Phase.DISABLED: set(),
}


def valid_history(phases: Iterable[Phase]) -> bool:
    seq = list(phases)
    if not seq or seq[0] != Phase.VULNERABLE:
        return False
    for a, b in zip(seq, seq[1:]):
        if b != Phase.DISABLED and b not in ALLOWED[a]:
            return False
        if a == Phase.DISABLED:
            return False
    return True


class AttackType(str, Enum):
    TCP_SYN = "tcp_syn"
    TCP_ACK = "tcp_ack"
    UDP = "udp"
    ICMP_ECHO_REQ = "icmp_echo_req"
    SMURF = "smurf"


class Spoof(str, Enum):
    NONE = "none"
    UNIFORM_RANDOM = "uniform_random"


PACKET_SIZES = {
    FloodType.LEGIT: 512,
    FloodType.TCP_SYN: 60,
    FloodType.TCP_ACK: 60,
    FloodType.TCP_RST: 60,
    FloodType.UDP: 512,
    FloodType.ICMP_ECHO_REQ: 1024,
    FloodType.ICMP_ECHO_REPLY: 1024,
}


@dataclass(frozen=True)
class AttackCommand:
    flood_type: AttackType
    target: int
    rate: int
    duration: int
    spoof: Spoof = Spoof.NONE
    amplifier: Optional[Subnet] = None
    selector: Optional[int] = None

    def __post_init__(self):
        if self.rate < 1 or self.duration < 1:
            raise ValueError("rate and duration must be >= 1")
        if self.flood_type == AttackType.SMURF and self.amplifier is None:
            raise ValueError("smurf commands need an amplifier subnet")


@dataclass
class BotState:
    node: str
    phase: Phase = Phase.VULNERABLE
    poll_interval: int = 5
    history: list[tuple[int, Phase]] = field(default_factory=list)
    active_floods: int = 0
    floods_started: int = 0
    packets_sent: int = 0
    first_packet_at: Optional[int] = None
    last_packet_at: Optional[int] = None
    noticed_shutdown_at: Optional[int] = None


@dataclass
class CncChannel:
    channel_id: int
    server: str
    controller: str
    members: set[str] = field(default_factory=set)
    join_times: dict[str, int] = field(default_factory=dict)
    command_log: list[tuple[int, AttackCommand]] = field(default_factory=list)
    active: bool = True
    shutdown_at: Optional[int] = None


@dataclass
class InfiltrationAgent:
    node: str
    joined_channel: Optional[int] = None
    joined_at: Optional[int] = None
    observed_commands: list[tuple[int, AttackCommand]] = field(default_factory=list)


@dataclass
class Delivery:
    bot: str
    issued_at: int
    delivered_at: int
    command: AttackCommand


class Botnet:
    """Bot-herder state: bots, one C&C channel, and the flood processes."""

    def __init__(self, engine: Engine, network: Network, botmaster: str, metadata: Optional[dict] = None):
        self.engine = engine
        self.network = network
        self.botmaster = botmaster
        self.metadata = dict(metadata or {})
        self.bots: dict[str, BotState] = {}
        self.channel: Optional[CncChannel] = None
        self.agents: dict[str, InfiltrationAgent] = {}
        self.deliveries: list[Delivery] = []
        self.compromised: set[str] = set()
        self.attack_packets = 0
        engine.on("cnc_command", self._on_command)
        engine.on("cnc_update", self._on_update)

    # -- lifecycle ------------------------------------------------------
    def _transition(self, bot: BotState, phase: Phase) -> None:
        if phase != Phase.DISABLED and phase not in ALLOWED[bot.phase]:
            raise InvalidTransition(f"{bot.node}: {bot.phase.value} -> {phase.value}")
        bot.phase = phase
        bot.history.append((self.engine.now, phase))

    def add_host(self, node: str, poll_interval: int = 5) -> BotState:
        bot = self.bots.get(node)
        if bot is None:
            bot = self.bots[node] = BotState(node, poll_interval=poll_interval)
            bot.history.append((self.engine.now, Phase.VULNERABLE))
        return bot

    def discover_vulnerable_hosts(self, candidates: Iterable[str], scan_rate: int,
                                  vulnerability_prob: float, rng: Optional[Rng] = None,
                                  poll_interval: int = 5) -> set[str]:
        """Schedule scans of ``candidates`` at ``scan_rate`` hosts per tick.

        Returns the live set of compromised hosts; it fills in as the scan
        events are dispatched.
        """
        if scan_rate < 1:
            raise ValueError("scan_rate must be >= 1")
        rng = rng or self.engine.stream("scan")
        for i, node in enumerate(sorted(candidates)):
            self.add_host(node, poll_interval)

            def scan(node=node):
                bot = self.bots[node]
                if bot.phase == Phase.VULNERABLE and rng.bernoulli(vulnerability_prob):
                    self._transition(bot, Phase.COMPROMISED)
                    self.compromised.add(node)

            self.engine.call_later(i // scan_rate, scan, "scan", node)
        return self.compromised

    def establish_botnet(self, cnc: str) -> CncChannel:
        if cnc not in self.network.topology.nodes:
            raise KeyError(cnc)
        joining = sorted(n for n, b in self.bots.items() if b.phase == Phase.COMPROMISED)
        if not joining:
            raise NoBots("no compromised hosts to join the channel")
        if self.channel is None:
            self.channel = CncChannel(1, cnc, self.botmaster)
        for node in joining:
            self._transition(self.bots[node], Phase.JOINED)
            self.channel.members.add(node)
            self.channel.join_times[node] = self.engine.now
        return self.channel

    def _check_channel(self, controller: str) -> CncChannel:
        ch = self.channel
        if ch is None or not ch.active:
            raise ChannelDown("command and control channel is down")
        if controller != ch.controller:
            raise NotController(controller)
        return ch

    def issue_command(self, botmaster: str, command: AttackCommand) -> list[int]:
        ch = self._check_channel(botmaster)
        now = self.engine.now
        ch.command_log.append((now, command))
        ids = []
        for member in sorted(ch.members):
            lat = self.network.latency(ch.server, member)
            if lat is None:
                log.warning("member %s unreachable from C&C %s", member, ch.server)
                continue
            ids.append(self.engine.schedule(lat, member, ControlMessage("cnc_command", (now, command), ch.server)))
        return ids

    def issue_update(self, botmaster: str) -> None:
        ch = self._check_channel(botmaster)
        for member in sorted(ch.members):
            if member in self.agents:
                continue
            lat = self.network.latency(ch.server, member)
            if lat is not None:
                self.engine.schedule(lat, member, ControlMessage("cnc_update", self.engine.now, ch.server))

    # messages already sent before a shutdown are still delivered
    def _on_update(self, ev: Event) -> None:
        if self.channel is None:
            return
        bot = self.bots[ev.target]
        if bot.phase in (Phase.JOINED, Phase.ATTACKING):
            self._transition(bot, Phase.UPDATED)

    def _on_command(self, ev: Event) -> None:
        if self.channel is None:
            return
        issued_at, command = ev.payload.body
        node = ev.target
        agent = self.agents.get(node)
        if agent is not None:
            agent.observed_commands.append((issued_at, command))
            return
        bot = self.bots[node]
        if bot.phase == Phase.DISABLED:
            return
        self.deliveries.append(Delivery(node, issued_at, self.engine.now, command))
        self.generate_flood(node, command)

    # -- traffic --------------------------------------------------------
    def generate_flood(self, node: str, command: AttackCommand, rng: Optional[Rng] = None) -> None:
        """Emit ``rate`` packets per tick for ``duration`` ticks starting now."""
        bot = self.bots[node]
        if bot.phase != Phase.ATTACKING:
            self._transition(bot, Phase.ATTACKING)
        bot.active_floods += 1
        bot.floods_started += 1
        rng = rng or self.engine.stream(f"spoof:{node}:{bot.floods_started}")
        start = self.engine.now

        def tick():
            self._emit(bot, command, rng)
            if self.engine.now - start + 1 < command.duration:
                self.engine.call_later(1, tick, "flood", node)
            else:
                bot.active_floods -= 1
                if bot.active_floods == 0 and bot.phase == Phase.ATTACKING:
                    self._transition(bot, Phase.JOINED)

        tick()

    def _emit(self, bot: BotState, command: AttackCommand, rng: Rng) -> None:
        own = self.network.topology.nodes[bot.node].address
        for _ in range(command.rate):
            if command.flood_type == AttackType.SMURF:
                smurf_emit(self.network, bot.node, command.target, command.amplifier)
            else:
                ftype = FloodType(command.flood_type.value)
                src = rng.randbelow(ADDRESS_SPACE) if command.spoof == Spoof.UNIFORM_RANDOM else own
                self.network.inject_packet(bot.node, src, command.target, ftype,
                                           PACKET_SIZES[ftype], selector=command.selector)
            self.attack_packets += 1
            bot.packets_sent += 1
            if bot.first_packet_at is None:
                bot.first_packet_at = self.engine.now
            bot.last_packet_at = self.engine.now

    # -- prevention -----------------------------------------------------
    def infiltrate(self, agent_node: str) -> InfiltrationAgent:
        ch = self.channel
        if ch is None or not ch.active:
            raise ChannelDown("cannot infiltrate an inactive channel")
        agent = InfiltrationAgent(agent_node, ch.channel_id, self.engine.now)
        self.agents[agent_node] = agent
        ch.members.add(agent_node)
        ch.join_times[agent_node] = self.engine.now
        return agent

    def shutdown_cnc(self) -> None:
        ch = self.channel
        if ch is None or not ch.active:
            return
        ch.active = False
        ch.shutdown_at = self.engine.now
        for node in sorted(ch.members):
            bot = self.bots.get(node)
            if bot is None:
                continue
            poll = max(1, bot.poll_interval)
            notice = -(-ch.shutdown_at // poll) * poll
            bot.noticed_shutdown_at = notice

    def expected_attack_packets(self, until: int) -> int:
        """rate x duration per delivered command, cut at ``until`` (inclusive)."""
        total = 0
        for d in self.deliveries:
            ticks = max(0, min(d.command.duration, until - d.delivered_at + 1))
            total += ticks * d.command.rate
        return total


def smurf_emit(network: Network, bot: str, victim: int, amplifier: Subnet) -> int:
    """One spoofed ECHO_REQUEST to the amplifier's directed broadcast address."""
    return network.inject_packet(bot, victim, amplifier.broadcast, FloodType.ICMP_ECHO_REQ,
                                 PACKET_SIZES[FloodType.ICMP_ECHO_REQ])


def enable_amplifiers(network: Network) -> list[str]:
    """Make every host flagged ``responds_to_broadcast`` answer broadcast echoes."""
    hosts = []
    for node in sorted(network.topology.nodes.values(), key=lambda n: n.id):
        if not node.responds_to_broadcast or node.address is None:
            continue

        def reply(pkt, node=node):
            if pkt.flood_type == FloodType.ICMP_ECHO_REQ:
                network.inject_packet(node.id, node.address, pkt.src, FloodType.ICMP_ECHO_REPLY,
                                      PACKET_SIZES[FloodType.ICMP_ECHO_REPLY])

        network.set_broadcast_listener(node.id, reply)
        hosts.append(node.id)
    return hosts


class LegitTraffic:
    """Background Poisson traffic; each host draws from its own substream."""

    def __init__(self, engine: Engine, network: Network, hosts: Iterable[str], rate: float,
                 dst_pool: Iterable[int], start: int = 0, stop: Optional[int] = None):
        self.engine = engine
        self.network = network
        self.hosts = sorted(hosts)
        self.rate = rate
        self.dst_pool = list(dst_pool)
        self.stop = stop
        self.sent = 0
        self._rngs = {h: engine.stream(f"legit:{h}") for h in self.hosts}
        if rate > 0 and self.dst_pool and self.hosts:
            engine.call_at(start, self._tick, "legit")

    def _tick(self) -> None:
        now = self.engine.now
        for host in self.hosts:
            rng = self._rngs[host]
            src = self.network.topology.nodes[host].address
            for _ in range(rng.poisson(self.rate)):
                dst = self.dst_pool[rng.randbelow(len(self.dst_pool))]
                self.network.inject_packet(host, src, dst, FloodType.LEGIT, PACKET_SIZES[FloodType.LEGIT])
                self.sent += 1
        if self.stop is None or now + 1 <= self.stop:
            if self.engine.horizon is None or now + 1 <= self.engine.horizon:
                self.engine.call_later(1, self._tick, "legit")


def generate_legit_traffic(engine: Engine, network: Network, host: str, rate: float,
                           dst_pool: Iterable[int], stop: Optional[int] = None) -> LegitTraffic:
    return LegitTraffic(engine, network, [host], rate, dst_pool, engine.now, stop)
