"""Probabilistic packet marking (node sampling with a distance counter).

Each router overwrites the mark with probability ``p`` (distance reset to
0); otherwise an existing mark's distance is incremented. The victim
orders routers by distance and declares the path complete once every
distance 0..d-1 has been seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .engine import Rng
from .errors import PpmIncomplete
from .net import FloodType, Packet


def ppm_mark(router: str, packet: Packet, p: float, rng: Rng) -> bool:
    """Apply one router's marking step. Returns True if the router wrote a fresh mark."""
    if rng.bernoulli(p):
        packet.mark = (router, 0)
        return True
    if packet.mark is not None:
        packet.mark = (packet.mark[0], packet.mark[1] + 1)
    return False


class PpmMarker:
    """Network hook that marks packets at every router they leave."""

    def __init__(self, probability: float, rng: Rng):
        if not 0.0 <= probability <= 1.0:
            raise ValueError("marking probability must be within [0, 1]")
        self.probability = probability
        self.rng = rng
        self.writes = 0

    def __call__(self, router: str, packet: Packet) -> None:
        if ppm_mark(router, packet, self.probability, self.rng):
            self.writes += 1


@dataclass
class PpmResult:
    path: list[Optional[str]]  # index = distance from the victim
    packets_consumed: int
    complete: bool


def ppm_reconstruct(marks: Iterable[Optional[tuple[str, int]]], path_length: int) -> PpmResult:
    """Consume marks in arrival order until every hop distance is witnessed.

    Raises :class:`PpmIncomplete` (with the partial result attached) when
    the marks run out first.
    """
    if path_length <= 0:
        return PpmResult([], 0, True)
    seen: dict[int, str] = {}
    consumed = 0
    for mark in marks:
        consumed += 1
        if mark is not None:
            router, dist = mark
            if dist < path_length:
                seen.setdefault(dist, router)
        if len(seen) == path_length:
            return PpmResult([seen[d] for d in range(path_length)], consumed, True)
    partial = PpmResult([seen.get(d) for d in range(path_length)], consumed, False)
    raise PpmIncomplete(f"{len(seen)} of {path_length} hops witnessed after {consumed} packets", partial)


def packets_to_reconstruct(path_length: int, p: float, rng: Rng, limit: int = 1_000_000) -> Optional[int]:
    """Send packets along a ``path_length``-router chain until reconstruction completes."""
    routers = [f"r{d}" for d in range(path_length - 1, -1, -1)]  # farthest first

    def marks():
        for i in range(limit):
            pkt = Packet(i, 0, 0, FloodType.UDP, 0, 0)
            for r in routers:
                ppm_mark(r, pkt, p, rng)
            yield pkt.mark

    try:
        return ppm_reconstruct(marks(), path_length).packets_consumed
    except PpmIncomplete:
        return None


def expected_marked_fraction(path_length: int, p: float) -> float:
    return 1.0 - (1.0 - p) ** path_length


def savage_bound(path_length: int, p: float) -> float:
    """ln(d) / (p (1-p)^(d-1)): expected-packets ceiling for the weakest hop."""
    return math.log(path_length) / (p * (1.0 - p) ** (path_length - 1))
