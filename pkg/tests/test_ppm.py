import math

import numpy as np
import pytest

from floodtrace.engine import Rng
from floodtrace.errors import PpmIncomplete
from floodtrace.net import FloodType, Packet
from floodtrace.ppm import (
    PpmMarker, expected_marked_fraction, packets_to_reconstruct, ppm_mark, ppm_reconstruct, savage_bound,
)
from oracles import ppm_packets_to_reconstruct


def traverse(d, p, rng, n):
    """Marks seen at the victim after ``n`` packets cross routers r{d-1} .. r0."""
    routers = [f"r{k}" for k in range(d - 1, -1, -1)]
    marks = []
    for i in range(n):
        pkt = Packet(i, 0, 0, FloodType.UDP, 0, 0)
        for r in routers:
            ppm_mark(r, pkt, p, rng)
        marks.append(pkt.mark)
    return marks


def test_p_one_only_last_hop():
    assert set(traverse(5, 1.0, Rng(1), 200)) == {("r0", 0)}


def test_p_zero_never_marks():
    assert set(traverse(5, 0.0, Rng(1), 200)) == {None}


def test_distance_distribution_matches_recurrence():
    d, p, n = 5, 0.04, 100_000
    marks = traverse(d, p, Rng(2), n)
    counts = np.zeros(d)
    for m in marks:
        if m is not None:
            assert m[0] == f"r{m[1]}"  # router k hops away reports distance k
            counts[m[1]] += 1
    for k in range(d):
        q = p * (1 - p) ** k
        assert abs(counts[k] - n * q) <= 3 * math.sqrt(n * q * (1 - q))


def test_reconstruct_trivial_and_incomplete():
    assert ppm_reconstruct([("r0", 0)], 1).packets_consumed == 1
    with pytest.raises(PpmIncomplete) as info:
        ppm_reconstruct([("r0", 0)], 3)
    assert info.value.partial.path == ["r0", None, None]
    assert not info.value.partial.complete
    for d in (2, 3, 7):
        with pytest.raises(PpmIncomplete):
            ppm_reconstruct(traverse(d, 0.9, Rng(d), 1), d)


def test_reconstruct_orders_by_distance():
    res = ppm_reconstruct([None, ("r2", 2), ("r0", 0), ("r2", 2), ("r1", 1), ("r0", 0)], 3)
    assert res.path == ["r0", "r1", "r2"] and res.packets_consumed == 5


def test_converges_to_true_path():
    for d in range(1, 7):
        for seed in range(5):
            res = ppm_reconstruct(traverse(d, 0.04, Rng(100 * d + seed), 10_000), d)
            assert res.path == [f"r{k}" for k in range(d)]


def test_mean_packets_close_to_monte_carlo():
    d, p, trials = 10, 0.04, 200
    rng = Rng(10)
    ours = [packets_to_reconstruct(d, p, rng) for _ in range(trials)]
    oracle = ppm_packets_to_reconstruct(d, p, np.random.default_rng(10), trials)
    assert abs(np.mean(ours) - oracle.mean()) <= 0.2 * oracle.mean()


def test_marker_counts_writes():
    marker = PpmMarker(0.5, Rng(4))
    pkt = Packet(1, 0, 0, FloodType.UDP, 0, 0)
    for _ in range(1000):
        marker("r", pkt)
    assert abs(marker.writes - 500) <= 3 * math.sqrt(250)
    with pytest.raises(ValueError):
        PpmMarker(1.5, Rng(1))


def test_closed_forms():
    assert expected_marked_fraction(5, 0.04) == pytest.approx(1 - 0.96**5)
    assert savage_bound(10, 0.04) == pytest.approx(83.1, abs=0.1)
