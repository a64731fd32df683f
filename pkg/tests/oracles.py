"""Independent reference implementations used to check the simulator.

None of these import simulator internals beyond plain data; they are
written differently on purpose (networkx, numpy, brute force).
"""

from __future__ import annotations

import math
from collections import Counter

import networkx as nx
import numpy as np


def hop_distances(nodes, links):
    """All-pairs hop counts via networkx."""
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(links)
    return dict(nx.all_pairs_shortest_path_length(g))


def stable_order(schedule_log):
    """schedule_log: list of (fire_at, label) in scheduling order -> labels in dispatch order."""
    indexed = list(enumerate(schedule_log))
    return [label for _, (_, label) in sorted(indexed, key=lambda item: item[1][0])]


def bucket_counts(times, width):
    counts = np.bincount(np.asarray(times, dtype=np.int64) // width) if len(times) else np.zeros(0, int)
    return {int(i) * width: int(c) for i, c in enumerate(counts) if c}


def any_bucket_exceeds(times, width, threshold):
    return any(c > threshold for c in bucket_counts(times, width).values())


def ppm_marking_process(n_packets, d, p, rng):
    """Distance reported at the victim for each packet (-1 = unmarked).

    Column k is the router k hops before the victim; the surviving mark
    comes from the writer closest to the victim.
    """
    writes = rng.random((n_packets, d)) < p
    return np.where(writes.any(axis=1), np.argmax(writes, axis=1), -1)


def ppm_packets_to_reconstruct(d, p, rng, trials, batch=4096):
    """Monte-Carlo packets-until-every-distance-seen, vectorised per trial."""
    out = []
    for _ in range(trials):
        seen = np.zeros(d, bool)
        total = 0
        while True:
            dist = ppm_marking_process(batch, d, p, rng)
            for i, x in enumerate(dist):
                if x >= 0 and not seen[x]:
                    seen[x] = True
                    if seen.all():
                        out.append(total + i + 1)
                        break
            else:
                total += batch
                continue
            break
    return np.asarray(out)


def binomial_sigma(n, p):
    return math.sqrt(n * p * (1 - p))


def linear_scan(events, lo, hi):
    return [e.serial for e in events if lo <= e.initiated_at <= hi]


def dedup_by_signature(captures, window):
    return Counter((c.dst, c.flood_type, (c.seen_at // window) * window) for c in captures)
