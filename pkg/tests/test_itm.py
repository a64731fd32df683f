import random

import pytest

from floodtrace.errors import AlreadyBlocked, RejectedBlocked, RejectedUnregistered, UnknownMonitor
from floodtrace.itm import DataCenter, Mode, Monitor, Requester, Status, detect_centralized, first_exceeding
from floodtrace.net import FloodType, Packet, Subnet, parse_address
from helpers import network

WATCHED = "172.16.0.0/24"


def world(n_monitors=1, mode=Mode.DISTRIBUTED, thresholds=None, global_threshold=None, blocking=True,
          bucket_width=10, window=100, report_period=50, horizon=None):
    """src -> r -> itm{i} hosts (each in 172.16.{i}.0/24); dc and hp on r."""
    nodes = [("src", "host", "10.0.0.2"), ("r", "router", "10.0.0.1"), ("dc", "datacenter", "10.0.0.3"),
             ("hp", "honeypot", "10.250.0.2")]
    links = [("src", "r"), ("dc", "r"), ("hp", "r")]
    for i in range(n_monitors):
        nodes.append((f"itm{i}", "monitor", f"172.16.{i}.10"))
        links.append((f"itm{i}", "r"))
    eng, net = network(nodes, links, horizon=horizon)
    thresholds = thresholds or [100] * n_monitors
    gt = min(thresholds) if global_threshold is None else global_threshold
    dc = DataCenter(eng, net, "dc", mode, gt, blocking, "hp")
    mons = []
    for i in range(n_monitors):
        m = Monitor(f"m{i}", f"itm{i}", Subnet.parse(f"172.16.{i}.0/24"), thresholds[i], bucket_width, window,
                    report_period, mode)
        m.attach(net)
        dc.register(m)
        mons.append(m)
    return eng, net, dc, mons


def flood(eng, net, at, n, monitor=0, flood_type=FloodType.UDP):
    dst = parse_address(f"172.16.{monitor}.10")
    eng.call_at(at, lambda: [net.inject_packet("src", 1, dst, flood_type) for _ in range(n)])


def test_record_traffic_counts_watched_destinations():
    m = Monitor("m", "itm", Subnet.parse(WATCHED), 100)
    inside = Packet(1, 5, parse_address("172.16.0.9"), FloodType.UDP, 40, 0)
    outside = Packet(2, 5, parse_address("10.0.0.9"), FloodType.UDP, 40, 0)
    assert m.record_traffic(inside, "incoming", None, 3)
    assert not m.record_traffic(outside, "incoming", None, 3)
    assert not m.record_traffic(inside, "outgoing", None, 3)
    assert m.counts() == {0: 1}


def test_monitor_only_sees_its_own_node():
    eng, net, dc, (m0, m1) = world(2)
    flood(eng, net, 1, 5, monitor=0)
    eng.run(10)
    assert sum(m0.counts().values()) == 5 and m1.counts() == {}


def test_bucket_count_matches_ledger():
    eng, net, dc, (m,) = world(1, thresholds=[10**6])
    flood(eng, net, 21, 150)
    eng.run(40)
    ledger = net.validation_ledger()
    arrivals = [e.hop_times[-1] for _, e in ledger.items() if e.true_path[-1] == "itm0"]
    assert len(arrivals) == 150
    assert m.counts() == {(arrivals[0] // 10) * 10: 150}


def test_periodic_submissions_and_rejection_after_block():
    eng, net, dc, (m,) = world(1, thresholds=[10**6], horizon=210)
    eng.call_at(120, lambda: dc.block_monitor("m0"))
    eng.run(210)
    sent = [s["sent_at"] for s in dc.submissions]
    assert sent == [50, 100, 150, 200]
    assert [s["accepted"] for s in dc.submissions] == [True, True, False, False]
    assert {s["reason"] for s in dc.submissions if not s["accepted"]} == {"RejectedBlocked"}
    with pytest.raises(RejectedBlocked):
        dc.submit_logs("m0", 0, [])


def test_unregistered_monitor_is_rejected():
    eng, net, dc, (m,) = world(1)
    dc.registered.discard("m0")
    with pytest.raises(RejectedUnregistered):
        dc.submit_logs("m0", 0, [])


def test_collected_logs_reconcile_with_monitor():
    eng, net, dc, (m,) = world(1, thresholds=[10**6], horizon=400)
    rnd = random.Random(4)
    for t in range(0, 300, 7):
        flood(eng, net, t, rnd.randint(0, 9))
    eng.run(400)
    collected = {s: b.count for s, b in dc.collected_logs["m0"].items()}
    monitor_side = {s: c for s, c in m.counts().items() if s + 10 <= 350}
    assert collected == monitor_side


def test_centralized_threshold_boundary():
    logs = {"a": {0: 4, 10: 2}, "b": {0: 6, 10: 9}}
    thresholds = {"a": 5, "b": 5}
    # aggregates: bucket 0 -> 10 (== threshold, no alarm), bucket 10 -> 11
    alarms = detect_centralized(logs, 10, thresholds)
    assert [(a.bucket, a.aggregate, a.attacked) for a in alarms] == [(10, 11, ("b",))]
    assert detect_centralized(logs, 11, thresholds) == []


def test_three_monitors_flood_on_second_only():
    eng, net, dc, mons = world(3, mode=Mode.CENTRALIZED, thresholds=[20, 20, 20], global_threshold=20)
    flood(eng, net, 11, 30, monitor=1)
    flood(eng, net, 11, 5, monitor=0)
    flood(eng, net, 11, 5, monitor=2)
    eng.run(120)
    assert [a["monitors"] for a in dc.alarms] == [["m1"]]
    assert dc.block_list.keys() == {"m1"}
    ledger = net.validation_ledger()
    per_node = {}
    for _, e in ledger.items():
        if e.true_path[-1].startswith("itm") and e.hop_times[-1] < 20:
            per_node[e.true_path[-1]] = per_node.get(e.true_path[-1], 0) + 1
    assert per_node == {"itm0": 5, "itm1": 30, "itm2": 5}


@pytest.mark.parametrize("n,attacked", [(150, True), (100, False), (101, True)])
def test_distributed_strict_threshold(n, attacked):
    eng, net, dc, (m,) = world(1, thresholds=[100], blocking=False)
    flood(eng, net, 5, n)
    eng.run(30)
    assert (m.status == Status.ATTACKED) is attacked
    assert bool(dc.alarms) is attacked
    assert m.detect_distributed(eng.now) is False


def test_first_exceeding():
    assert first_exceeding({0: 3, 10: 8, 20: 9}, 7) == 10
    assert first_exceeding({0: 3}, 3) is None


def test_modes_agree_on_identical_traffic():
    for seed in range(20):
        rnd = random.Random(seed)
        plan = [(rnd.randrange(200), rnd.randrange(3), rnd.randint(1, 12)) for _ in range(25)]
        outcome = {}
        for mode in (Mode.DISTRIBUTED, Mode.CENTRALIZED):
            eng, net, dc, mons = world(3, mode=mode, thresholds=[15] * 3, blocking=False, horizon=400)
            for at, mon, n in plan:
                flood(eng, net, at, n, monitor=mon)
            eng.run(400)
            outcome[mode] = sorted(dc.reported_attacked)
        assert outcome[Mode.DISTRIBUTED] == outcome[Mode.CENTRALIZED]


def test_block_redirects_later_packets_only():
    eng, net, dc, (m,) = world(1, thresholds=[10**6])
    flood(eng, net, 1, 3)
    eng.call_at(10, lambda: dc.block_monitor("m0"))
    flood(eng, net, 12, 4)
    eng.run(30)
    ends = [e.true_path[-1] for _, e in net.validation_ledger().items()]
    assert ends == ["itm0"] * 3 + ["hp"] * 4
    assert m.record_traffic(Packet(99, 1, parse_address("172.16.0.10"), FloodType.UDP, 1, 0), "incoming", None, 30) is False
    with pytest.raises(AlreadyBlocked):
        dc.block_monitor("m0")
    with pytest.raises(UnknownMonitor):
        dc.block_monitor("nope")


def test_query_priority_and_blocked_status():
    eng, net, dc, (m,) = world(1, thresholds=[10**6])
    eng.call_at(5, lambda: (dc.enqueue_query(Requester.PUBLIC, "m0", (0, 5)),
                            dc.enqueue_query(Requester.PRIVATE, "m0", (0, 5))))
    eng.call_at(20, lambda: dc.block_monitor("m0"))
    eng.call_at(25, lambda: dc.enqueue_query(Requester.PUBLIC, "m0", (0, 25)))
    eng.run(40)
    log = dc.service_log
    assert [r.query.requester for r in log[:2]] == [Requester.PRIVATE, Requester.PUBLIC]
    assert log[2].report.status == Status.BLOCKED


def test_private_queries_always_win_when_co_pending():
    eng, net, dc, _ = world(1)
    dc.query_service_time = 3
    rnd = random.Random(1)
    for i in range(100):
        kind = rnd.choice([Requester.PUBLIC, Requester.PRIVATE])
        eng.call_at(rnd.randrange(100), lambda kind=kind: dc.enqueue_query(kind, "m0", (0, 10)))
    eng.run(1000)
    log = dc.service_log
    assert len(log) == 100
    for pub in (r for r in log if r.query.requester == Requester.PUBLIC):
        for priv in (r for r in log if r.query.requester == Requester.PRIVATE):
            if priv.query.enqueued_at < pub.served_at:  # waiting when pub was picked
                assert priv.served_at < pub.served_at
