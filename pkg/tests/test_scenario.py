import json
from pathlib import Path

import pytest

from floodtrace.errors import ParseError, ScenarioValidationError
from floodtrace.scenario import load_scenario, loads_scenario, parse_scenario
from helpers import variant

ROOT = Path(__file__).resolve().parent.parent
MINIMAL = {"schema": 1, "name": "m", "duration": 10, "topology": {"nodes": [{"id": "a"}]}}


def base():
    return json.loads((ROOT / "scenarios" / "canonical.json").read_text())


def constraint_of(data):
    with pytest.raises(ScenarioValidationError) as info:
        parse_scenario(data)
    return info.value.constraint


def test_minimal_file_gets_defaults():
    sc = parse_scenario(MINIMAL)
    n = sc.normalized()
    assert n["schema"] == 1 and n["seed"] == 0
    assert n["topology"]["nodes"][0] == {"id": "a", "kind": "host", "address": None, "responds_to_broadcast": False}
    assert n["ppm"] == {"enabled": False, "probability": 0.04}
    assert n["traceback"] == {"enabled": True, "match_slack": 32}
    assert n["itm"] is None and n["botnet"] is None and n["queries"] == []


def test_golden_snapshot():
    golden = json.loads((ROOT / "tests" / "golden" / "canonical.normalized.json").read_text())
    assert load_scenario(ROOT / "scenarios" / "canonical.json").normalized() == golden


def test_normalized_round_trips():
    sc = load_scenario(ROOT / "scenarios" / "canonical.json")
    assert parse_scenario(sc.normalized()).normalized() == sc.normalized()


def test_every_shipped_scenario_validates():
    files = sorted((ROOT / "scenarios").glob("*.json"))
    assert len(files) == 7
    for f in files:
        load_scenario(f)


def test_honeypot_address_in_dst_pool_rejected():
    data = base()
    data["legit"]["dst_pool"].append("10.250.0.2")
    assert constraint_of(data) == "honeypot-excluded-from-legit"


def test_legit_destination_inside_watched_range_rejected():
    data = base()
    data["legit"]["dst_pool"].append("172.16.0.99")
    assert constraint_of(data) == "legit-avoids-monitored-ranges"


@pytest.mark.parametrize("path,value,constraint", [
    ("victim", "ghost", "unknown-node"),
    ("itm.datacenter", "ghost", "unknown-node"),
    ("itm.monitors.0.attach", "ghost", "unknown-node"),
    ("itm.monitors.1.id", "m-victim", "unique-monitor-ids"),
    ("itm.monitors.0.range", "172.16.0.0/33", "address-format"),
    ("botnet.candidates.0", "r00", "candidates-are-hosts"),
    ("botnet.commands.0.target", "1.2.3", "address-format"),
    ("botnet.commands.0.rate", 0, "greater_than_equal"),
    ("duration", 0, "greater_than_equal"),
    ("schema", 2, "literal_error"),
])
def test_constraint_violations(path, value, constraint):
    assert constraint_of(variant(base(), **{path: value})) == constraint


def test_unknown_fields_rejected():
    assert constraint_of({**MINIMAL, "extra": 1}) == "extra_forbidden"
    data = base()
    data["honeypot"]["lure"] = "x"
    with pytest.raises(ScenarioValidationError) as info:
        parse_scenario(data)
    assert info.value.errors[0]["field"] == "honeypot.lure"


def test_smurf_needs_declared_amplifier():
    data = variant(base(), **{"botnet.commands.0.flood_type": "smurf"})
    assert constraint_of(data) == "smurf-amplifier"
    data["botnet"]["commands"][0]["amplifier"] = "10.99.0.0/24"
    assert constraint_of(data) == "smurf-amplifier"
    data["botnet"]["commands"][0]["amplifier"] = "10.0.3.0/24"
    parse_scenario(data)


def test_cross_section_requirements():
    assert constraint_of({**MINIMAL, "queries": [{"at": 1, "requester": "public", "monitor": "x"}]}) == "queries-need-itm"
    assert constraint_of({**MINIMAL, "prevention": {"agent": "a"}}) == "prevention-needs-botnet"
    dup = {**MINIMAL, "topology": {"nodes": [{"id": "a"}, {"id": "a"}]}}
    assert constraint_of(dup) is not None


def test_parse_error_reports_position():
    with pytest.raises(ParseError) as info:
        loads_scenario('{\n  "schema": 1,\n  "name": }')
    assert (info.value.line, info.value.column) == (3, 11)
    with pytest.raises(ParseError):
        loads_scenario("[1, 2]")
