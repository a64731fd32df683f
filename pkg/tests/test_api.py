import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from floodtrace import api
from floodtrace.errors import SimError
from floodtrace.generators import chain_scenario

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def client():
    return TestClient(api.create_app(), raise_server_exceptions=False)


def scenario(name="canonical"):
    return json.loads((ROOT / "scenarios" / f"{name}.json").read_text())


def test_health(client):
    assert client.get("/health").json()["status"] == "ok"


def test_validate_returns_normalized(client):
    resp = client.post("/scenarios/validate", json={"scenario": scenario()})
    assert resp.status_code == 200
    body = resp.json()
    assert body["valid"] and body["scenario"]["ppm"] == {"enabled": False, "probability": 0.04}


def test_validate_reports_constraint(client):
    data = scenario()
    data["legit"]["dst_pool"].append("10.250.0.2")
    resp = client.post("/scenarios/validate", json={"scenario": data})
    assert resp.status_code == 422
    body = resp.json()
    assert body["error"] == "ScenarioValidationError"
    assert body["constraint"] == "honeypot-excluded-from-legit"
    assert body["errors"][0]["constraint"] == "honeypot-excluded-from-legit"


def test_malformed_request_body(client):
    assert client.post("/runs", json={"seed": 1}).status_code == 422


def test_run_store_and_csv(client):
    resp = client.post("/runs", json={"scenario": chain_scenario(2, 1), "seed": 3})
    assert resp.status_code == 200
    run_id = resp.json()["run_id"]
    assert resp.json()["report"]["seed"] == 3
    assert client.get(f"/runs/{run_id}").json()["report"] == resp.json()["report"]
    assert client.get("/runs").json() == [{"run_id": run_id, "scenario": "chain-d2-n1", "seed": 3}]
    series = client.get(f"/runs/{run_id}/csv/series")
    assert series.text.startswith("tick,victim_arrivals")
    assert client.get(f"/runs/{run_id}/csv/comparison").text.startswith("method,")
    assert client.get(f"/runs/{run_id}/csv/other").status_code == 422
    assert client.get("/runs/999").status_code == 404


def test_sweep_json_and_csv(client):
    payload = {"scenario": chain_scenario(2, 3), "axis": "ppm.probability", "values": [0.1, 0.5]}
    body = client.post("/sweeps", json=payload).json()
    assert len(body["reports"]) == 2 and [r["value"] for r in body["table"]] == [0.1, 0.5]
    text = client.post("/sweeps/csv", json=payload).text
    assert text.splitlines()[0].startswith("axis,value,seed")
    assert len(text.splitlines()) == 3


def test_sweep_unknown_axis(client):
    resp = client.post("/sweeps", json={"scenario": chain_scenario(2, 1), "axis": "nope", "values": [1]})
    assert resp.status_code == 422 and resp.json()["constraint"] == "unknown-parameter"


def test_runtime_error_is_500(client, monkeypatch):
    def boom(*a, **k):
        raise SimError("exploded")

    monkeypatch.setattr(api, "run_scenario", boom)
    resp = client.post("/runs", json={"scenario": chain_scenario(2, 1)})
    assert resp.status_code == 500
    assert resp.json() == {"error": "SimError", "message": "exploded", "constraint": None, "errors": []}
