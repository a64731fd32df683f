import csv
import json
from pathlib import Path

import pytest

from floodtrace import api, cli
from floodtrace.errors import SimError
from floodtrace.generators import chain_scenario

ROOT = Path(__file__).resolve().parent.parent
CANONICAL = str(ROOT / "scenarios" / "canonical.json")


@pytest.fixture(autouse=True)
def in_process(monkeypatch):
    monkeypatch.delenv("FLOODTRACE_SERVER", raising=False)


@pytest.fixture
def chain_file(tmp_path):
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(chain_scenario(3, 2)))
    return str(path)


def test_validate_ok(capsys):
    assert cli.main(["validate", "--scenario", CANONICAL]) == 0
    assert json.loads(capsys.readouterr().out)["name"] == "canonical"


def test_validate_invalid_exit_2(tmp_path, capsys):
    data = json.loads(Path(CANONICAL).read_text())
    data["legit"]["dst_pool"].append("10.250.0.2")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert cli.main(["validate", "--scenario", str(bad)]) == 2
    assert "honeypot-excluded-from-legit" in capsys.readouterr().err


def test_parse_error_and_missing_file_exit_2(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text('{"schema": 1,\n "name": ')
    assert cli.main(["validate", "--scenario", str(broken)]) == 2
    assert "line 2 column" in capsys.readouterr().err
    assert cli.main(["run", "--scenario", str(tmp_path / "absent.json")]) == 2


def test_run_json_to_stdout(chain_file, capsys):
    assert cli.main(["run", "--scenario", chain_file, "--seed", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["seed"] == 5 and report["comparison"][0]["packets_needed"] == 1


def test_run_json_is_deterministic(chain_file, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["run", "--scenario", chain_file, "--out", str(a)]) == 0
    assert cli.main(["run", "--scenario", chain_file, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_csv_writes_two_tables(chain_file, tmp_path):
    out = tmp_path / "series.csv"
    assert cli.main(["run", "--scenario", chain_file, "--format", "csv", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert sum(int(r["honeypot_arrivals"]) for r in rows) == 2
    comp = list(csv.DictReader((tmp_path / "series.comparison.csv").open()))
    assert [r["method"] for r in comp] == ["honeypot", "ppm"]
    assert comp[0]["in_packet_markings"] == "0"


def test_sweep_csv(chain_file, capsys):
    assert cli.main(["sweep", "--scenario", chain_file, "--axis", "ppm.probability",
                     "--values", "0.01,0.5", "--format", "csv"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["value"] for r in rows] == ["0.01", "0.5"] and [r["seed"] for r in rows] == ["0", "1"]


def test_sweep_bad_axis_or_value_exit_2(chain_file):
    assert cli.main(["sweep", "--scenario", chain_file, "--axis", "name", "--values", "1"]) == 2
    assert cli.main(["sweep", "--scenario", chain_file, "--axis", "seed", "--values", "1,x"]) == 2


def test_runtime_error_exit_1(chain_file, monkeypatch, capsys):
    def boom(*a, **k):
        raise SimError("exploded")

    monkeypatch.setattr(api, "run_scenario", boom)
    assert cli.main(["run", "--scenario", chain_file]) == 1
    assert "SimError: exploded" in capsys.readouterr().err


def test_unreachable_server_exit_1(chain_file):
    assert cli.main(["--server", "http://127.0.0.1:9", "validate", "--scenario", chain_file]) == 1
