import csv
import io
import json

import pytest

from sparse_fdi.cli import main
from sparse_fdi.scenario import ieee57_scenario, run_attack

from conftest import TWO_BUS


@pytest.fixture
def config(tmp_path, capsys):
    assert main(["config", "ieee57-sparse"]) == 0
    path = tmp_path / "scenario.json"
    path.write_text(capsys.readouterr().out)
    return path


@pytest.fixture(scope="module")
def sparse_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("sparse")
    cfg = out / "scenario.json"
    cfg.write_text(json.dumps(ieee57_scenario().to_dict()))
    code = main(["attack", str(cfg), "--output-dir", str(out / "run")])
    return code, out / "run", cfg


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_config_is_loadable(config):
    doc = json.loads(config.read_text())
    assert doc["target_line"] == [23, 24]
    assert doc["mode"] == "sparse"


def test_pf(config, tmp_path):
    assert main(["pf", str(config), "--output-dir", str(tmp_path / "pf")]) == 0
    rows = read_csv(tmp_path / "pf" / "pf.csv")
    assert len(rows) == 57
    assert float(rows[0]["v"]) == pytest.approx(1.04)
    assert (tmp_path / "pf" / "pf.txt").exists()


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["pf", str(tmp_path / "nope.json")]) == 4
    assert "not found" in capsys.readouterr().err


def test_missing_case_exit_code(config, tmp_path):
    assert main(["pf", str(config), "--case", str(tmp_path / "missing.m")]) == 4


@pytest.mark.parametrize("text", ["{not json", '{"zone_buses": [1], "bogus": 1}'])
def test_bad_config_exit_code(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert main(["pf", str(path)]) == 4


def test_bad_case_exit_code(config, tmp_path):
    case = tmp_path / "broken.m"
    case.write_text(TWO_BUS.replace("1\t2\t0.01", "1\t7\t0.01"))
    assert main(["pf", str(config), "--case", str(case)]) == 4


def test_nonconvergent_case_exit_code(config, tmp_path):
    case = tmp_path / "heavy.m"
    case.write_text(TWO_BUS.replace("2\t1\t50\t20", "2\t1\t5000\t2000"))
    assert main(["pf", str(config), "--case", str(case), "--output-dir", str(tmp_path)]) == 5


def test_attack_sparse(sparse_out):
    code, out, _ = sparse_out
    assert code == 0
    rows = read_csv(out / "selection.csv")
    assert len(rows) == 21
    assert [int(r["bus_id"]) for r in rows if r["selected"] == "true"] == [21, 22, 23, 25]
    meta = json.loads((out / "run.json").read_text())
    assert meta["cardinality"] == 4 and meta["status"] == "optimal"
    assert json.loads((out / "stealth.json").read_text())["passed"] is True
    for name in ("selection.txt", "attack_vector.csv", "attack_vector.json", "timing.json"):
        assert (out / name).exists()


def test_cli_matches_library(sparse_out):
    _, out, _ = sparse_out
    run = run_attack(ieee57_scenario())
    rows = {int(r["bus_id"]): r for r in read_csv(out / "selection.csv")}
    for bus_id in run.zone.zone_buses:
        i = run.net.index[bus_id]
        assert float(rows[bus_id]["v_after"]) == run.result.solution.state.v[i]
        assert float(rows[bus_id]["theta_after"]) == run.result.solution.state.theta[i]


def test_reproducible(sparse_out):
    _, out, cfg = sparse_out
    first = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "timing.json"}
    assert main(["attack", str(cfg), "--output-dir", str(out)]) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "timing.json"}
    assert first == second


@pytest.mark.parametrize("name", ["attack_vector.json", "attack_vector.csv"])
def test_verify_round_trip(sparse_out, name, capsys):
    _, out, cfg = sparse_out
    assert main(["verify", str(out / name), str(cfg)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_verify_hand_edited_delta(sparse_out, tmp_path, capsys):
    _, out, cfg = sparse_out
    doc = json.loads((out / "attack_vector.json").read_text())
    entry = next(e for e in doc["entries"] if e["kind"] == "inj_p")
    entry["delta"] += 0.05
    edited = tmp_path / "edited.json"
    edited.write_text(json.dumps(doc))
    assert main(["verify", str(edited), str(cfg)]) == 2
    assert "FAIL consistency" in capsys.readouterr().out


def test_verify_empty_attack(sparse_out, tmp_path, capsys):
    _, _, cfg = sparse_out
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"entries": []}))
    assert main(["verify", str(empty), str(cfg)]) == 2
    assert "FAIL overload" in capsys.readouterr().out


def test_verify_outside_zone(sparse_out, tmp_path, capsys):
    _, out, cfg = sparse_out
    doc = json.loads((out / "attack_vector.json").read_text())
    doc["entries"].append({"kind": "v_mag", "location": 1, "baseline": 1.04, "delta": 0.01})
    path = tmp_path / "leak.json"
    path.write_text(json.dumps(doc))
    assert main(["verify", str(path), str(cfg)]) == 2
    assert "FAIL confinement" in capsys.readouterr().out


def test_w_one_gives_empty_attack(config, tmp_path):
    out = tmp_path / "w1"
    assert main(["attack", str(config), "--w", "1", "--output-dir", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["cardinality"] == 0


def test_unreachable_overload_exit_code(config, tmp_path):
    assert main(["attack", str(config), "--w", "50", "--output-dir", str(tmp_path / "w50")]) == 2


def test_arbitrary_mode(config, tmp_path):
    out = tmp_path / "arb"
    assert main(["attack", str(config), "--mode", "arbitrary", "--noise-sigma", "default",
                 "--output-dir", str(out)]) == 0
    meta = json.loads((out / "run.json").read_text())
    assert meta["cardinality"] == 17
    assert meta["config"]["stealth"]["noise_sigma"]["v_mag"] == 0.004


def test_strategy_override(config, tmp_path):
    out = tmp_path / "bp"
    assert main(["attack", str(config), "--strategy", "branch_and_prune", "--output-dir", str(out)]) == 0
    meta = json.loads((out / "run.json").read_text())
    assert meta["selected_buses"] == [21, 22, 23, 25]
    assert meta["config"]["solver"]["strategy"] == "branch_and_prune"
