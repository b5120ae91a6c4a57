import json
import subprocess
import sys

import numpy as np
import pytest

from mfjp.cli import main
from mfjp.model import curie_weiss


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "name": "bad", "states": ["a", "b", "c"],
        "edges": [["a", "b"], ["b", "a"], ["b", "c"]],
        "rates": {"a->b": "1", "b->a": "1", "b->c": "1"},
    }))
    cost = tmp_path / "cost.json"
    cost.write_text(json.dumps({"vtilde": {"0->1": 2, "1->0": 5}}))
    cw = tmp_path / "cw.json"
    cw.write_text(curie_weiss(1.5, 0.1).to_json())
    return tmp_path, bad, cost, cw


def test_validate_exit_codes(files, capsys):
    _, bad, _, cw = files
    code, _, err = run(["validate", "--model", str(bad)], capsys)
    assert code == 2 and "NotIrreducible" in err
    code, out, _ = run(["validate", "--model", str(cw)], capsys)
    assert code == 0 and json.loads(out)["irreducible"] is True


def test_bad_param_and_missing_file(files, capsys):
    tmp, *_ = files
    assert run(["validate", "--model", "catalog:cw", "--param", "beta"], capsys)[0] == 2
    assert run(["validate", "--model", str(tmp / "nope.json")], capsys)[0] == 2


def test_cap_exit_code(capsys):
    code, _, err = run(["spectrum", "--model", "catalog:cyc3", "--N", "5000"], capsys)
    assert code == 4 and "CapExceeded" in err


def test_hierarchy_example(files, capsys):
    tmp, _, cost, _ = files
    out = tmp / "h.json"
    code, _, err = run(["hierarchy", "--cost", str(cost), "--out", str(out), "--tree"], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["Lambda"] == 2.0 and doc["L_tilde_0"] == [1]
    assert doc["manifest"] == out.name + ".manifest.json"
    man = json.loads((tmp / doc["manifest"]).read_text())
    assert man["outputs"][0]["path"].endswith("h.json")
    assert "K1" in err


def test_outputs_byte_identical(files, capsys):
    tmp, _, _, cw = files
    for cmd in (
        ["simulate", "--model", str(cw), "--N", "20", "--start", "K1", "--t-max", "50", "--seed", "4"],
        ["hit", "--model", str(cw), "--N", "20", "--start", "K1", "--t-max", "1e6",
         "--target-attractors", "0", "--rho", "0.2", "--replicas", "20", "--seed", "4"],
        ["attractors", "--model", str(cw)],
        ["spectrum", "--model", str(cw), "--N-range", "10:30:10"],
    ):
        outs = []
        path = tmp / "o.out"
        for _ in range(2):
            assert run(cmd + ["--out", str(path)], capsys)[0] == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]


def test_thread_count_does_not_change_results(files, capsys):
    tmp, _, _, cw = files
    base = ["hit", "--model", str(cw), "--N", "20", "--start", "K1", "--t-max", "1e6",
            "--target-attractors", "0", "--rho", "0.2", "--replicas", "12", "--seed", "2"]
    a, b = tmp / "a.json", tmp / "b.json"
    run(base + ["--threads", "1", "--out", str(a)], capsys)
    run(base + ["--threads", "3", "--out", str(b)], capsys)
    da, db = json.loads(a.read_text()), json.loads(b.read_text())
    da.pop("manifest"), db.pop("manifest")
    assert da == db


def test_quasipotential_matrix_and_hierarchy_chain(files, capsys):
    tmp, _, _, cw = files
    cm = tmp / "cm.json"
    assert run(["quasipotential", "--model", str(cw), "--matrix", "--resolution", "60", "--out", str(cm)], capsys)[0] == 0
    code, out, _ = run(["hierarchy", "--cost", str(cm)], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["L_tilde_0"] == [0] and doc["Lambda"] > 0.03


def test_flow_mix_cost_commands(files, capsys):
    tmp, _, _, cw = files
    code, out, _ = run(["flow", "--model", "catalog:nonint", "--from", "1,0", "--t-max", "5"], capsys)
    assert code == 0 and out.splitlines()[0].startswith("t,")
    last = [float(v) for v in out.strip().splitlines()[-1].split(",")]
    assert abs(last[2] - (1 - np.exp(-15)) / 3) < 1e-6
    code, out, _ = run(["mix", "--model", str(cw), "--N", "30", "--start", "K1", "--times", "0,1,1e300"], capsys)
    rows = [r.split(",") for r in out.strip().splitlines()[1:]]
    assert code == 0 and float(rows[-1][1]) <= 1e-12
    code, out, _ = run(["cost", "--model", "catalog:nonint", "--from", "0.5,0.5", "--to", "0.6,0.4", "--T", "1"], capsys)
    assert code == 0 and json.loads(out)["value"] >= 0


def test_anneal_commands(files, capsys):
    tmp, _, _, cw = files
    code, out, _ = run(["anneal", "--model", str(cw), "--c", "0.5", "--z0", "down", "--start", "K1", "--t-max", "30"], capsys)
    assert code == 0 and "inject" in out
    code, out, _ = run(["anneal", "--model", str(cw), "--c", "0.5", "--z0", "down", "--start", "K1", "--t-max", "30",
                        "--replicas", "4", "--checkpoints", "10,30", "--target-attractors", "0", "--rho", "0.2"], capsys)
    assert code == 0 and len(json.loads(out)["fraction"]) == 2


def test_non_reversible_spectrum(capsys):
    code, out, _ = run(["spectrum", "--model", "catalog:cyc3", "--N", "6"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["reversible"] is False and doc["lambda2"] is None


@pytest.mark.slow
def test_pipeline_cw(files, capsys):
    tmp, _, _, cw = files
    out = tmp / "report.json"
    code, _, _ = run(["pipeline", "--model", str(cw), "--resolution", "150", "--N-range", "40:400:40", "--out", str(out)], capsys)
    doc = json.loads(out.read_text())
    assert code == 0
    assert doc["Lambda"] == pytest.approx(0.0422, rel=0.05)
    scan = doc["lambda2_scan"]
    assert scan["N"] == list(range(40, 401, 40))
    assert scan["slope"] == pytest.approx(-doc["Lambda"], rel=0.3)


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "mfjp.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("mfjp ")
