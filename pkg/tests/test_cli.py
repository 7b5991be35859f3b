import json
import subprocess
import sys

import pytest

from loewner_lab.cli import run
from loewner_lab.conditions import CrossingReport
from loewner_lab.geometry import read_ndjson
from loewner_lab.lattice import square_box, triangular_rhombus
from loewner_lab.rng import job_seed


@pytest.fixture
def work(tmp_path):
    (tmp_path / "box.json").write_text(square_box(16, 16).to_json())
    (tmp_path / "wired.json").write_text(square_box(16, 16, wired="bottom").to_json())
    (tmp_path / "rh.json").write_text(triangular_rhombus(16).to_json())
    return tmp_path


def test_sample_seeds_and_worker_identity(work, monkeypatch):
    a, b = work / "a.ndjson", work / "b.ndjson"
    assert run(["sample", "--model", "lerw", "--domain", str(work / "box.json"), "--n", "4", "--seed", "9",
                "--out", str(a), "--workers", "1"]) == 0
    monkeypatch.setenv("LOEWNER_LAB_WORKERS", "4")
    assert run(["sample", "--model", "lerw", "--domain", str(work / "box.json"), "--n", "4", "--seed", "9",
                "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    recs = [json.loads(line) for line in a.read_text().splitlines()]
    assert [r["seed"] for r in recs] == [job_seed(9, i) for i in range(4)]
    assert all(r["base_seed"] == 9 for r in recs) and [r["index"] for r in recs] == [0, 1, 2, 3]
    with open(a) as fh:
        assert len(list(read_ndjson(fh))) == 4


def test_extract_driving_directory(work):
    c = work / "c.ndjson"
    run(["sample", "--model", "lerw", "--domain", str(work / "box.json"), "--n", "3", "--out", str(c)])
    out = work / "dr"
    assert run(["extract-driving", "--curves", str(c), "--domain", str(work / "box.json"), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["driving-00000.csv", "driving-00001.csv", "driving-00002.csv", "manifest.json"]
    assert (out / "driving-00001.csv").read_text().startswith("t,w\n0.0,0.0\n")


def test_trace_and_capacity(work, capsys):
    t = work / "t.ndjson"
    assert run(["trace", "--kappa", "2", "--T", "0.05", "--seed", "1", "--out", str(t)]) == 0
    rec = json.loads(t.read_text())
    assert rec["base_seed"] == 1 and rec["seed"] == job_seed(1, 0)
    capsys.readouterr()
    assert run(["capacity", "--shape", "slit", "--h", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["hcap"] == pytest.approx(2.0, rel=1e-9) and out["ratio"] == pytest.approx(1.0, rel=1e-9)
    assert run(["capacity", "--shape", "curve", "--curve", str(t)]) == 0
    assert json.loads(capsys.readouterr().out)["hcap"] == pytest.approx(0.1, rel=1e-3)


def test_capacity_rect_keys(work):
    p = work / "cap.json"
    assert run(["capacity", "--shape", "rect", "--w", "1", "--h", "1", "--out", str(p)]) == 0
    out = json.loads(p.read_text())
    assert {"hcap", "ratio", "width_convention"} <= set(out)
    assert out["ratio"] == pytest.approx(out["hcap"] / (1 / (2 * 3.141592653589793)))


def test_check_condition_fail_exit(work):
    csv_path, js = work / "u.csv", work / "u.json"
    code = run(["check-condition", "--model", "ust-peano", "--domain", str(work / "wired.json"), "--n", "6",
                "--C", "4", "--min-trials", "5", "--out-csv", str(csv_path), "--out-json", str(js)])
    assert code == 2
    s = json.loads(js.read_text())
    assert s["verdict"] == "FAIL" and s["base_seed"] == 0
    assert csv_path.read_text().startswith("model,shape,z0x,z0y,r,R,tau_rule,trials,hits,ci_lo,ci_hi,conditioning")


def test_merge_of_shards_equals_single_run(work):
    common = ["check-condition", "--model", "percolation", "--domain", str(work / "rh.json"), "--C", "4",
              "--min-trials", "1", "--out-json", str(work / "ignored.json")]
    run(common + ["--n", "3", "--out-csv", str(work / "s1.csv")])
    run(common + ["--n", "3", "--start", "3", "--out-csv", str(work / "s2.csv")])
    run(common + ["--n", "6", "--out-csv", str(work / "all.csv"), "--workers", "4"])
    assert run(["merge", str(work / "s1.csv"), str(work / "s2.csv"), "--out", str(work / "m.csv")]) == 0
    assert (work / "m.csv").read_text() == (work / "all.csv").read_text()
    # merge is count-additive with an empty report
    (work / "empty.csv").write_text("")
    run(["merge", str(work / "m.csv"), str(work / "empty.csv"), "--out", str(work / "m2.csv")])
    assert (work / "m2.csv").read_text() == (work / "m.csv").read_text()
    rep = CrossingReport.from_csv((work / "m.csv").read_text())
    assert sum(t for t, _ in rep.cells.values()) > 0


def test_merge_rejects_mixed_models(work):
    run(["check-condition", "--model", "ust-peano", "--domain", str(work / "wired.json"), "--n", "2", "--C", "4",
         "--out-csv", str(work / "u.csv"), "--out-json", str(work / "u.json")])
    run(["check-condition", "--model", "percolation", "--domain", str(work / "rh.json"), "--n", "2", "--C", "4",
         "--out-csv", str(work / "p.csv"), "--out-json", str(work / "p.json")])
    assert run(["merge", str(work / "u.csv"), str(work / "p.csv"), "--out", str(work / "x.csv")]) == 1


def test_config_and_flag_override(work):
    cfg = work / "cfg.json"
    cfg.write_text(json.dumps({"model": "lerw", "domain": str(work / "box.json"), "n": 3, "seed": 4}))
    out = work / "o.ndjson"
    assert run(["sample", "--config", str(cfg), "--n", "2", "--out", str(out)]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(recs) == 2 and recs[0]["base_seed"] == 4


@pytest.mark.parametrize("text,needle", [
    ('{"n": "abc"}', "field 'n'"),
    ('{\n "n": 3,\n "seed": 1\n "model": "lerw"}', "line 4"),
    ('{"colour": 1}', "field 'colour'"),
    ('{"verb": "kappa"}', "field 'verb'"),
    ('{"model": "lerw", "domain": "missing.json"}', "missing.json does not exist"),
    ('[1, 2]', "top level"),
])
def test_config_errors(work, capsys, text, needle):
    cfg = work / "bad.json"
    cfg.write_text(text)
    assert run(["sample", "--config", str(cfg)]) == 1
    assert needle in capsys.readouterr().err


def test_missing_required_and_unknown_model(work, capsys):
    assert run(["sample", "--domain", str(work / "box.json")]) == 1
    assert "--model" in capsys.readouterr().err
    assert run(["sample", "--model", "ising", "--domain", str(work / "box.json"), "--n", "1"]) == 1


def test_continuity_and_kappa(work):
    p, plot = work / "c.json", work / "plot.py"
    assert run(["continuity", "--kappa", "2", "--deltas", "0.5,0.25", "--T", "0.2", "--dt", "4e-3", "--n-seeds", "3",
                "--out", str(p), "--plot", str(plot)]) == 0
    out = json.loads(p.read_text())
    assert [r["delta"] for r in out["rows"]] == [0.5, 0.25] and out["base_seed"] == 0
    compile(plot.read_text(), str(plot), "exec")
    k, st = work / "k.json", work / "st.csv"
    assert run(["kappa", "--synthetic", "2", "--n", "40", "--boot", "20", "--reference", "lerw",
                "--out", str(k), "--stats-csv", str(st)]) == 0
    est = json.loads(k.read_text())["estimate"]
    assert est["ci"][0] <= est["kappa"] <= est["ci"][1] and est["reference"]["value"] == 2.0
    assert st.read_text().startswith("t,var,ac1\n")
    assert run(["kappa", "--synthetic", "2", "--model", "lerw"]) == 1


def test_six_arm_verb(work):
    p = work / "s.json"
    assert run(["six-arm", "--domain", str(work / "rh.json"), "--n", "4", "--r", "4,2", "--R", "8", "--out", str(p)]) == 0
    out = json.loads(p.read_text())
    assert [r["r"] for r in out["rows"]] == [4.0, 2.0] and all(r["samples"] == 4 for r in out["rows"])


def test_entry_point_module(work):
    res = subprocess.run([sys.executable, "-m", "loewner_lab", "capacity", "--shape", "slit", "--h", "1"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["hcap"] == pytest.approx(0.5)


def test_four_shards_same_verdict(work):
    common = ["check-condition", "--model", "percolation", "--domain", str(work / "rh.json"), "--C", "4",
              "--min-trials", "3"]
    run(common + ["--n", "8", "--out-csv", str(work / "full.csv"), "--out-json", str(work / "full.json")])
    shards = []
    for k in range(4):
        p = work / f"s{k}.csv"
        run(common + ["--n", "2", "--start", str(2 * k), "--out-csv", str(p), "--out-json", str(work / "x.json")])
        shards.append(str(p))
    run(["merge", *shards, "--min-trials", "3", "--out", str(work / "m.csv"), "--out-json", str(work / "m.json")])
    assert (work / "m.csv").read_text() == (work / "full.csv").read_text()
    assert json.loads((work / "m.json").read_text())["verdict"] == json.loads((work / "full.json").read_text())["verdict"]


def test_bad_domain_and_workers(work, capsys, monkeypatch):
    (work / "nb.json").write_text('{"kind": "square", "shape": "box", "n": 4}')
    assert run(["sample", "--model", "lerw", "--domain", str(work / "nb.json"), "--n", "1"]) == 1
    assert "'m'" in capsys.readouterr().err
    monkeypatch.setenv("LOEWNER_LAB_WORKERS", "many")
    assert run(["sample", "--model", "lerw", "--domain", str(work / "box.json"), "--n", "2"]) == 1
    assert "LOEWNER_LAB_WORKERS" in capsys.readouterr().err
