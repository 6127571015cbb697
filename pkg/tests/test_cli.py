import json

import pytest

from fomatch.cli import REPORT_HEADER, constants, main
from fomatch.instance import load_instance


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def test_gen_wf_hard(tmp_path, capsys):
    path = tmp_path / "a.fom"
    code, out, _ = run(capsys, "gen", "--family", "wf-hard", "--k", "4", "--m", "1", "--out", str(path))
    assert code == 0
    assert "vertices=8 edges=10 opt=4" in out
    inst = load_instance(path.read_text())
    assert inst.n == 8 and inst.m == 10


def test_gen_rank_hard(tmp_path, capsys):
    path = tmp_path / "b.fom"
    assert run(capsys, "gen", "--family", "rank-hard", "--k", "4", "--m", "2", "--out", str(path))[0] == 0
    assert load_instance(path.read_text()).n == 16


def test_gen_random_deterministic(tmp_path, capsys):
    texts = []
    for name in ("r1", "r2"):
        p = tmp_path / name
        run(capsys, "gen", "--family", "random", "--n", "8", "--p", "0.5", "--seed", "7", "--out", str(p))
        texts.append(p.read_text())
    assert body(texts[0]) == body(texts[1])
    strip = lambda t: [ln for ln in t.splitlines() if not ln.startswith(("# started", "# elapsed"))]
    assert strip(texts[0]) == strip(texts[1])
    assert "# seed=7" in texts[0] and "# version=" in texts[0] and "# command=gen" in texts[0]


def test_gen_to_stdout(capsys):
    code, out, err = run(capsys, "gen", "--family", "wf-hard", "--k", "2", "--m", "1")
    assert code == 0 and "vertices=4" in err
    assert load_instance(out).n == 4


def test_env_seed(monkeypatch, capsys):
    monkeypatch.setenv("FOM_SEED", "13")
    _, out, _ = run(capsys, "constants")
    assert "# seed=13" in out
    monkeypatch.setenv("FOM_SEED", "abc")
    assert run(capsys, "constants")[0] == 2


def test_waterfill_outputs(tmp_path, capsys):
    src = tmp_path / "i.fom"
    run(capsys, "gen", "--family", "wf-hard", "--k", "5", "--m", "3", "--out", str(src))
    code, out, _ = run(capsys, "waterfill", "--in", str(src))
    assert code == 0
    assert "vertex,x,p,alpha" in out and "edge,u,v,x_uv" in out
    code, out, _ = run(capsys, "waterfill", "--in", str(src), "--format", "json")
    doc = json.loads(out)
    assert doc["certificate"]["pass"] and doc["opt"] == 15
    assert set(doc["meta"]) == {"command", "seed", "version", "started", "elapsed_s"}


def test_stationary(capsys):
    code, out, _ = run(capsys, "stationary", "--k", "10,100", "--format", "json")
    assert code == 0
    rows = json.loads(out)["profiles"]
    assert [r["k"] for r in rows] == [10, 100]
    assert rows[0]["ratio_k"] == pytest.approx(0.5992, abs=1e-4)


def test_ranking_trials(capsys):
    code, out, _ = run(capsys, "ranking", "--family", "rank-hard", "--k", "3", "--m", "2", "--trials", "4",
                       "--seed", "1")
    assert code == 0
    rows = body(out)
    assert rows[0] == "trial,seed,matched,opt,ratio" and len(rows) == 5


def test_thresholds(capsys):
    code, out, _ = run(capsys, "thresholds", "--family", "rank-hard", "--k", "2", "--m", "2", "--u", "0",
                       "--v", "4", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["constancy_pass"] and doc["gamma"] == 0.0
    assert run(capsys, "thresholds", "--family", "rank-hard", "--k", "2", "--m", "2")[0] == 2


def test_verify_only(capsys):
    code, out, _ = run(capsys, "verify", "--only", "f-ode", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and [c["check"] for c in doc["checks"]] == ["f-ode"]
    assert doc["checks"][0]["residual"] < doc["checks"][0]["tolerance"]


def test_verify_fault_injection(capsys):
    code, out, _ = run(capsys, "verify", "--only", "lemma7", "--plateau", "0.6")
    assert code == 1
    assert "lemma7" in out and "false" in out
    assert run(capsys, "verify", "--only", "lemma7")[0] == 0


def test_verify_full_suite(capsys):
    code, out, _ = run(capsys, "verify", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["pass"]
    assert len(doc["checks"]) == 13


def test_report_columns(capsys):
    code, out, _ = run(capsys, "report", "--family", "rank-hard", "--k", "5,10", "--m", "20", "--trials", "200",
                       "--seed", "3")
    assert code == 0
    rows = body(out)
    assert rows[0].split(",") == REPORT_HEADER
    assert len(rows) == 3
    gaps = [float(r.split(",")[-1]) for r in rows[1:]]
    assert gaps[0] > gaps[1] > 0


def test_report_stationary(capsys):
    code, out, _ = run(capsys, "report", "--family", "stationary", "--k", "10,100,1000")
    ratios = [float(r.split(",")[5]) for r in body(out)[1:]]
    assert code == 0 and ratios[0] > ratios[1] > ratios[2]


def test_report_wf_hard_small(capsys):
    code, out, _ = run(capsys, "report", "--family", "wf-hard", "--k", "10,40", "--m", "40", "--format", "json")
    rows = json.loads(out)["rows"]
    assert code == 0 and rows[0]["gap"] > rows[1]["gap"] > 0


def test_constants_from_first_principles():
    vals = constants()
    assert vals["omega"] == pytest.approx(0.567143290409784, abs=1e-14)
    assert vals["ranking_c"] == pytest.approx(0.3619, abs=1e-4)
    assert vals["linear_G1"] == pytest.approx(1 - 2 ** 0.5 / 4, abs=1e-15)


@pytest.mark.parametrize("argv,code", [
    (["bogus"], 2),
    (["gen"], 2),
    (["gen", "--family", "random"], 2),
    (["waterfill", "--in", "/nonexistent/file"], 3),
    (["verify", "--only", "nothing"], 2),
    (["gen", "--family", "wf-hard", "--k", "1,2"], 2),
])
def test_exit_codes(argv, code, capsys):
    assert run(capsys, *argv)[0] == code


def test_malformed_input_is_io_error(tmp_path, capsys):
    p = tmp_path / "bad.fom"
    p.write_text("fom 1 2 1\nA 0\n")
    assert run(capsys, "waterfill", "--in", str(p))[0] == 3
