import json
import math

import numpy as np
import pytest

from regmdp import SolveReport, load_model
from regmdp.cli import main
from regmdp.experiments import example1_model


@pytest.fixture
def e1(tmp_path):
    path = tmp_path / "e1.json"
    assert main(["gen", "example1", "--n", "10", "--out", str(path)]) == 0
    return path


def test_gen_example1(e1):
    assert load_model(e1).digest() == example1_model(10).digest()


def test_gen_example2_needs_seed_and_is_reproducible(tmp_path, capsys):
    assert main(["gen", "example2", "--n", "50", "--out", str(tmp_path / "x.json")]) == 1
    assert "--seed" in capsys.readouterr().err
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "example2", "--n", "50", "--seed", "7", "--out", str(a)]) == 0
    assert main(["gen", "example2", "--n", "50", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_unknown_example_is_usage_error(tmp_path, capsys):
    assert main(["gen", "example9", "--out", str(tmp_path / "x.json")]) == 1
    assert "usage" in capsys.readouterr().err


def test_solve_l1_zero_equals_vi(e1, tmp_path):
    assert main(["solve", str(e1), "--method", "vi", "--out", str(tmp_path / "vi.json")]) == 0
    assert main(["solve", str(e1), "--method", "l1", "--lambda", "0", "--out", str(tmp_path / "l1.json")]) == 0
    vi, l1 = SolveReport.load(tmp_path / "vi.json"), SolveReport.load(tmp_path / "l1.json")
    np.testing.assert_array_equal(vi.policy.probs, l1.policy.probs)


def test_solve_re_setting(e1, tmp_path):
    out = tmp_path / "re.json"
    code = main(["solve", str(e1), "--method", "re", "--kappa", "0.25", "--q-pref", "0.999",
                 "--pref-action", "0", "--out", str(out)])
    assert code == 0
    rep = SolveReport.load(out)
    assert rep.method == "re" and rep.converged
    assert json.loads(out.read_text())["params"]["prior_probs"][0] == pytest.approx([0.999, 0.001])


@pytest.mark.parametrize("argv, code", [
    (["--method", "l1"], 1),
    (["--method", "re", "--kappa", "0.25"], 1),
    (["--method", "l1", "--lambda", "-1"], 1),
    (["--method", "re", "--kappa", "0", "--q-pref", "0.9"], 1),
    (["--method", "re", "--kappa", "0.2", "--q-pref", "1.0"], 1),
    (["--method", "const"], 1),
    (["--method", "vi", "--max-iterations", "2"], 2),
])
def test_solve_exit_codes(e1, tmp_path, argv, code):
    assert main(["solve", str(e1), *argv, "--out", str(tmp_path / "r.json")]) == code


def test_solve_baselines(e1, tmp_path):
    for extra in (["--method", "osp"], ["--method", "osp-reg", "--lambda", "0.5"], ["--method", "const", "--action", "1"]):
        assert main(["solve", str(e1), *extra, "--out", str(tmp_path / "r.json")]) == 0


def test_missing_model_is_io_error(tmp_path):
    assert main(["solve", str(tmp_path / "none.json"), "--out", str(tmp_path / "r.json")]) == 3


def test_eval(e1, tmp_path, capsys):
    assert main(["solve", str(e1), "--method", "const", "--action", "0", "--out", str(tmp_path / "c.json")]) == 0
    capsys.readouterr()
    assert main(["eval", str(e1), str(tmp_path / "c.json")]) == 0
    out = capsys.readouterr().out.split()
    obj, vps = float(out[1]), float(out[3])
    assert obj == pytest.approx(vps * 9)
    e = tmp_path / "e.txt"
    e.write_text(" ".join(["1"] + ["0"] * 9))
    assert main(["eval", str(e1), str(tmp_path / "c.json"), "--e", str(e)]) == 0
    assert "objective" in capsys.readouterr().out


def test_eval_non_absorbing(tmp_path, capsys):
    P = np.zeros((2, 2, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 0] = 1.0
    P[:, 1, 1] = 1.0
    doc = {"version": 1, "num_states": 2, "num_actions": 2, "discount": 1.0, "terminal_states": [1],
           "transitions": P.tolist(), "rewards": np.zeros_like(P).tolist()}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    (tmp_path / "p.json").write_text(json.dumps({"policy": [[0, 1], [1, 0]]}))
    assert main(["eval", str(tmp_path / "m.json"), str(tmp_path / "p.json")]) == 1
    assert "non-absorbing" in capsys.readouterr().err


def test_terminal_only_eval(tmp_path, capsys):
    P = np.zeros((1, 1, 1))
    P[0, 0, 0] = 1.0
    doc = {"version": 1, "num_states": 1, "num_actions": 1, "discount": 1.0, "terminal_states": [0],
           "transitions": P.tolist(), "rewards": [[[0.0]]]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    (tmp_path / "p.json").write_text(json.dumps([[1.0]]))
    assert main(["eval", str(tmp_path / "m.json"), str(tmp_path / "p.json")]) == 0
    assert capsys.readouterr().out.split()[1] == "0.0"


def test_sample_requires_seed(e1, tmp_path):
    assert main(["sample", str(e1), "--out", str(tmp_path / "s.json")]) == 1
    assert main(["sample", str(e1), "--seed", "3", "--out", str(tmp_path / "s.json")]) == 0
    assert load_model(tmp_path / "s.json").num_states == 10


def test_ingest(tmp_path, capsys):
    log = tmp_path / "log.txt"
    log.write_text("0; (0,1,1) (1,0,2); END\n0; (0,0,1) (1,1,2); END\n0; (0,1,1) (1,1,2); END\n0; (0,0,2); END\n")
    out = tmp_path / "m.json"
    assert main(["ingest", str(log), "--states", "3", "--actions", "2", "--out", str(out)]) == 0
    m = load_model(out)
    assert m.transitions[0, 0, 1] == 0.75 and m.transitions[0, 0, 2] == 0.25
    report = json.loads((tmp_path / "m.counts.json").read_text())
    assert report["unobserved"] == [[0, 1], [1, 0]]


def test_ingest_empty_and_malformed(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["ingest", str(empty), "--states", "3", "--actions", "2", "--out", str(tmp_path / "m.json"),
                 "--report", str(tmp_path / "r.json")]) == 0
    assert len(json.loads((tmp_path / "r.json").read_text())["unobserved"]) == 4
    bad = tmp_path / "bad.txt"
    bad.write_text("0; ; END\n0; (0,1,1) oops; END\n")
    assert main(["ingest", str(bad), "--states", "3", "--actions", "2", "--out", str(tmp_path / "m.json")]) == 1
    assert "line 2" in capsys.readouterr().err


def write_config(path, **doc):
    path.write_text(json.dumps(doc))
    return path


def test_sweep_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path / "fig2.json", grid=[0.0, 2.0, 8.0], num_trials=5,
                       out_dir=str(tmp_path / "out"))
    assert main(["sweep", str(cfg)]) == 0
    first = (tmp_path / "out" / "fig2.csv").read_bytes()
    assert main(["sweep", str(cfg)]) == 0
    assert (tmp_path / "out" / "fig2.csv").read_bytes() == first
    assert "unregularized" in capsys.readouterr().out


def test_sweep_flag_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.json", grid=[0.0], num_trials=5, out_dir=str(tmp_path / "a"))
    assert main(["sweep", str(cfg), "--num-trials", "3", "--out-dir", str(tmp_path / "b")]) == 0
    doc = json.loads((tmp_path / "b" / "c.json").read_text())
    assert doc["config"]["num_trials"] == 3


def test_sweep_rejects_single_trial_and_unknown_keys(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", grid=[0.0], num_trials=1, bogus=3, method="xx")
    assert main(["sweep", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "num_trials" in err and "bogus" in err and "method" in err


def test_sweep_sample_scaling(tmp_path):
    cfg = write_config(tmp_path / "fig4.json", grid=[0.0, 4.0], num_trials=3, n_grid=[100, 1000],
                       out_dir=str(tmp_path))
    assert main(["sweep", str(cfg)]) == 0
    doc = json.loads((tmp_path / "fig4.json").read_text())
    assert doc["metric_name"] == "regularization_gap" and len(doc["points"]) == 2


def test_compare_and_distance(e1, tmp_path, capsys):
    s = tmp_path / "s.json"
    assert main(["sample", str(e1), "--seed", "1", "--out", str(s)]) == 0
    capsys.readouterr()
    assert main(["compare", str(e1), str(s), "--lambda", "4", "--kappa", "0.25", "--q-pref", "0.999",
                 "--reference", "const_0"]) == 0
    out = capsys.readouterr().out
    assert "osp_lambda" in out and "const_0" in out
    assert main(["distance", str(e1), str(s)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["avg_tv"] == pytest.approx(sum(d["avg_row_l1"]) / len(d["avg_row_l1"]) / 2)


def test_recipe_configs_validate():
    from pathlib import Path

    from regmdp.cli import load_sweep_config

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert len(paths) == 5
    for p in paths:
        load_sweep_config(p)


def test_fig2_recipe_runs(tmp_path, capsys):
    from pathlib import Path

    cfg = Path(__file__).parent.parent / "configs" / "fig2_l1_example1.json"
    assert main(["sweep", str(cfg), "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "fig2_l1_example1.json").read_text())
    zero, top = doc["points"][0], doc["points"][-1]
    assert top["mean"] - zero["mean"] >= 2 * math.hypot(top["stderr"], zero["stderr"])
