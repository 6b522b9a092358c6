import json
import re

import numpy as np
import pytest

from stratscore import cli
from stratscore.commitment import build_simple_setting, commitment_report
from stratscore.covmodel import dump_model
from stratscore.errors import UnsupportedDimension
from stratscore.examples import example1, asymmetric_pair, symmetric_pair, nonmonotone

NUM = r"-?\d+(?:\.\d+)?(?:e[-+]?\d+)?"


def run(argv, capsys):
    code = cli.run([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def vector_after(label, text):
    m = re.search(rf"{label}=(\(({NUM}(?:, )?)+\)|{NUM})", text)
    assert m, f"{label} not found in {text!r}"
    return np.array([float(x) for x in re.findall(NUM, m.group(1))])


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def simple_config(tmp_path):
    def make(setting, **extra):
        return write_json(tmp_path / "cfg.json", {"simple_setting": setting.to_dict(), **extra})

    return make


def test_example1(capsys):
    code, out, _ = run(["example", "example1"], capsys)
    assert code == 0
    assert abs(vector_after("b", out)[0] - 0.68233) <= 1e-4


def test_example_nonmonotone(capsys, tmp_path):
    code, out, _ = run(["example", "nonmonotone", "--out", tmp_path], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    np.testing.assert_allclose(vector_after("b", lines[0]), [1.1951, -0.0971], atol=1e-3)
    np.testing.assert_allclose(vector_after("loss", lines[0]), [4.3167], atol=1e-3)
    np.testing.assert_allclose(vector_after("b", lines[1]), [1.1950, -0.0966], atol=1e-3)
    np.testing.assert_allclose(vector_after("loss", lines[1]), [4.3165], atol=1e-3)
    payload = json.loads((tmp_path / "solution.json").read_text())
    assert set(payload) == {"gamma2_var_1", "gamma2_var_2"}


def test_example_simple_pairs(capsys, tmp_path):
    code, out, _ = run(["example", "fig5-asym", "--out", tmp_path], capsys)
    assert code == 0
    np.testing.assert_allclose(vector_after("b_signal", out), [0.335693, 0.271869], atol=1e-3)
    np.testing.assert_allclose(vector_after("b_score", out), [0.347478, 0.260708], atol=1e-3)
    assert (tmp_path / "regimes.csv").exists()
    curve = np.loadtxt(tmp_path / "obedient_curve.csv", delimiter=",", skiprows=1)
    assert curve.shape == (720, 4)
    code, out, _ = run(["example", "fig5-sym"], capsys)
    np.testing.assert_allclose(vector_after("b_signal", out), [0.317353, 0.317353], atol=1e-3)
    np.testing.assert_allclose(vector_after("b_score", out), [0.317353, 0.317353], atol=1e-3)


def test_example_noisy(capsys):
    code, out, _ = run(["example", "noisy-1d"], capsys)
    assert code == 0
    assert abs(vector_after("b", out)[0] - 0.25) <= 1e-6
    assert abs(vector_after("t2", out)[0] - 0.059) <= 1e-3


def test_example_three_equilibria(capsys):
    _, out, _ = run(["example", "appendixB5-1d"], capsys)
    roots = sorted(vector_after("b", line)[0] for line in out.splitlines() if line.startswith("equilibrium "))
    np.testing.assert_allclose(roots, [-0.88, -0.21, 1.09], atol=0.01)
    _, out, _ = run(["example", "appendixB5-2d"], capsys)
    pts = sorted(tuple(vector_after("b", line)) for line in out.splitlines() if line.startswith("equilibrium "))
    np.testing.assert_allclose(pts, [(0.09, 0.66), (0.42, 0.13), (0.60, -0.48)], atol=0.01)


def test_solve_all_symmetric(capsys, tmp_path, simple_config):
    cfg = simple_config(symmetric_pair())
    code, _, _ = run(["solve", "--config", cfg, "--regime", "all", "--out", tmp_path / "o"], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    np.testing.assert_allclose(rep["b_signal"]["b"], rep["b_score"]["b"], atol=1e-8)


def test_solve_regimes(capsys, tmp_path):
    cfg = write_json(tmp_path / "m.json", nonmonotone().to_dict())
    for regime in ("signal", "score", "screen"):
        code, out, _ = run(["solve", "--config", cfg, "--regime", regime], capsys)
        assert code == 0 and out.startswith(regime)
    code, out, _ = run(["solve", "--config", cfg, "--regime", "score", "--pi", "0.2"], capsys)
    assert code == 0
    code, out, _ = run(["solve", "--config", cfg, "--regime", "score", "--observed", "1"], capsys)
    assert code == 0 and "observed=1" in out


def test_outputs_are_deterministic(capsys, tmp_path, simple_config):
    cfg = simple_config(asymmetric_pair())
    for d in ("a", "b"):
        assert run(["solve", "--config", cfg, "--regime", "all", "--out", tmp_path / d], capsys)[0] == 0
    for name in ("report.json", "regimes.csv", "obedient_curve.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(capsys, tmp_path):
    assert run(["frobnicate"], capsys)[0] == 2
    assert run(["solve", "--config", tmp_path / "missing.json"], capsys)[0] == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert run(["validate", "--config", tmp_path / "bad.json"], capsys)[0] == 2
    d = nonmonotone().to_dict()
    d["sigma_eta_eta"] = [[2.0, 1.0], [0.0, 2.0]]
    code, _, err = run(["validate", "--config", write_json(tmp_path / "asym.json", d)], capsys)
    assert code == 3 and "NotSymmetric" in err
    cfg = write_json(
        tmp_path / "dyn.json",
        {"model": example1().to_dict(), "parameters": {"a0": [3.0], "b0": [-3.0], "horizon": 40, "dt": 3.0}},
    )
    code, _, err = run(["dynamics", "--config", cfg], capsys)
    assert code == 4 and "StepTooLarge" in err


def test_validate_writes_report(capsys, tmp_path):
    cfg = tmp_path / "m.json"
    dump_model(example1(), cfg)
    code, out, _ = run(["validate", "--config", cfg, "--out", tmp_path], capsys)
    assert code == 0 and out.startswith("valid:")
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["assumption_A"] and rep["assumption_B"]


def test_sweeps(capsys, tmp_path, simple_config):
    cfg = write_json(tmp_path / "m.json", nonmonotone().to_dict())
    code, out, _ = run(["sweep", "--config", cfg, "--kind", "info-loss", "--grid", "0.5:3:6", "--out", tmp_path / "s"], capsys)
    assert code == 0 and "6 rows" in out
    code, _, _ = run(["sweep", "--config", cfg, "--kind", "pi", "--grid", "0:0.9:4", "--out", tmp_path / "p"], capsys)
    assert code == 0
    code, _, _ = run(["sweep", "--config", cfg, "--kind", "info-loss", "--grid", "0:1:0", "--out", tmp_path / "e"], capsys)
    assert code == 0
    assert len((tmp_path / "e" / "sweep.csv").read_text().splitlines()) == 1
    fw = simple_config(symmetric_pair(), command="sweep", parameters={"kind": "feature-weights", "grid": [1.5, 3.0, 6.0], "vary_index": 2})
    code, _, _ = run(["sweep", "--config", fw, "--out", tmp_path / "f"], capsys)
    assert code == 0
    rows = np.loadtxt(tmp_path / "f" / "sweep.csv", delimiter=",", skiprows=1)
    assert rows.shape[0] == 3
    # symmetric row: signal equals score
    np.testing.assert_allclose(rows[0, 1:3], rows[0, 3:5], atol=1e-8)
    assert run(["sweep", "--config", cfg, "--kind", "info-loss", "--grid", "bad"], capsys)[0] == 2


def test_dynamics_and_verify(capsys, tmp_path):
    cfg = write_json(tmp_path / "m.json", {"model": example1().to_dict(), "parameters": {"n": 20000, "seed": 3, "save_batch": True}})
    code, out, _ = run(["dynamics", "--config", cfg, "--out", tmp_path], capsys)
    assert code == 0 and "converged=True" in out
    assert (tmp_path / "trace.csv").read_text().startswith("t,a_1,b_1,distance\n")
    code, out, _ = run(["verify", "--config", cfg, "--out", tmp_path, "--family", "student:6"], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["family"] == "student" and rep["n"] == 20000
    assert (tmp_path / "batch.sclb").read_bytes()[:4] == b"SCLB"


def test_config_errors(capsys, tmp_path):
    both = write_json(tmp_path / "both.json", {"model": example1().to_dict(), "simple_setting": symmetric_pair().to_dict()})
    assert run(["solve", "--config", both], capsys)[0] == 2
    extra = write_json(tmp_path / "extra.json", {"model": example1().to_dict(), "bogus": 1})
    assert run(["solve", "--config", extra], capsys)[0] == 2
    partial = write_json(tmp_path / "partial.json", {"simple_setting": {"sigma_eps2": [1.0]}})
    assert run(["solve", "--config", partial], capsys)[0] == 3
    cfg = write_json(tmp_path / "m.json", nonmonotone().to_dict())
    assert run(["solve", "--config", cfg, "--regime", "score", "--observed", "5"], capsys)[0] == 2


def test_emit_figure_data_curve_dimension(tmp_path):
    model = example1()
    rep = commitment_report(model)
    with pytest.raises(UnsupportedDimension):
        cli.emit_figure_data(rep, tmp_path, model, curve=True)
    written = cli.emit_figure_data(rep, tmp_path, model)
    assert [p.name for p in written] == ["regimes.csv"]
    model2 = build_simple_setting(asymmetric_pair())
    written = cli.emit_figure_data(commitment_report(model2), tmp_path / "k2", model2, n_angles=90)
    assert [p.name for p in written] == ["regimes.csv", "obedient_curve.csv"]
