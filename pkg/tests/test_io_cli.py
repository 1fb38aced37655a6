import csv
import json

import numpy as np
import pytest

from mjlsq import MjlsModel, two_mode_benchmark
from mjlsq import io
from mjlsq.cli import main
from mjlsq.errors import DimensionMismatch, InputError


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_doc(path, doc):
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def two_mode(models_dir):
    return models_dir / "two_mode.json"


@pytest.fixture
def scalar(models_dir):
    return models_dir / "scalar.json"


# --- documents -------------------------------------------------------------------


def test_model_round_trip(tmp_path):
    model, weights = two_mode_benchmark()
    path = write_doc(tmp_path / "m.json", io.model_to_dict(model, weights))
    m2, w2 = io.load_model(path)
    np.testing.assert_array_equal(m2.A, model.A)
    np.testing.assert_array_equal(m2.phi, model.phi)
    np.testing.assert_array_equal(w2.R, weights.R)


def test_declared_dimensions_checked(tmp_path):
    model, weights = two_mode_benchmark()
    doc = io.model_to_dict(model, weights)
    doc["n"] = 3
    with pytest.raises(DimensionMismatch):
        io.model_from_dict(doc)


def test_missing_fields_named():
    with pytest.raises(InputError, match="phi"):
        io.model_from_dict({"n": 1, "m": 1, "N": 1, "A": [[[1]]], "B": [[[1]]], "Q": [[[1]]], "R": [[[1]]]})


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(InputError):
        io.load_document(p)


def test_learning_section(two_mode):
    cfg = io.learning_config_from_dict(io.load_document(two_mode))
    assert (cfg.L, cfg.eps, cfg.noise.std, cfg.seed) == (15, 1e-3, 0.01, 1)
    np.testing.assert_array_equal(cfg.K0, np.zeros((2, 1, 2)))


def test_unknown_learning_option():
    with pytest.raises(InputError, match="gamma"):
        io.learning_config_from_dict({"learning": {"gamma": 0.9}})


def test_gain_column_labels():
    assert io.gain_columns(2, 1, 2) == ["K_1_1", "K_1_2", "K_2_1", "K_2_2"]
    assert io.gain_columns(1, 2, 1) == ["K_1_1_1", "K_1_2_1"]


def test_nine_significant_digits():
    assert io.fmt(1 / 3) == "0.333333333"


# --- solve -----------------------------------------------------------------------------


def test_solve_benchmark(capsys, tmp_path, two_mode):
    code, out, _ = run(capsys, "solve", "--model", two_mode, "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "riccati.json").read_text())
    assert set(doc) == {"P", "K", "iterations", "residual"}
    assert doc["residual"] < 1e-10
    assert "K_1=[0.355 0.272] K_2=[0.460 -0.552]" in out


def test_solve_malformed_phi(capsys, tmp_path):
    model, weights = two_mode_benchmark()
    doc = io.model_to_dict(model, weights)
    doc["phi"] = [[0.7, 0.4], [0.5, 0.5]]
    code, _, err = run(capsys, "solve", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 1
    assert "NotStochastic" in err


def test_solve_zero_dynamics_one_iteration(capsys, tmp_path):
    model, weights = two_mode_benchmark()
    doc = io.model_to_dict(MjlsModel(np.zeros((2, 2, 2)), model.B, model.phi), weights)
    code, out, _ = run(capsys, "solve", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 0
    assert json.loads((tmp_path / "riccati.json").read_text())["iterations"] == 1


def test_solve_no_convergence_exit_2(capsys, tmp_path):
    doc = {"n": 1, "m": 1, "N": 1, "A": [[[2.0]]], "B": [[[0.0]]], "phi": [[1.0]],
           "Q": [[[1.0]]], "R": [[[1.0]]]}
    code, _, err = run(capsys, "solve", "--model", write_doc(tmp_path / "m.json", doc),
                       "--out", tmp_path, "--max-iter", 50)
    assert code == 2
    assert "NoConvergence" in err


def test_missing_model_file(capsys, tmp_path):
    code, _, _ = run(capsys, "solve", "--model", tmp_path / "nope.json", "--out", tmp_path)
    assert code == 1


# --- learn -------------------------------------------------------------------------------


def test_learn_benchmark_outputs(capsys, tmp_path, two_mode):
    code, out, _ = run(capsys, "learn", "--model", two_mode, "--out", tmp_path, "--oracle", "--svg")
    assert code == 0
    report = read_csv(tmp_path / "learning_report.csv")
    assert report[0] == ["iter", "e_K", "cond_1", "cond_2", "K_1_1", "K_1_2", "K_2_1", "K_2_2"]
    assert all(len(r) == 8 for r in report)
    iters = len(report) - 1
    assert 5 <= iters <= 60
    assert float(report[-1][1]) <= 1e-3

    trace = read_csv(tmp_path / "gains_trace.csv")
    assert trace[0] == ["iter", "K_1_1", "K_1_2", "K_2_1", "K_2_2"]
    assert trace[1][0] == "0" and trace[-1][0] == "oracle"
    assert len(trace) == iters + 3

    loop = read_csv(tmp_path / "closed_loop.csv")
    assert loop[0] == ["gain_iter", "k", "theta", "x_1", "x_2", "u_1"]
    assert {r[0] for r in loop[1:]} == {"0", "2", "5", str(iters)}
    assert all(len(r) == 6 for r in loop)
    assert (tmp_path / "gains_trace.svg").read_text().startswith("<svg")

    err = float(out.split("max |K - K_oracle| = ")[1].split()[0])
    assert err <= 0.01


def test_learn_byte_identical(capsys, tmp_path, two_mode):
    outs = []
    for d in ("a", "b"):
        code, _, _ = run(capsys, "learn", "--model", two_mode, "--out", tmp_path / d, "--seed", 7)
        assert code == 0
        outs.append({f: (tmp_path / d / f).read_bytes()
                     for f in ("learning_report.csv", "gains_trace.csv", "closed_loop.csv")})
    assert outs[0] == outs[1]


def test_learn_seed_changes_outputs(capsys, tmp_path, two_mode):
    for s in (7, 8):
        run(capsys, "learn", "--model", two_mode, "--out", tmp_path / str(s), "--seed", s)
    assert (tmp_path / "7" / "learning_report.csv").read_bytes() != (tmp_path / "8" / "learning_report.csv").read_bytes()


def test_learn_without_excitation_exit_2(capsys, tmp_path, two_mode):
    doc = io.load_document(two_mode)
    doc["learning"]["noise_std"] = 0.0
    doc["learning"]["x0"] = [0.0, 0.0]
    code, _, err = run(capsys, "learn", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 2
    assert "RankDeficient" in err and "outer iteration 1" in err


def test_learn_iteration_cap_exit_2_still_writes(capsys, tmp_path, two_mode):
    doc = io.load_document(two_mode)
    doc["learning"]["max_outer_iter"] = 3
    code, _, err = run(capsys, "learn", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 2
    assert len(read_csv(tmp_path / "learning_report.csv")) == 4


def test_learn_scalar(capsys, tmp_path, scalar):
    code, out, _ = run(capsys, "learn", "--model", scalar, "--out", tmp_path)
    assert code == 0
    k = float(read_csv(tmp_path / "learning_report.csv")[-1][-1])
    assert k == pytest.approx(0.2656, abs=0.01)


def test_separate_learning_config(capsys, tmp_path, two_mode):
    cfg = write_doc(tmp_path / "cfg.json", {"learning": {"L": 20, "seed": 3}})
    code, _, _ = run(capsys, "learn", "--model", two_mode, "--learning-config", cfg, "--out", tmp_path)
    assert code == 0


def test_multi_input_columns(capsys, tmp_path):
    eye = np.stack([np.eye(2)] * 2).tolist()
    doc = {"n": 2, "m": 2, "N": 2, "A": (0.5 * np.array(eye)).tolist(), "B": eye,
           "phi": [[0.6, 0.4], [0.3, 0.7]], "Q": eye, "R": eye, "learning": {"seed": 0, "L": 25}}
    code, _, _ = run(capsys, "learn", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "learning_report.csv")
    assert len(rows[0]) == 2 + 2 + 8
    assert rows[0][4] == "K_1_1_1"
    assert all(len(r) == 12 for r in rows)
    assert all(len(r) == 7 for r in read_csv(tmp_path / "closed_loop.csv"))


# --- stability -------------------------------------------------------------------------------


def test_stability_oracle_gains_pass(capsys, tmp_path, two_mode):
    run(capsys, "solve", "--model", two_mode, "--out", tmp_path)
    code, out, _ = run(capsys, "stability", "--model", two_mode, "--gains", tmp_path / "riccati.json",
                       "--rollouts", 2000)
    assert code == 0
    assert "PASS" in out and "overflow-guard trips = 0" in out


def test_stability_destabilising_gains_fail(capsys, tmp_path, two_mode):
    gains = write_doc(tmp_path / "g.json", {"K": [[[3.0, 3.0]], [[-3.0, 3.0]]]})
    code, out, _ = run(capsys, "stability", "--model", two_mode, "--gains", gains, "--rollouts", 100)
    assert code == 0
    assert "FAIL" in out


def test_stability_zero_gains_radius(capsys, tmp_path, two_mode):
    gains = write_doc(tmp_path / "g.json", {"K": [[[0.0, 0.0]], [[0.0, 0.0]]]})
    code, out, _ = run(capsys, "stability", "--model", two_mode, "--gains", gains, "--rollouts", 100)
    assert code == 0
    assert "lifted spectral radius = 0.929775949  PASS" in out


def test_stability_deadbeat_radius_zero(capsys, tmp_path):
    doc = {"n": 1, "m": 1, "N": 1, "A": [[[0.5]]], "B": [[[1.0]]], "phi": [[1.0]],
           "Q": [[[1.0]]], "R": [[[1.0]]]}
    gains = write_doc(tmp_path / "g.json", {"K": [[[0.5]]]})
    code, out, _ = run(capsys, "stability", "--model", write_doc(tmp_path / "m.json", doc),
                       "--gains", gains, "--rollouts", 10)
    assert "lifted spectral radius = 0  PASS" in out


def test_stability_gains_without_K(capsys, tmp_path, two_mode):
    gains = write_doc(tmp_path / "g.json", {"gains": []})
    code, _, _ = run(capsys, "stability", "--model", two_mode, "--gains", gains)
    assert code == 1


# --- chain ---------------------------------------------------------------------------------------


def test_chain_benchmark(capsys, tmp_path, two_mode):
    code, out, _ = run(capsys, "chain", "--model", two_mode, "--out", tmp_path, "--trials", 20000, "--svg")
    assert code == 0
    assert "stationary distribution = [0.625, 0.375]" in out
    mean = float(out.split("mean=")[1].split()[0])
    assert mean >= 40
    rows = read_csv(tmp_path / "mode_trace.csv")
    assert rows[0] == ["k", "theta"]
    assert len(rows) == 51
    assert {r[1] for r in rows[1:]} <= {"1", "2"}
    assert (tmp_path / "mode_trace.svg").exists()


def test_chain_reproducible(capsys, tmp_path, two_mode):
    a = run(capsys, "chain", "--model", two_mode, "--out", tmp_path / "a", "--trials", 5000, "--seed", 4)
    b = run(capsys, "chain", "--model", two_mode, "--out", tmp_path / "b", "--trials", 5000, "--seed", 4)
    assert a == b
    assert (tmp_path / "a" / "mode_trace.csv").read_bytes() == (tmp_path / "b" / "mode_trace.csv").read_bytes()


def test_chain_identity_not_ergodic(capsys, tmp_path):
    model, weights = two_mode_benchmark()
    doc = io.model_to_dict(model, weights)
    doc["phi"] = [[1.0, 0.0], [0.0, 1.0]]
    code, _, err = run(capsys, "chain", "--model", write_doc(tmp_path / "m.json", doc), "--out", tmp_path)
    assert code == 1
    assert "NotErgodic" in err


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "mjlsq", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "solve" in res.stdout and "chain" in res.stdout
