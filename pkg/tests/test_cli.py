import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from stiefel_qpt import io
from stiefel_qpt.channel import KrausChannel
from stiefel_qpt.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def channel_file(tmp_path, capsys):
    path = tmp_path / "truth.json"
    assert run(capsys, "gen-channel", "--dim", 2, "--rank", 4, "--seed", 7, "--out", path)[0] == 0
    return path


def test_gen_channel_deterministic(tmp_path, capsys, channel_file):
    other = tmp_path / "again.json"
    code, out, _ = run(capsys, "gen-channel", "--dim", 2, "--rank", 4, "--seed", 7, "--out", other)
    assert code == 0
    assert other.read_bytes() == channel_file.read_bytes()
    assert out.startswith("config: ") and "tp_defect" in out
    assert io.channel_file_defect(other) <= 1e-10


def test_gen_channel_errors(tmp_path, capsys):
    assert run(capsys, "gen-channel", "--dim", 2, "--rank", 5, "--seed", 7, "--out", tmp_path / "x.json")[0] == 1
    assert run(capsys, "gen-channel", "--dim", 2, "--rank", 4, "--seed", 7, "--out", tmp_path / "no" / "x.json")[0] == 2


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["gen-channel", "--dim", "2", "--rank", "4", "--out", str(tmp_path / "x.json")])
    assert e.value.code == 1  # seed is mandatory
    with pytest.raises(SystemExit) as e:
        main(["gen-channel", "--dim", "2", "--rank", "4", "--seed", "1", "--bogus", "--out", "x"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["fit", "--data", "d", "--rank", "1", "--seed", "0", "--optimizer", "lbfgs", "--out", "r"])
    assert e.value.code == 1


def test_simulate_identity(tmp_path, capsys):
    ident = tmp_path / "id.json"
    io.write_channel(ident, KrausChannel.identity(2))
    out = tmp_path / "d.json"
    assert run(capsys, "simulate", "--channel", ident, "--qubits", 1, "--seed", 0, "--out", out)[0] == 0
    data = io.read_dataset(out)
    diag = data.values[data.i == data.j]
    assert len(diag) == 6 and np.allclose(diag, 1.0, rtol=0, atol=1e-12)


def test_simulate_subsample_and_determinism(tmp_path, capsys):
    ch = tmp_path / "c.json"
    run(capsys, "gen-channel", "--dim", 4, "--rank", 3, "--seed", 1, "--out", ch)
    args = ["simulate", "--channel", ch, "--qubits", 2, "--epsilon", 0.01, "--nu", 0.25, "--seed", 3]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, *args, "--out", a)[0] == 0
    assert run(capsys, *args, "--out", b)[0] == 0
    assert len(io.read_dataset(a)) == 324
    assert a.read_bytes() == b.read_bytes()


def test_simulate_dim_mismatch(tmp_path, capsys, channel_file):
    code, _, err = run(capsys, "simulate", "--channel", channel_file, "--qubits", 2, "--seed", 0, "--out", tmp_path / "d.json")
    assert code == 1 and "dimension" in err


def test_fit_and_eval_pipeline(tmp_path, capsys, channel_file):
    data, rep = tmp_path / "d.json", tmp_path / "rep.json"
    run(capsys, "simulate", "--channel", channel_file, "--qubits", 1, "--seed", 0, "--out", data)
    code, out, _ = run(capsys, "fit", "--data", data, "--rank", 4, "--optimizer", "adam", "--seed", 0, "--out", rep)
    assert code == 0 and "final_loss" in out and "wall_time" in out
    assert io.read_report(rep).final_loss <= 1e-6
    metrics = tmp_path / "m.csv"
    code, out1, _ = run(capsys, "eval", "--fit", rep, "--truth", channel_file, "--csv", metrics)
    assert code == 0 and "fidelity 1.000000" in out1
    _, out2, _ = run(capsys, "eval", "--fit", rep, "--truth", channel_file, "--csv", metrics)
    assert out1 == out2
    with open(metrics) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and float(rows[0]["fidelity"]) >= 0.9999


def test_fit_zero_iterations_and_errors(tmp_path, capsys, channel_file):
    data, rep = tmp_path / "d.json", tmp_path / "rep.json"
    run(capsys, "simulate", "--channel", channel_file, "--qubits", 1, "--seed", 0, "--out", data)
    assert run(capsys, "fit", "--data", data, "--rank", 2, "--max-iters", 0, "--seed", 0, "--out", rep)[0] == 0
    report = io.read_report(rep)
    assert report.iterations_run == 0 and len(report.loss_history) == 1
    assert run(capsys, "fit", "--data", data, "--rank", 5, "--seed", 0, "--out", rep)[0] == 1
    assert run(capsys, "fit", "--data", tmp_path / "missing.json", "--rank", 1, "--seed", 0, "--out", rep)[0] == 2


def test_eval_orthogonal_and_mismatch(tmp_path, capsys):
    ident, flip, big = tmp_path / "i.json", tmp_path / "x.json", tmp_path / "b.json"
    io.write_channel(ident, KrausChannel.identity(2))
    io.write_channel(flip, KrausChannel.unitary(np.array([[0, 1], [1, 0]])))
    io.write_channel(big, KrausChannel.identity(4))
    rep = tmp_path / "rep.json"
    data = tmp_path / "d.json"
    run(capsys, "simulate", "--channel", flip, "--qubits", 1, "--seed", 0, "--out", data)
    run(capsys, "fit", "--data", data, "--rank", 1, "--seed", 0, "--out", rep)
    code, out, _ = run(capsys, "eval", "--fit", rep, "--truth", ident)
    assert code == 0 and "fidelity 0.000000" in out
    assert run(capsys, "eval", "--fit", rep, "--truth", big)[0] == 1


def test_study_retraction_and_rerun(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sizes": [27, 64], "taus": [0.01], "trials": 1, "repeats": 1}))
    outs = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "--threads", 1, "study", "--name", "retraction", "--config", cfg, "--out", tmp_path / name)
        assert code == 0
        with open(tmp_path / name / "retraction.csv") as fh:
            rows = list(csv.DictReader(fh))
        outs.append([{k: v for k, v in r.items() if k != "wall_time"} for r in rows])
    assert list(rows[0]) == ["n", "method", "tau", "wall_time", "error_vs_exp"]
    assert outs[0] == outs[1]


def test_study_qnd_ordering(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"detector_error": 0.05, "ranks": [2, 4]}))
    assert run(capsys, "study", "--name", "qnd", "--config", cfg, "--out", tmp_path / "q")[0] == 0
    with open(tmp_path / "q" / "qnd.csv") as fh:
        rows = {int(r["rank"]): float(r["test_loss"]) for r in csv.DictReader(fh)}
    assert rows[4] <= rows[2]


def test_study_errors(tmp_path, capsys):
    code, _, err = run(capsys, "study", "--name", "nope", "--out", tmp_path)
    assert code == 1 and "retraction" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "study", "--name", "qnd", "--config", bad, "--out", tmp_path / "o")[0] == 1
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert run(capsys, "study", "--name", "qnd", "--config", bad, "--out", tmp_path / "o")[0] == 1


def test_threads_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("QPT_THREADS", "2")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sizes": [27], "taus": [0.01], "trials": 1, "repeats": 1}))
    code, out, _ = run(capsys, "study", "--name", "retraction", "--config", cfg, "--out", tmp_path / "o")
    assert code == 0 and '"threads": 2' in out


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "stiefel_qpt.cli", "gen-channel", "--dim", "2", "--rank", "9", "--seed", "1", "--out", str(tmp_path / "x")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 1
