import csv
import json
import math
import warnings

import numpy as np
import pytest

from stiefel_qpt.channel import KrausChannel, to_liouville
from stiefel_qpt.experiments import STUDIES, StudyError, run_study
from stiefel_qpt.experiments.benchmark import COLUMNS as BENCH_COLUMNS, retraction_benchmark
from stiefel_qpt.experiments.common import derive_seed, read_table, resolve_threads, run_cells, write_table
from stiefel_qpt.experiments.oscillator import (
    OscillatorConfig,
    TruncationWarning,
    coherent_state,
    displaced_parity,
    displacement,
    fock_operators,
    midpoint_grid,
    oscillator_study,
    snap,
    square_grid,
)
from stiefel_qpt.experiments.pauli_noise import analytic_noise, pauli_noise_demo
from stiefel_qpt.experiments.qnd import (
    ConvergenceError,
    QNDConfig,
    detector_kraus,
    qnd_channel,
    qnd_study,
    steady_state,
)
from stiefel_qpt.experiments.random_channels import (
    RandomChannelConfig,
    loglog_slope,
    mean_by,
    random_channel_study,
)


def _square(x):
    return x * x


# common


def test_derive_seed():
    assert derive_seed(0, "truth", 1, 2) == derive_seed(0, "truth", 1, 2)
    seeds = {derive_seed(0, "truth", 1, t) for t in range(100)}
    assert len(seeds) == 100
    assert derive_seed(0, "noise", 1, 0, 0.01) != derive_seed(0, "noise", 1, 0, 0.02)


def test_run_cells_keeps_grid_order():
    cells = list(range(12))
    assert run_cells(_square, cells, 1) == run_cells(_square, cells, 3) == [c * c for c in cells]


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("QPT_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("QPT_THREADS")
    assert resolve_threads(None) >= 1


def test_table_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.1 + 0.2}, {"a": 2, "b": 1e-300}]
    write_table(tmp_path / "t.csv", rows, ("a", "b"))
    back = read_table(tmp_path / "t.csv")
    assert [float(r["b"]) for r in back] == [0.1 + 0.2, 1e-300]


# random-channel study


def test_random_study_recovery_and_determinism():
    cfg = RandomChannelConfig(n_qubits=[1], ranks=[4], epsilons=[0.0], nus=[1.0], trials=2, fit={"max_iters": 20000})
    rows = random_channel_study(cfg, threads=1)
    assert [r["trial"] for r in rows] == [0, 1]
    assert all(r["fidelity"] >= 0.99 for r in rows)
    again = random_channel_study(cfg, threads=2)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wall_time"} for r in rs]
    assert strip(rows) == strip(again)


def test_random_study_rank_ordering():
    cfg = RandomChannelConfig(n_qubits=[1], ranks=[1, 2, 4], epsilons=[0.01], trials=3, fit={"max_iters": 6000})
    means = mean_by(random_channel_study(cfg, threads=1), "rank", "final_loss")
    assert means[1] >= means[2] >= means[4]


def test_random_study_validation():
    with pytest.raises(ValueError):
        random_channel_study(RandomChannelConfig(n_qubits=[4]))
    with pytest.raises(ValueError):
        random_channel_study(RandomChannelConfig(nus=[]))


def test_loglog_slope():
    xs = np.array([1e-3, 1e-2, 1e-1])
    assert loglog_slope(xs, 3 * xs**2) == pytest.approx(2)


# retraction benchmark


def test_benchmark_schema_and_accuracy():
    rows = retraction_benchmark(sizes=(27, 64), taus=(1e-3, 1e-2), trials=2, repeats=1)
    assert len(rows) == 2 * 2 * 2
    assert all(set(r) == set(BENCH_COLUMNS) for r in rows)
    for n in (27, 64):
        for method in ("direct", "iterative"):
            err = {r["tau"]: r["error_vs_exp"] for r in rows if r["n"] == n and r["method"] == method}
            # third-order local error: 10x smaller step, about 1000x smaller error
            assert 500 <= err[1e-2] / err[1e-3] <= 2000


def test_benchmark_size_cap():
    with pytest.raises(ValueError):
        retraction_benchmark(sizes=(4096,))


# Pauli-noise demo


def test_analytic_noise_pattern():
    d = np.diag(analytic_noise(0.1))
    assert sorted(set(np.round(d, 12))) == [-1.8, 0.0]
    assert np.sum(d == 0) == 8


def test_pauli_noise_unitary_limit():
    res = pauli_noise_demo(p=1.0, seed=1)
    assert np.abs(res["noise"]).max() <= 0.05


def test_pauli_noise_robust_to_readout_noise():
    clean = pauli_noise_demo(p=0.25, epsilon=0.0, seed=2)
    noisy = pauli_noise_demo(p=0.25, epsilon=0.01, seed=2)
    assert np.abs(noisy["noise"] - clean["noise"]).max() <= 0.1


def test_pauli_noise_rejects_probability():
    with pytest.raises(ValueError):
        pauli_noise_demo(p=1.5)


# oscillator primitives


def test_fock_ladder():
    ops = fock_operators(8)
    comm = ops.a @ ops.adag - ops.adag @ ops.a
    expected = np.eye(8)
    expected[-1, -1] = -7
    assert np.allclose(comm, expected)
    assert np.allclose(np.diag(ops.a, 1), np.sqrt(np.arange(1, 8)))


def test_zero_arguments():
    ops = fock_operators(16)
    assert np.allclose(displacement(ops, 0), np.eye(16))
    assert np.allclose(snap(np.zeros(16)), np.eye(16))
    assert np.allclose(displaced_parity(ops, 0), np.diag((-1.0) ** np.arange(16)))


def test_coherent_state_poisson():
    ops = fock_operators(16)
    alpha = np.exp(0.7j)
    probs = np.abs(coherent_state(ops, alpha)) ** 2
    n = np.arange(16)
    poisson = np.exp(-1.0) / np.array([math.factorial(k) for k in n], dtype=float)
    assert np.abs(probs - poisson).max() <= 1e-6


def test_displaced_parity_overlap():
    ops = fock_operators(16)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = [r * np.exp(2j * np.pi * rng.uniform()) for r in rng.uniform(0, 1, 2)]
        psi = coherent_state(ops, a)
        val = np.vdot(psi, displaced_parity(ops, b) @ psi).real
        assert val == pytest.approx(np.exp(-2 * abs(a - b) ** 2), abs=1e-4)


def test_truncation_warning():
    ops = fock_operators(8)
    with pytest.warns(TruncationWarning):
        displacement(ops, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        displacement(ops, 1.0)


def test_grids_disjoint():
    axis, pts = square_grid(1.0, 5)
    mid, held = midpoint_grid(1.0, 5)
    assert len(pts) == 25 and len(held) == 16
    assert np.min(np.abs(pts[:, None] - held[None, :])) > 0.1


def test_oscillator_study_small():
    cfg = OscillatorConfig(probe_points=2, beta_points=5, ranks=(1,), fit={"max_iters": 200, "batch_size": 50})
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        res = oscillator_study(cfg)
    assert res["n_records"] == 4 * 25
    rep = res["results"][1]["report"]
    assert rep.final_channel.defect <= 1e-8
    assert res["grids"]["truth"].shape == (4, 4) == res["grids"]["rank1"].shape
    with pytest.raises(ValueError):
        oscillator_study(OscillatorConfig(cutoff=64))


# QND


def test_qnd_trivial_evolution():
    ch = qnd_channel(np.zeros((4, 4)), 1.0)
    assert np.allclose(ch.ops[0], np.eye(2)) and np.allclose(ch.ops[1], 0)
    assert np.allclose(to_liouville(ch).matrix, np.eye(4))
    assert np.allclose(steady_state(ch), np.eye(2) / 2)


def test_detector_kraus_ordering():
    # CNOT controlled by the system and targeting the detector copies Z into the detector
    cnot = np.zeros((4, 4))
    for d in range(2):
        for s in range(2):
            cnot[2 * ((d + s) % 2) + s, 2 * d + s] = 1
    k0, k1 = detector_kraus(cnot, 0)
    assert np.allclose(k0, np.diag([1, 0])) and np.allclose(k1, np.diag([0, 1]))


def test_qnd_detector_error_rank():
    from stiefel_qpt.channel import choi_rank, to_choi
    from stiefel_qpt.experiments.qnd import default_hamiltonian

    assert choi_rank(to_choi(qnd_channel(default_hamiltonian(), 1.0))) == 2
    assert choi_rank(to_choi(qnd_channel(default_hamiltonian(), 1.0, 0.05))) == 4


def test_qnd_validation():
    with pytest.raises(ValueError):
        qnd_channel(np.triu(np.ones((4, 4))), 1.0)
    with pytest.raises(ValueError):
        qnd_channel(np.eye(4), 0.0)
    with pytest.raises(ValueError):
        qnd_channel(np.eye(4), 1.0, 1.0)


def amplitude_damping(gamma):
    return KrausChannel([np.diag([1, np.sqrt(1 - gamma)]), np.sqrt(gamma) * np.array([[0, 1], [0, 0]])])


def test_steady_state_identity_and_damping():
    assert np.array_equal(steady_state(KrausChannel.identity(3)), np.eye(3) / 3)
    tol = 1e-10
    ch = amplitude_damping(0.3)
    rho = steady_state(ch, tol=tol)
    assert np.linalg.norm(rho - np.diag([1.0, 0.0])) <= 10 * tol
    from stiefel_qpt.channel import apply

    assert np.linalg.norm(apply(ch, rho) - rho) <= tol
    w, v = np.linalg.eig(to_liouville(ch).matrix)
    fixed = v[:, np.argmin(abs(w - 1))].reshape(2, 2)
    assert np.linalg.norm(fixed / np.trace(fixed) - rho) <= 10 * tol


def test_steady_state_rotating_channel_fails():
    swap = np.zeros((3, 3))
    swap[0, 1] = swap[1, 0] = 1
    decay = np.zeros((3, 3))
    decay[0, 2] = 1
    with pytest.raises(ConvergenceError):
        steady_state(KrausChannel([swap, decay]), max_iters=1000)


def test_qnd_study_small():
    cfg = QNDConfig(ranks=[2], train_trials=3, test_trials=2, n_repetitions=2, fit={"max_iters": 200})
    rows = qnd_study(cfg)
    assert [set(r) for r in rows] == [{"rank", "train_loss", "test_loss"}]
    assert rows == qnd_study(cfg)
    with pytest.raises(ValueError):
        qnd_study(QNDConfig(ranks=[5]))


# registry


def test_registry_names():
    assert set(STUDIES) == {"random", "retraction", "pauli-noise", "oscillator", "qnd"}
    with pytest.raises(StudyError):
        run_study("nope", {}, "unused")


def test_run_study_writes_outputs(tmp_path):
    out = run_study("retraction", {"sizes": [27], "taus": [0.01], "trials": 1, "repeats": 1}, tmp_path / "r")
    with open(out / "retraction.csv") as fh:
        header = next(csv.reader(fh))
    assert header == list(BENCH_COLUMNS)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["study"] == "retraction" and meta["config"]["sizes"] == [27]


def test_run_study_rejects_unknown_keys(tmp_path):
    with pytest.raises(StudyError):
        run_study("qnd", {"bogus": 1}, tmp_path)
    with pytest.raises(StudyError):
        run_study("retraction", {"bogus": 1}, tmp_path)
