"""Random-channel reconstruction over rank, noise level and data fraction."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from ..channel import random_channel
from ..optimizer import FitConfig, fit
from ..tomography import evaluate, pauli_eigenstate_set, simulate_dataset, subsample
from .common import derive_seed, run_cells

COLUMNS = ("n", "rank", "epsilon", "nu", "trial", "final_loss", "fidelity", "wall_time")
MAX_QUBITS = 3


@dataclass
class RandomChannelConfig:
    """Grid for :func:`random_channel_study`.

    ``ranks`` entries may be the string ``"full"`` for ``4**n``. Truth
    channels, noise and fit initialization depend only on ``(seed, n, trial)``
    (noise also on ``epsilon``), so cells along any axis are paired.
    """

    n_qubits: list[int] = field(default_factory=lambda: [1])
    ranks: list = field(default_factory=lambda: ["full"])
    epsilons: list[float] = field(default_factory=lambda: [0.01])
    nus: list[float] = field(default_factory=lambda: [1.0])
    trials: int = 5
    seed: int = 0
    fit: dict = field(default_factory=dict)

    def validate(self):
        if not (self.n_qubits and self.ranks and self.epsilons and self.nus) or self.trials < 1:
            raise ValueError("every grid axis must be non-empty")
        if max(self.n_qubits) > MAX_QUBITS:
            raise ValueError(f"random-channel study is capped at {MAX_QUBITS} qubits")


def _rank(r, n):
    return 4**n if r == "full" else int(r)


def _cell(args):
    cfg, n, rank, eps, nu, trial = args
    dim = 2**n
    truth = random_channel(dim, dim * dim, derive_seed(cfg.seed, "truth", n, trial))
    probes, meas = pauli_eigenstate_set(n)
    data = simulate_dataset(truth, probes, meas, eps, derive_seed(cfg.seed, "noise", n, trial, float(eps)))
    if nu < 1:
        data = subsample(data, nu, derive_seed(cfg.seed, "subsample", n, trial, float(nu)))
    fit_cfg = FitConfig(rank=_rank(rank, n), seed=derive_seed(cfg.seed, "fit", n, trial), **cfg.fit)
    t0 = time.perf_counter()
    report = fit(data, fit_cfg)
    wall = time.perf_counter() - t0
    return {
        "n": n,
        "rank": fit_cfg.rank,
        "epsilon": float(eps),
        "nu": float(nu),
        "trial": trial,
        "final_loss": report.final_loss,
        "fidelity": evaluate(report.final_channel, truth)["fidelity"],
        "wall_time": wall,
    }


def random_channel_study(config: RandomChannelConfig, threads: int | None = None) -> list[dict]:
    """One row per grid cell ``(n, rank, epsilon, nu, trial)`` in grid order."""
    config.validate()
    cells = [
        (config, n, r, e, nu, t)
        for n, r, e, nu, t in itertools.product(
            config.n_qubits, config.ranks, config.epsilons, config.nus, range(config.trials)
        )
    ]
    return run_cells(_cell, cells, threads)


def mean_by(rows: list[dict], key: str, value: str) -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r[value])
    return {k: float(np.mean(v)) for k, v in groups.items()}


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])
