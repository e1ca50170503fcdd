"""Study pipelines and a registry that runs them from plain config dicts into an output directory."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from . import benchmark, oscillator, pauli_noise, qnd, random_channels
from .common import write_grid, write_matrix, write_metadata, write_table


class StudyError(ValueError):
    pass


def _build(cls, config: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(config) - names
    if unknown:
        raise StudyError(f"unknown config keys: {sorted(unknown)}")
    return cls(**config)


def _random(config, out, threads):
    cfg = _build(random_channels.RandomChannelConfig, config)
    rows = random_channels.random_channel_study(cfg, threads)
    write_table(out / "random_channels.csv", rows, random_channels.COLUMNS)
    return dataclasses.asdict(cfg)


def _retraction(config, out, threads):
    allowed = {"sizes", "taus", "trials", "p", "inner_iters", "repeats", "seed"}
    unknown = set(config) - allowed
    if unknown:
        raise StudyError(f"unknown config keys: {sorted(unknown)}")
    rows = benchmark.retraction_benchmark(**config)
    write_table(out / "retraction.csv", rows, benchmark.COLUMNS)
    return config


def _pauli_noise(config, out, threads):
    allowed = {"p", "epsilon", "seed", "fit_options"}
    unknown = set(config) - allowed
    if unknown:
        raise StudyError(f"unknown config keys: {sorted(unknown)}")
    res = pauli_noise.pauli_noise_demo(**config)
    labels = pauli_noise.PAULI_LABELS
    write_matrix(out / "fitted_pauli_liouville.csv", res["fitted_pauli_liouville"].real, labels)
    write_matrix(out / "noise.csv", res["noise"].real, labels)
    write_matrix(out / "analytic_noise.csv", res["analytic_noise"], labels)
    err = float(np.max(np.abs(res["noise"] - res["analytic_noise"])))
    row = {"final_loss": res["final_loss"], "fidelity": res["fidelity"], "max_noise_error": err}
    write_table(out / "summary.csv", [row], list(row))
    return config


def _oscillator(config, out, threads):
    cfg = _build(oscillator.OscillatorConfig, config)
    res = oscillator.oscillator_study(cfg)
    rows = [
        {
            "rank": rank,
            "heldout_rms": r["heldout_rms"],
            "train_rms": r["train_rms"],
            "final_loss": r["report"].final_loss,
            "wall_time": r["report"].wall_time_seconds,
        }
        for rank, r in res["results"].items()
    ]
    write_table(out / "oscillator.csv", rows, ("rank", "heldout_rms", "train_rms", "final_loss", "wall_time"))
    axis = res["grid_axis"]
    for name, grid in res["grids"].items():
        write_grid(out / f"parity_{name}.csv", axis, axis, grid)
    return dataclasses.asdict(cfg)


def _qnd(config, out, threads):
    cfg = _build(qnd.QNDConfig, config)
    rows = qnd.qnd_study(cfg)
    write_table(out / "qnd.csv", rows, qnd.COLUMNS)
    return dataclasses.asdict(cfg)


STUDIES = {
    "random": _random,
    "retraction": _retraction,
    "pauli-noise": _pauli_noise,
    "oscillator": _oscillator,
    "qnd": _qnd,
}


def run_study(name: str, config: dict, out_dir, threads: int | None = None) -> Path:
    """Run a registered study, writing its CSV tables and ``metadata.json`` into ``out_dir``."""
    if name not in STUDIES:
        raise StudyError(f"unknown study {name!r}; valid: {', '.join(STUDIES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = STUDIES[name](dict(config), out, threads)
    write_metadata(out / "metadata.json", name, resolved)
    return out
