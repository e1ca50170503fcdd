"""Truncated bosonic mode: displacement, SNAP, displaced parity, and a process-fit study."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..channel import KrausChannel, apply
from ..optimizer import FitConfig, fit
from ..tomography import TomographyDataset, ideal_values
from .common import derive_seed


class TruncationWarning(UserWarning):
    """Displacement too large for the Fock cutoff to be trusted."""


@dataclass(frozen=True)
class FockOperators:
    cutoff: int
    a: np.ndarray = field(repr=False)

    @property
    def adag(self) -> np.ndarray:
        return self.a.conj().T

    @property
    def number(self) -> np.ndarray:
        return np.diag(np.arange(self.cutoff, dtype=float))

    @property
    def parity(self) -> np.ndarray:
        return np.diag((-1.0) ** np.arange(self.cutoff))


def fock_operators(cutoff: int) -> FockOperators:
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    a = np.diag(np.sqrt(np.arange(1, cutoff)), k=1).astype(np.complex128)
    return FockOperators(cutoff, a)


def displacement(ops: FockOperators, alpha: complex) -> np.ndarray:
    """``exp(alpha a^dag - alpha^* a)`` in the truncated space."""
    if abs(alpha) ** 2 > ops.cutoff / 4:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds cutoff/4 = {ops.cutoff / 4:.3g}",
            TruncationWarning,
            stacklevel=2,
        )
    return scipy.linalg.expm(alpha * ops.adag - np.conj(alpha) * ops.a)


def snap(phases) -> np.ndarray:
    return np.diag(np.exp(1j * np.asarray(phases, dtype=float)))


def displaced_parity(ops: FockOperators, beta: complex) -> np.ndarray:
    d = displacement(ops, beta)
    pi = (d * np.diag(ops.parity)) @ d.conj().T
    return (pi + pi.conj().T) / 2


def coherent_state(ops: FockOperators, alpha: complex) -> np.ndarray:
    return displacement(ops, alpha)[:, 0]


def square_grid(extent: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Complex points on a ``points x points`` grid over ``[-extent, extent]^2``; returns (axis, flat points)."""
    axis = np.linspace(-extent, extent, points)
    re, im = np.meshgrid(axis, axis)  # rows: imaginary part
    return axis, (re + 1j * im).ravel()


def midpoint_grid(extent: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres of :func:`square_grid`, disjoint from it."""
    axis = np.linspace(-extent, extent, points)
    mid = (axis[:-1] + axis[1:]) / 2
    re, im = np.meshgrid(mid, mid)
    return mid, (re + 1j * im).ravel()


def parity_grid(ops: FockOperators, rho: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """``<Pi_d(beta)>`` for each beta; the Wigner function is ``2/pi`` times this."""
    return np.array([np.trace(displaced_parity(ops, b) @ rho).real for b in betas])


@dataclass
class OscillatorConfig:
    cutoff: int = 16
    probe_extent: float = 1.0
    probe_points: int = 4
    beta_extent: float = 1.4
    beta_points: int = 9
    ranks: tuple = (1, 2)
    displacement_max: float = 1.0
    epsilon: float = 0.0
    seed: int = 0
    fit: dict = field(default_factory=lambda: {"max_iters": 4000, "batch_size": 256, "lr": 1e-2})

    def validate(self):
        if self.cutoff > 32:
            raise ValueError("cutoff above 32 is out of desk scale")


def oscillator_process(ops: FockOperators, seed: int, displacement_max: float = 1.0) -> tuple[np.ndarray, dict]:
    """Seeded ``S(phi) D(alpha0)`` with ``|alpha0| <= displacement_max``."""
    rng = np.random.default_rng(seed)
    r = displacement_max * np.sqrt(rng.uniform())
    alpha0 = r * np.exp(2j * np.pi * rng.uniform())
    phases = rng.uniform(0, 2 * np.pi, ops.cutoff)
    u = snap(phases) @ displacement(ops, alpha0)
    return u, {"alpha0": alpha0, "phases": phases}


def oscillator_study(config: OscillatorConfig | None = None) -> dict:
    """Fit coherent-probe parity data on a coarse beta grid and score held-out betas.

    Returns per-rank fit reports, held-out RMS residuals, and parity grids
    (truth and each fit) for the first probe on a fine grid.
    """
    cfg = config or OscillatorConfig()
    cfg.validate()
    ops = fock_operators(cfg.cutoff)
    u, params = oscillator_process(ops, derive_seed(cfg.seed, "process"), cfg.displacement_max)
    truth = KrausChannel.unitary(u)

    _, alphas = square_grid(cfg.probe_extent, cfg.probe_points)
    probes = np.array([np.outer(v, v.conj()) for v in (coherent_state(ops, a) for a in alphas)])
    beta_axis, betas = square_grid(cfg.beta_extent, cfg.beta_points)
    held_axis, held = midpoint_grid(cfg.beta_extent, cfg.beta_points)
    train_ops = np.array([displaced_parity(ops, b) for b in betas])
    held_ops = np.array([displaced_parity(ops, b) for b in held])

    vals = ideal_values(truth, probes, train_ops)
    if cfg.epsilon > 0:
        vals = vals + np.random.default_rng(derive_seed(cfg.seed, "noise")).normal(0, cfg.epsilon, vals.shape)
    ii, jj = np.meshgrid(np.arange(len(probes)), np.arange(len(betas)), indexing="ij")
    data = TomographyDataset(probes, train_ops, ii.ravel(), jj.ravel(), vals.ravel())
    held_truth = ideal_values(truth, probes, held_ops)

    results = {}
    for rank in cfg.ranks:
        report = fit(data, FitConfig(rank=rank, seed=derive_seed(cfg.seed, "fit", rank), **cfg.fit))
        pred = ideal_values(report.final_channel, probes, held_ops)
        results[rank] = {
            "report": report,
            "heldout_rms": float(np.sqrt(np.mean((pred - held_truth) ** 2))),
            "train_rms": float(np.sqrt(report.final_loss / len(data))),
        }

    rho0 = probes[0]
    grids = {"truth": held_truth[0].reshape(len(held_axis), len(held_axis))}
    for rank, res in results.items():
        out = apply(res["report"].final_channel, rho0)
        grids[f"rank{rank}"] = parity_grid(ops, out, held).reshape(len(held_axis), len(held_axis))
    return {
        "results": results,
        "grids": grids,
        "grid_axis": held_axis,
        "beta_axis": beta_axis,
        "process": params,
        "n_records": len(data),
    }
