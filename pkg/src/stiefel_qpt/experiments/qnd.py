"""Repeated detector-coupled (QND-style) measurement of a qubit, fully simulated.

Each repetition couples the system qubit to a detector prepared in ``|0>``,
evolves under ``U = exp(-i H dt)`` (detector is the first tensor factor),
then measures and resets the detector. On the system this is the channel
with Kraus operators ``<m|_D U |0>_D``, ``m = 0, 1``. A detector left in
``|1>`` with probability ``detector_error`` adds ``<m|_D U |1>_D``, for
Kraus rank up to 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..channel import KrausChannel, apply, pauli_basis, to_liouville
from ..optimizer import FitConfig, fit, loss
from ..tomography import TomographyDataset, ideal_values, pauli_eigenstate_set
from .common import derive_seed

COLUMNS = ("rank", "train_loss", "test_loss")


class ConvergenceError(RuntimeError):
    pass


def default_hamiltonian() -> np.ndarray:
    """Cross-resonance-like ZX coupling with weak local terms, detector first."""
    p = pauli_basis(2)
    # indices into (I,X,Y,Z) x (I,X,Y,Z)
    zx, xi, iz, yy = p[13], p[4], p[3], p[10]
    return 1.0 * zx + 0.35 * xi + 0.25 * iz + 0.2 * yy


def detector_kraus(u: np.ndarray, detector_state: int) -> list[np.ndarray]:
    """System operators ``<m|_D U |s>_D`` for ``m = 0, 1`` with detector input ``s``."""
    u4 = np.asarray(u).reshape(2, 2, 2, 2)  # (d_out, s_out, d_in, s_in)
    return [u4[m, :, detector_state, :] for m in (0, 1)]


def qnd_channel(hamiltonian: np.ndarray, dt: float, detector_error: float = 0.0) -> KrausChannel:
    h = np.asarray(hamiltonian, dtype=np.complex128)
    if h.shape != (4, 4):
        raise ValueError("Hamiltonian must be 4x4 (detector x system)")
    if np.linalg.norm(h - h.conj().T) > 1e-10:
        raise ValueError("Hamiltonian is not Hermitian")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not 0 <= detector_error < 1:
        raise ValueError("detector_error must lie in [0, 1)")
    u = scipy.linalg.expm(-1j * h * dt)
    ops = [np.sqrt(1 - detector_error) * k for k in detector_kraus(u, 0)]
    if detector_error > 0:
        ops += [np.sqrt(detector_error) * k for k in detector_kraus(u, 1)]
    return KrausChannel(np.array(ops))


def steady_state(channel: KrausChannel, tol: float = 1e-10, max_iters: int = 100_000) -> np.ndarray:
    """Iterate ``rho <- E(rho)`` from ``I/N`` until successive states differ by less than ``tol``.

    When the Liouville eigenvalue 1 is non-degenerate, the result is checked
    against the corresponding eigenvector.
    """
    n = channel.dim
    rho = np.eye(n, dtype=np.complex128) / n
    for _ in range(max_iters):
        nxt = apply(channel, rho)
        step = np.linalg.norm(nxt - rho)
        rho = nxt
        if step < tol:
            break
    else:
        raise ConvergenceError(f"no fixed point within {max_iters} iterations")
    w, v = np.linalg.eig(to_liouville(channel).matrix)
    near = np.flatnonzero(np.abs(w - 1) < 1e-8)
    if len(near) == 1:
        fixed = v[:, near[0]].reshape(n, n)
        fixed = fixed / np.trace(fixed)
        gap = 1 - np.sort(np.abs(w))[-2]
        if np.linalg.norm(fixed - rho) > 10 * tol / max(gap, 1e-12):
            raise ConvergenceError("iterated state disagrees with the spectral fixed point")
    return rho


def haar_state(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def trajectory_dataset(
    channel: KrausChannel, initial_states, n_repetitions: int, epsilon: float, rng: np.random.Generator
) -> TomographyDataset:
    """Records pairing the state before each repetition with Pauli-projector readouts after it.

    Probes are the simulated states ``E^(n-1)(rho_0)``; values are
    ``Tr(M_j E^n(rho_0)) + N(0, epsilon^2)``.
    """
    _, meas = pauli_eigenstate_set(1)
    probes = []
    for rho in initial_states:
        for _ in range(n_repetitions):
            probes.append(rho)
            rho = apply(channel, rho)
    probes = np.array(probes)
    vals = ideal_values(channel, probes, meas)
    if epsilon > 0:
        vals = vals + rng.normal(0, epsilon, vals.shape)
    ii, jj = np.meshgrid(np.arange(len(probes)), np.arange(len(meas)), indexing="ij")
    return TomographyDataset(probes, meas, ii.ravel(), jj.ravel(), vals.ravel())


@dataclass
class QNDConfig:
    hamiltonian: list | None = None  # 4x4 real, or [re, im] pairs; detector first; None -> default
    dt: float = 1.0
    n_repetitions: int = 5
    ranks: list[int] = field(default_factory=lambda: [2, 3, 4])
    detector_error: float = 0.0
    epsilon: float = 1e-3
    train_trials: int = 20
    test_trials: int = 10
    seed: int = 0
    fit: dict = field(default_factory=lambda: {"max_iters": 5000})

    def validate(self):
        if self.n_repetitions < 1 or self.train_trials < 1 or self.test_trials < 1:
            raise ValueError("n_repetitions and trial counts must be positive")
        if not self.ranks or min(self.ranks) < 1 or max(self.ranks) > 4:
            raise ValueError("ranks must lie in 1..4 for a qubit channel")


def parse_hamiltonian(obj) -> np.ndarray:
    """Accept a complex array, a real 4x4 nested list, or 4x4 ``[re, im]`` pairs."""
    a = np.asarray(obj)
    if a.ndim == 3 and a.shape[-1] == 2 and not np.iscomplexobj(a):
        a = a[..., 0] + 1j * a[..., 1]
    return a.astype(np.complex128)


def qnd_study(config: QNDConfig | None = None) -> list[dict]:
    """Fit each Kraus rank on training trials; rows carry mean squared residual per record."""
    cfg = config or QNDConfig()
    cfg.validate()
    h = default_hamiltonian() if cfg.hamiltonian is None else parse_hamiltonian(cfg.hamiltonian)
    truth = qnd_channel(h, cfg.dt, cfg.detector_error)
    rng = np.random.default_rng(derive_seed(cfg.seed, "trials"))
    starts = [haar_state(rng) for _ in range(cfg.train_trials + cfg.test_trials)]
    noise_rng = np.random.default_rng(derive_seed(cfg.seed, "noise"))
    train = trajectory_dataset(truth, starts[: cfg.train_trials], cfg.n_repetitions, cfg.epsilon, noise_rng)
    test = trajectory_dataset(truth, starts[cfg.train_trials :], cfg.n_repetitions, cfg.epsilon, noise_rng)
    rows = []
    for rank in cfg.ranks:
        report = fit(train, FitConfig(rank=rank, seed=derive_seed(cfg.seed, "fit", rank), **cfg.fit))
        rows.append(
            {
                "rank": rank,
                "train_loss": report.final_loss / len(train),
                "test_loss": loss(report.final_point, test) / len(test),
            }
        )
    return rows
