"""Recover a ZZ Pauli-noise channel hidden behind a random two-qubit unitary."""

from __future__ import annotations

import numpy as np

from ..channel import KrausChannel, extract_noise, pauli_basis, to_pauli_liouville
from ..manifold import random_stiefel
from ..optimizer import FitConfig, fit
from ..tomography import evaluate, pauli_eigenstate_set, simulate_dataset
from .common import derive_seed

PAULI_LABELS = tuple(a + b for a in "IXYZ" for b in "IXYZ")


def zz_noise_after(u: np.ndarray, p: float) -> KrausChannel:
    zz = pauli_basis(2)[15]
    return KrausChannel([np.sqrt(p) * u, np.sqrt(1 - p) * (zz @ u)])


def analytic_noise(p: float) -> np.ndarray:
    """Noise part of the ZZ channel: 0 for Paulis commuting with ZZ, ``2p - 2`` otherwise."""
    zz = pauli_basis(2)[15]
    diag = [0.0 if np.allclose(e @ zz, zz @ e) else 2 * p - 2 for e in pauli_basis(2)]
    return np.diag(diag)


def pauli_noise_demo(p: float = 0.25, epsilon: float = 0.0, seed: int = 0, fit_options: dict | None = None) -> dict:
    """Fit a rank-2 channel to data from ``noise o U`` and strip ``U`` off again."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    u = random_stiefel(4, 4, derive_seed(seed, "unitary"))
    truth = zz_noise_after(u, p)
    probes, meas = pauli_eigenstate_set(2)
    data = simulate_dataset(truth, probes, meas, epsilon, derive_seed(seed, "noise"))
    opts = {"batch_size": len(data), "max_iters": 5000, "lr": 1e-2}
    opts.update(fit_options or {})
    report = fit(data, FitConfig(rank=2, seed=derive_seed(seed, "fit"), **opts))
    fitted = to_pauli_liouville(report.final_channel)
    noise = extract_noise(fitted, u)
    return {
        "fitted_pauli_liouville": fitted.matrix,
        "noise": noise,
        "analytic_noise": analytic_noise(p),
        "fidelity": evaluate(report.final_channel, truth)["fidelity"],
        "final_loss": report.final_loss,
        "unitary": u,
        "report": report,
    }
