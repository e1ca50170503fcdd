import numpy as np
import pytest

from stiefel_qpt.channel import random_channel
from stiefel_qpt.tomography import pauli_eigenstate_set, simulate_dataset

ACCEPTANCE_LINES = []


def random_density(dim, rng, rank=None):
    rank = dim if rank is None else rank
    a = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim, rng):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return (a + a.conj().T) / 2


def noiseless_data(n_qubits, rank, seed, epsilon=0.0):
    truth = random_channel(2**n_qubits, rank, seed)
    probes, meas = pauli_eigenstate_set(n_qubits)
    return truth, simulate_dataset(truth, probes, meas, epsilon, seed + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
