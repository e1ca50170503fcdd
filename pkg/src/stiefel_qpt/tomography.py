"""Probe and measurement sets, synthetic data, and dataset manipulation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import KrausChannel, apply, channel_fidelity, to_choi

_SQ2 = 1 / np.sqrt(2)
# axis-major: X+, X-, Y+, Y-, Z+, Z-
PAULI_EIGENVECTORS = np.array(
    [
        [_SQ2, _SQ2],
        [_SQ2, -_SQ2],
        [_SQ2, 1j * _SQ2],
        [_SQ2, -1j * _SQ2],
        [1, 0],
        [0, 1],
    ],
    dtype=np.complex128,
)
PAULI_EIGENSTATE_LABELS = ("X+", "X-", "Y+", "Y-", "Z+", "Z-")
MAX_QUBITS = 6


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def pauli_eigenstates(n_qubits: int) -> np.ndarray:
    """The ``6**n`` product eigenstate vectors, first qubit most significant."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n_qubits}")
    vecs = []
    for idx in itertools.product(range(6), repeat=n_qubits):
        v = np.ones(1, dtype=np.complex128)
        for i in idx:
            v = np.kron(v, PAULI_EIGENVECTORS[i])
        vecs.append(v)
    return np.array(vecs)


def pauli_eigenstate_set(n_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    """Probe states and projective measurements built from Pauli eigenstates.

    Both are the same ``6**n`` rank-one projectors, returned as
    ``(6**n, 2**n, 2**n)`` arrays.
    """
    vecs = pauli_eigenstates(n_qubits)
    states = np.einsum("ka,kb->kab", vecs, vecs.conj())
    return states, states.copy()


def gellmann_basis(dim: int) -> np.ndarray:
    """Generalized Gell-Mann matrices, normalized to ``Tr(G_a G_b) = 2 delta_ab``.

    Order: symmetric, antisymmetric, then diagonal families.
    """
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    sym, anti, diag = [], [], []
    for j in range(dim):
        for k in range(j + 1, dim):
            s = np.zeros((dim, dim), dtype=np.complex128)
            s[j, k] = s[k, j] = 1
            sym.append(s)
            a = np.zeros((dim, dim), dtype=np.complex128)
            a[j, k] = -1j
            a[k, j] = 1j
            anti.append(a)
    for l in range(1, dim):
        d = np.zeros(dim, dtype=np.complex128)
        d[:l] = 1
        d[l] = -l
        diag.append(np.diag(d) * np.sqrt(2 / (l * (l + 1))))
    return np.array(sym + anti + diag)


def gellmann_eigenstates(dim: int) -> np.ndarray:
    """Pure eigenstates of the Gell-Mann matrices with nonzero eigenvalue, plus the computational basis.

    Gives ``2 dim^2 - dim`` vectors; for ``dim = 2`` these are the six Pauli
    eigenstates (in a different order).
    """
    basis = np.eye(dim, dtype=np.complex128)
    vecs = list(basis)
    for j in range(dim):
        for k in range(j + 1, dim):
            for phase in (1, -1, 1j, -1j):
                vecs.append((basis[j] + phase * basis[k]) * _SQ2)
    return np.array(vecs)


def gellmann_eigenstate_set(dim: int) -> tuple[np.ndarray, np.ndarray]:
    vecs = gellmann_eigenstates(dim)
    states = np.einsum("ka,kb->kab", vecs, vecs.conj())
    return states, states.copy()


@dataclass(frozen=True, eq=False)
class TomographyDataset:
    """Probes ``rho_i``, measurements ``M_j`` and records ``(i, j, d_ij)``.

    Records are stored column-wise in ``i``, ``j`` and ``values``.
    """

    probes: np.ndarray
    measurements: np.ndarray
    i: np.ndarray
    j: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        probes = np.asarray(self.probes, dtype=np.complex128)
        meas = np.asarray(self.measurements, dtype=np.complex128)
        i = np.asarray(self.i, dtype=np.intp).reshape(-1)
        j = np.asarray(self.j, dtype=np.intp).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if probes.ndim != 3 or meas.ndim != 3 or probes.shape[1:] != meas.shape[1:]:
            raise ValueError("probes and measurements must be stacks of equal-size square matrices")
        if probes.shape[1] != probes.shape[2]:
            raise ValueError("probe matrices must be square")
        if not (len(i) == len(j) == len(values)):
            raise ValueError("record columns have different lengths")
        if len(i) and (i.min() < 0 or i.max() >= len(probes) or j.min() < 0 or j.max() >= len(meas)):
            raise ValueError("record index out of range")
        if len(np.unique(i * len(meas) + j)) != len(i):
            raise ValueError("duplicate (probe, measurement) records")
        if not np.all(np.isfinite(values)):
            raise ValueError("record values must be finite")
        for name, arr in (("probes", probes), ("measurements", meas), ("i", i), ("j", j), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.probes.shape[1]

    @property
    def n_probes(self) -> int:
        return len(self.probes)

    @property
    def n_measurements(self) -> int:
        return len(self.measurements)

    def __len__(self) -> int:
        return len(self.values)

    @cached_property
    def probe_factors(self) -> np.ndarray:
        """``L_i`` with ``rho_i = L_i L_i^dag``, zero-padded to shape ``(P, N, r_max)``."""
        w, v = np.linalg.eigh(self.probes)
        keep = w > 1e-12 * np.maximum(w.max(axis=1, keepdims=True), 1e-300)
        r_max = max(int(keep.sum(axis=1).max()), 1)
        order = np.argsort(-w, axis=1)[:, :r_max]
        w = np.take_along_axis(w, order, axis=1)
        v = np.take_along_axis(v, order[:, None, :], axis=2)
        w = np.where(np.take_along_axis(keep, order, axis=1), w, 0.0)
        return np.ascontiguousarray(v * np.sqrt(w)[:, None, :])

    @cached_property
    def measurements_t_flat(self) -> np.ndarray:
        # row j holds M_j^T flattened, so <M_j^T, sigma> = Tr(M_j sigma)
        return np.ascontiguousarray(self.measurements.transpose(0, 2, 1).reshape(self.n_measurements, -1))

    @cached_property
    def measurements_flat(self) -> np.ndarray:
        return np.ascontiguousarray(self.measurements.reshape(self.n_measurements, -1))

    def is_full_product(self) -> bool:
        return len(self) == self.n_probes * self.n_measurements

    def with_records(self, mask_or_index) -> TomographyDataset:
        return TomographyDataset(
            self.probes, self.measurements, self.i[mask_or_index], self.j[mask_or_index], self.values[mask_or_index]
        )


def ideal_values(channel: KrausChannel, probes: np.ndarray, measurements: np.ndarray) -> np.ndarray:
    """Matrix ``Tr(M_j E(rho_i))`` of shape ``(n_probes, n_measurements)``."""
    outs = np.array([apply(channel, r) for r in probes])
    mt = np.asarray(measurements).transpose(0, 2, 1).reshape(len(measurements), -1)
    return (outs.reshape(len(outs), -1) @ mt.T).real


def simulate_dataset(
    channel: KrausChannel,
    probes: np.ndarray,
    measurements: np.ndarray,
    epsilon: float = 0.0,
    seed: int | np.random.Generator | None = None,
) -> TomographyDataset:
    """Full product of records ``Tr(M_j E(rho_i)) + N(0, epsilon^2)``, i-major order.

    ``epsilon`` is the standard deviation of the additive Gaussian readout
    error. Values are not clipped.
    """
    probes = np.asarray(probes)
    measurements = np.asarray(measurements)
    if probes.shape[1:] != (channel.dim, channel.dim) or measurements.shape[1:] != (channel.dim, channel.dim):
        raise ValueError("probe/measurement dimension does not match the channel")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    vals = ideal_values(channel, probes, measurements)
    if epsilon > 0:
        rng = np.random.default_rng(seed)
        vals = vals + rng.normal(0.0, epsilon, size=vals.shape)
    ii, jj = np.meshgrid(np.arange(len(probes)), np.arange(len(measurements)), indexing="ij")
    return TomographyDataset(probes, measurements, ii.ravel(), jj.ravel(), vals.ravel())


def _keep_count(nu: float, total: int) -> int:
    return min(total, math.ceil(math.sqrt(nu) * total - 1e-9))


def subsample(data: TomographyDataset, nu: float, seed: int | np.random.Generator | None = None) -> TomographyDataset:
    """Keep ``ceil(sqrt(nu) P)`` probes and ``ceil(sqrt(nu) Q)`` measurements.

    The kept indices are drawn uniformly without replacement and kept in
    their original order, so ``nu`` close to one can reproduce the full set.
    """
    if not 0 < nu <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {nu}")
    if not data.is_full_product():
        raise ValueError("subsampling needs a full probe x measurement product")
    p_keep = _keep_count(nu, data.n_probes)
    q_keep = _keep_count(nu, data.n_measurements)
    if p_keep < 1 or q_keep < 1:
        raise ValueError("subsample would be empty")
    rng = np.random.default_rng(seed)
    pk = np.sort(rng.choice(data.n_probes, p_keep, replace=False))
    qk = np.sort(rng.choice(data.n_measurements, q_keep, replace=False))
    pmap = np.full(data.n_probes, -1)
    pmap[pk] = np.arange(p_keep)
    qmap = np.full(data.n_measurements, -1)
    qmap[qk] = np.arange(q_keep)
    keep = (pmap[data.i] >= 0) & (qmap[data.j] >= 0)
    return TomographyDataset(
        data.probes[pk], data.measurements[qk], pmap[data.i[keep]], qmap[data.j[keep]], data.values[keep]
    )


def train_test_split(
    data: TomographyDataset, test_fraction: float, seed: int | np.random.Generator | None = None
) -> tuple[TomographyDataset, TomographyDataset]:
    """Disjoint record-level split; probes and measurements are shared."""
    if not 0 < test_fraction < 1:
        raise ValueError("test fraction must lie in (0, 1)")
    n = len(data)
    if n < 2:
        raise ValueError("need at least two records to split")
    n_test = min(max(int(round(test_fraction * n)), 1), n - 1)
    rng = np.random.default_rng(seed)
    test_idx = np.sort(rng.choice(n, n_test, replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    return data.with_records(~mask), data.with_records(mask)


def evaluate(fitted: KrausChannel, truth: KrausChannel) -> dict[str, float]:
    if fitted.dim != truth.dim:
        raise ValueError(f"dimension mismatch: {fitted.dim} vs {truth.dim}")
    a, b = to_choi(fitted), to_choi(truth)
    return {
        "fidelity": channel_fidelity(a, b),
        "choi_distance": float(np.linalg.norm(a.matrix - b.matrix)),
    }
