"""Quantum channel representations and conversions.

All superoperators use row-major vectorization, ``vec(rho) = rho.reshape(-1)``,
so that the Liouville matrix ``sum_l K_l (x) conj(K_l)`` acts from the left.
Choi matrices are unnormalized (trace ``N``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TP_TOL = 1e-8
RANK_TOL = 1e-10


class ChannelError(ValueError):
    """Raised for invalid channel data."""


class NotTracePreservingError(ChannelError):
    pass


class NotCompletelyPositiveError(ChannelError):
    pass


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def tp_defect(ops: np.ndarray) -> float:
    """Frobenius norm of ``sum_l K_l^dag K_l - I``."""
    ops = np.asarray(ops)
    n = ops.shape[-1]
    s = np.einsum("kba,kbc->ac", ops.conj(), ops)
    return float(np.linalg.norm(s - np.eye(n)))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A CPTP map given by ``k`` Kraus operators of size ``N x N``.

    ``ops`` is stored as a complex array of shape ``(k, N, N)``. Construction
    rejects maps whose trace-preservation defect exceeds ``tol``.
    """

    ops: np.ndarray
    tol: float = TP_TOL

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=np.complex128)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2] or ops.shape[0] < 1:
            raise ChannelError(f"Kraus operators must have shape (k, N, N), got {ops.shape}")
        if not np.all(np.isfinite(ops)):
            raise ChannelError("Kraus operators contain non-finite entries")
        defect = tp_defect(ops)
        if defect > self.tol:
            raise NotTracePreservingError(f"trace-preservation defect {defect:.3e} exceeds {self.tol:.1e}")
        ops.setflags(write=False)
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops.shape[1]

    @property
    def rank(self) -> int:
        return self.ops.shape[0]

    @property
    def defect(self) -> float:
        return tp_defect(self.ops)

    @classmethod
    def identity(cls, dim: int) -> KrausChannel:
        return cls(np.eye(dim)[None])

    @classmethod
    def unitary(cls, u: np.ndarray) -> KrausChannel:
        return cls(np.asarray(u)[None])

    def __len__(self):
        return self.rank

    def __iter__(self):
        return iter(self.ops)


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    dim: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class LiouvilleMatrix:
    dim: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class PauliLiouville:
    n_qubits: int
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def _check_square(m: np.ndarray, dim: int, what: str) -> np.ndarray:
    m = np.asarray(m)
    if m.shape != (dim, dim):
        raise ChannelError(f"{what} has shape {m.shape}, expected {(dim, dim)}")
    return m


def apply(channel: KrausChannel, rho: np.ndarray) -> np.ndarray:
    """Return ``sum_l K_l rho K_l^dag``."""
    rho = _check_square(rho, channel.dim, "state")
    k = channel.ops
    return np.einsum("lab,bc,ldc->ad", k, rho, k.conj())


def adjoint_apply(channel: KrausChannel, obs: np.ndarray) -> np.ndarray:
    """Heisenberg-picture action ``sum_l K_l^dag E K_l``."""
    obs = _check_square(obs, channel.dim, "operator")
    k = channel.ops
    return np.einsum("lba,bc,lcd->ad", k.conj(), obs, k)


def stack(channel: KrausChannel) -> np.ndarray:
    """Column-stack the Kraus operators into a ``(kN, N)`` Stiefel point."""
    return channel.ops.reshape(channel.rank * channel.dim, channel.dim).copy()


def unstack(point: np.ndarray, dim: int | None = None, tol: float = TP_TOL) -> KrausChannel:
    point = np.asarray(point)
    if point.ndim != 2:
        raise ChannelError("stacked point must be a matrix")
    dim = point.shape[1] if dim is None else dim
    if point.shape[1] != dim or point.shape[0] % dim:
        raise ChannelError(f"stacked point of shape {point.shape} is not (k*{dim}, {dim})")
    return KrausChannel(point.reshape(-1, dim, dim), tol=tol)


def to_liouville(channel: KrausChannel) -> LiouvilleMatrix:
    k = channel.ops
    n = channel.dim
    e = np.einsum("lij,lkm->ikjm", k, k.conj()).reshape(n * n, n * n)
    return LiouvilleMatrix(n, e)


def liouville_apply(e: LiouvilleMatrix, rho: np.ndarray) -> np.ndarray:
    rho = _check_square(rho, e.dim, "state")
    return (e.matrix @ rho.reshape(-1)).reshape(e.dim, e.dim)


def compose(e: LiouvilleMatrix, l: LiouvilleMatrix) -> LiouvilleMatrix:
    """Superoperator of ``e o l`` (``l`` acts first)."""
    if e.dim != l.dim:
        raise ChannelError(f"cannot compose channels of dims {e.dim} and {l.dim}")
    return LiouvilleMatrix(e.dim, e.matrix @ l.matrix)


def liouville_to_choi(e: LiouvilleMatrix) -> ChoiMatrix:
    """Reshuffle ``J[(i,j),(k,l)] = E[(i,k),(j,l)]``."""
    n = e.dim
    j = e.matrix.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)
    return ChoiMatrix(n, j)


def choi_to_liouville(choi: ChoiMatrix) -> LiouvilleMatrix:
    # the reshuffle is an involution
    n = choi.dim
    e = choi.matrix.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n)
    return LiouvilleMatrix(n, e)


def to_choi(channel: KrausChannel) -> ChoiMatrix:
    v = channel.ops.reshape(channel.rank, -1)
    return ChoiMatrix(channel.dim, v.T @ v.conj())


def choi_to_kraus(choi: ChoiMatrix, tol: float = RANK_TOL) -> KrausChannel:
    """Kraus operators from the eigendecomposition of a Choi matrix.

    Eigenvalues above ``tol * max(eigenvalue)`` are kept; anything below
    ``-10 * tol * max(eigenvalue)`` means the map is not completely positive.
    """
    n = choi.dim
    j = np.asarray(choi.matrix)
    j = (j + dagger(j)) / 2
    w, v = np.linalg.eigh(j)
    scale = max(float(w.max()), 0.0)
    if scale == 0.0:
        raise NotCompletelyPositiveError("Choi matrix has no positive eigenvalue")
    if w.min() < -10 * tol * scale:
        raise NotCompletelyPositiveError(f"Choi matrix has eigenvalue {w.min():.3e}")
    keep = np.flatnonzero(w > tol * scale)[::-1]
    ops = (v[:, keep] * np.sqrt(w[keep])).T.reshape(len(keep), n, n)
    return KrausChannel(ops)


def choi_rank(choi: ChoiMatrix, tol: float = RANK_TOL) -> int:
    w = np.linalg.eigvalsh(choi.matrix)
    return int(np.sum(w > tol * w.max()))


def minimal_kraus(channel: KrausChannel, tol: float = RANK_TOL) -> KrausChannel:
    """Reduce to Kraus rank by diagonalizing the overlap ``C_ij = Tr(K_i K_j^dag)``.

    Operators whose squared norm is at most ``tol`` times the largest one are
    dropped. The survivors are ordered by decreasing weight.
    """
    k = channel.ops.reshape(channel.rank, -1)
    c = k @ k.conj().T
    w, u = np.linalg.eigh((c + c.conj().T) / 2)
    v = u.conj().T  # C = V^dag D V
    order = np.argsort(w)[::-1]
    keep = order[w[order] > tol * w.max()]
    new = (v[keep] @ k).reshape(len(keep), channel.dim, channel.dim)
    return KrausChannel(new)


@lru_cache(maxsize=8)
def pauli_basis(n_qubits: int) -> np.ndarray:
    """n-fold Pauli products ordered (I, X, Y, Z) lexicographically, shape (4^n, 2^n, 2^n)."""
    single = np.array(
        [[[1, 0], [0, 1]], [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]],
        dtype=np.complex128,
    )
    mats = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        m = np.ones((1, 1), dtype=np.complex128)
        for i in idx:
            m = np.kron(m, single[i])
        mats.append(m)
    out = np.array(mats)
    out.setflags(write=False)
    return out


def _n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if dim < 2 or 2**n != dim:
        raise ChannelError(f"dimension {dim} is not a power of two")
    return n


def liouville_to_pauli(e: LiouvilleMatrix) -> PauliLiouville:
    """Pauli-Liouville matrix ``P[i, j] = Tr(E_i E(E_j)) / N``.

    Columns index the input Pauli and rows the output, so trace preservation
    makes the first row ``(1, 0, ..., 0)`` and composition is a matrix product.
    """
    n = _n_qubits(e.dim)
    b = pauli_basis(n).reshape(4**n, -1).T  # columns are vec(E_i)
    p = b.conj().T @ e.matrix @ b / e.dim
    if np.abs(p.imag).max() > 1e-10 * max(1.0, np.abs(p).max()):
        raise ChannelError("Pauli-Liouville matrix is not real; map is not Hermiticity-preserving")
    return PauliLiouville(n, np.ascontiguousarray(p.real))


def pauli_to_liouville(p: PauliLiouville) -> LiouvilleMatrix:
    n = p.n_qubits
    dim = 2**n
    b = pauli_basis(n).reshape(4**n, -1).T
    # E = (1/N) * sum_ij vec(E_i) P[i, j] vec(E_j)^dag
    e = b @ p.matrix @ b.conj().T / dim
    return LiouvilleMatrix(dim, e)


def to_pauli_liouville(channel: KrausChannel) -> PauliLiouville:
    _n_qubits(channel.dim)
    return liouville_to_pauli(to_liouville(channel))


def _psd_factor(m: np.ndarray, name: str) -> np.ndarray:
    """Return ``F`` with ``F F^dag = m``, clamping eigenvalues in ``[-1e-8, 0)``."""
    m = np.asarray(m)
    w, v = np.linalg.eigh((m + dagger(m)) / 2)
    if w.min() < -1e-8:
        raise NotCompletelyPositiveError(f"{name} has eigenvalue {w.min():.3e}")
    keep = w > 0
    return v[:, keep] * np.sqrt(w[keep])


def channel_fidelity(a: ChoiMatrix, b: ChoiMatrix) -> float:
    """``(Tr sqrt(sqrt(a) b sqrt(a)))^2 / N^2`` for trace-N Choi matrices.

    The trace term equals the nuclear norm of ``sqrt(a) sqrt(b)``, evaluated as
    the singular values of ``Fa^dag Fb`` where ``Fa Fa^dag = a``.
    """
    if a.dim != b.dim:
        raise ChannelError(f"fidelity between dims {a.dim} and {b.dim}")
    fa = _psd_factor(a.matrix, "first Choi matrix")
    fb = _psd_factor(b.matrix, "second Choi matrix")
    if fa.shape[1] == 0 or fb.shape[1] == 0:
        return 0.0
    s = np.linalg.svd(fa.conj().T @ fb, compute_uv=False)
    f = float(s.sum()) ** 2 / a.dim**2
    return min(max(f, 0.0), 1.0)


def random_channel(dim: int, rank: int, seed: int | np.random.Generator | None = None) -> KrausChannel:
    """Random channel from the orthonormal QR factor of a complex Gaussian ``(rank*dim, dim)`` matrix."""
    if not 1 <= rank <= dim * dim:
        raise ChannelError(f"rank must lie in [1, {dim * dim}], got {rank}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rank * dim, dim)) + 1j * rng.standard_normal((rank * dim, dim))
    q, _ = np.linalg.qr(a)
    return unstack(q, dim)


def _check_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ChannelError("unitary must be square")
    if np.linalg.norm(u.conj().T @ u - np.eye(len(u))) > 1e-8:
        raise ChannelError("matrix is not unitary")
    return u


def extract_noise(fitted: LiouvilleMatrix | PauliLiouville, u: np.ndarray) -> np.ndarray:
    """Noise part ``fitted o U^{-1} - I`` in the representation of ``fitted``."""
    u = _check_unitary(u)
    inv = KrausChannel.unitary(u.conj().T)
    if isinstance(fitted, PauliLiouville):
        if fitted.dim != len(u):
            raise ChannelError("unitary dimension does not match fitted channel")
        p = fitted.matrix @ to_pauli_liouville(inv).matrix
        return p - np.eye(len(p))
    if fitted.dim != len(u):
        raise ChannelError("unitary dimension does not match fitted channel")
    e = compose(fitted, to_liouville(inv)).matrix
    return e - np.eye(len(e))
