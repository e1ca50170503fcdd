"""Least-squares QPT objective and stochastic Riemannian optimizers.

The parameter is the stacked Kraus matrix ``X`` of shape ``(k N, N)``; every
update is a Cayley retraction, so ``X^dag X = I`` (trace preservation) holds
after each step.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import KrausChannel, unstack
from .manifold import build_skew, cayley_iterative, project, random_stiefel
from .tomography import TomographyDataset


def _blocks(point: np.ndarray, dim: int) -> np.ndarray:
    if point.ndim != 2 or point.shape[1] != dim or point.shape[0] % dim:
        raise ValueError(f"point of shape {point.shape} does not match dataset dimension {dim}")
    return point.reshape(-1, dim, dim)


def _forward(point, data: TomographyDataset, batch):
    """Residuals for the selected records plus intermediates needed by the gradient.

    Probes enter through factors ``rho_u = L_u L_u^dag``, so the channel
    output is ``sum_(c,s) phi phi^dag`` with ``phi = K_c L_u[:, s]``.
    """
    n = data.dim
    _blocks(point, n)
    k = point.shape[0] // n
    if batch is None:
        pi, mj, d = data.i, data.j, data.values
    else:
        batch = np.asarray(batch)
        pi, mj, d = data.i[batch], data.j[batch], data.values[batch]
    used, inv = np.unique(pi, return_inverse=True)
    lf = data.probe_factors[used]  # (U, N, r)
    u, r = len(used), lf.shape[2]
    phi = point @ lf.transpose(1, 0, 2).reshape(n, u * r)  # (kN, U r)
    phi_u = phi.reshape(k, n, u, r).transpose(2, 1, 0, 3).reshape(u, n, k * r)
    sigma = phi_u @ np.swapaxes(phi_u.conj(), 1, 2)  # E(rho_u)
    sflat = sigma.reshape(u, -1)
    mt = data.measurements_t_flat
    if len(pi) * 4 > u * len(mt):
        pred = (sflat @ mt.T)[inv, mj].real
    else:
        pred = np.einsum("rx,rx->r", sflat[inv], mt[mj]).real
    return d - pred, (k, phi_u, lf, inv, mj)


def loss(point: np.ndarray, data: TomographyDataset, batch=None) -> float:
    """``sum_(i,j) [d_ij - Tr(M_j sum_c K_c rho_i K_c^dag)]^2`` over ``batch`` (all records if None)."""
    r, _ = _forward(point, data, batch)
    return float(r @ r)


def _gradient_from(r, cache, data: TomographyDataset):
    k, phi_u, lf, inv, mj = cache
    n = data.dim
    u, rr = lf.shape[0], lf.shape[2]
    w = np.zeros((u, data.n_measurements))
    w[inv, mj] = r
    a = (w @ data.measurements_flat).reshape(u, n, n)  # A_u = sum_j r_uj M_j
    b = a @ phi_u  # A_u K_c L_u, shape (U, N, k r)
    b = b.reshape(u, n, k, rr).transpose(2, 1, 0, 3).reshape(k * n, u * rr)
    g = b @ lf.transpose(0, 2, 1).reshape(u * rr, n).conj()
    return -2.0 * g


def gradient(point: np.ndarray, data: TomographyDataset, batch=None) -> np.ndarray:
    """Ambient gradient ``G`` with ``dL[Delta] = 2 Re Tr(G^dag Delta)``.

    Block ``c`` is ``-2 sum_(i,j) r_ij M_j K_c rho_i`` with residuals
    ``r_ij = d_ij - Tr(M_j E(rho_i))``.
    """
    r, cache = _forward(point, data, batch)
    return _gradient_from(r, cache, data)


def loss_and_gradient(point: np.ndarray, data: TomographyDataset, batch=None) -> tuple[float, np.ndarray]:
    r, cache = _forward(point, data, batch)
    return float(r @ r), _gradient_from(r, cache, data)


@dataclass
class OptimizerState:
    """Mutable-by-replacement optimizer state; ``momentum`` lives in the ambient space."""

    momentum: np.ndarray
    step: int = 0
    second_moment: float = 0.0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    inner_iters: int = 2

    @classmethod
    def zeros_like(cls, point: np.ndarray, **hyper) -> OptimizerState:
        return cls(momentum=np.zeros_like(point, dtype=np.complex128), **hyper)


def _retract(point, direction, state):
    w = build_skew(point, direction)
    return cayley_iterative(point, w, state.lr, state.inner_iters)


def sgd_step(point, state: OptimizerState, data: TomographyDataset, batch=None, grad=None):
    """Heavy-ball step ``M <- beta1 M + G`` followed by a Cayley retraction along ``M``."""
    g = gradient(point, data, batch) if grad is None else grad
    m = state.beta1 * state.momentum + g
    new = _retract(point, m, state)
    return new, dataclasses.replace(state, momentum=project(new, m), step=state.step + 1)


def adam_step(point, state: OptimizerState, data: TomographyDataset, batch=None, grad=None):
    """Adam with a scalar second moment ``v = EMA(||G||_F^2)``.

    A scalar second moment rescales the whole direction uniformly, so the
    bias-corrected ratio stays a multiple of the momentum and is turned into
    a skew-Hermitian generator exactly like a plain gradient.
    """
    g = gradient(point, data, batch) if grad is None else grad
    t = state.step + 1
    m = state.beta1 * state.momentum + (1 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1 - state.beta2) * float(np.vdot(g, g).real)
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    direction = m_hat / (np.sqrt(v_hat) + state.eps)
    new = _retract(point, direction, state)
    return new, dataclasses.replace(state, momentum=project(new, m), second_moment=v, step=t)


STEPS = {"adam": adam_step, "sgd": sgd_step}


@dataclass
class FitConfig:
    rank: int
    max_iters: int = 20_000
    batch_size: int | None = None  # None -> min(64, number of records)
    stop_tol: float = 1e-8
    stop_window: int = 200
    loss_tol: float = 0.0
    seed: int = 0
    optimizer: str = "adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    inner_iters: int = 2
    record_every: int = 10

    def validate(self, dim: int, n_records: int):
        if not 1 <= self.rank <= dim * dim:
            raise ValueError(f"rank must lie in [1, {dim * dim}], got {self.rank}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.optimizer not in STEPS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {sorted(STEPS)}")
        if self.max_iters < 0 or self.record_every < 1 or self.inner_iters < 1:
            raise ValueError("max_iters >= 0, record_every >= 1 and inner_iters >= 1 required")
        if n_records < 1:
            raise ValueError("dataset has no records")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class FitReport:
    config: FitConfig
    final_point: np.ndarray
    loss_history: list[float]
    loss_iterations: list[int]
    iterations_run: int
    wall_time_seconds: float
    stop_reason: str
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.final_point.shape[1]

    @property
    def final_channel(self) -> KrausChannel:
        return unstack(self.final_point, self.dim)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def minibatches(n_records: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of index batches from per-epoch shuffles.

    When ``batch_size`` does not divide the record count, the remainder of
    each epoch is dropped, so every batch is a uniform ``batch_size``-subset.
    """
    if batch_size >= n_records:
        while True:
            yield None  # full batch
    per_epoch = n_records // batch_size
    while True:
        perm = rng.permutation(n_records)
        for b in range(per_epoch):
            yield np.sort(perm[b * batch_size : (b + 1) * batch_size])


def fit(
    data: TomographyDataset,
    config: FitConfig,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> FitReport:
    """Fit a rank-``config.rank`` channel to ``data`` from a random start.

    Stops after ``max_iters`` steps, when the full-data loss drops to
    ``loss_tol``, or when its relative change over ``stop_window`` iterations
    falls below ``stop_tol``. ``callback(iteration, point)`` runs after every
    step.
    """
    config.validate(data.dim, len(data))
    start = time.perf_counter()
    n = data.dim
    point = random_stiefel(config.rank * n, n, config.seed)
    state = OptimizerState.zeros_like(
        point,
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        inner_iters=config.inner_iters,
    )
    step = STEPS[config.optimizer]
    batch_size = min(64, len(data)) if config.batch_size is None else config.batch_size
    batches = minibatches(len(data), batch_size, np.random.default_rng([config.seed, 1]))
    window = max(1, config.stop_window // config.record_every)

    history = [loss(point, data)]
    iters_logged = [0]
    stop_reason = "max_iters"
    it = 0
    if history[0] <= config.loss_tol:
        stop_reason = "loss_tol"
    else:
        while it < config.max_iters:
            point, state = step(point, state, data, next(batches))
            it += 1
            if callback is not None:
                callback(it, point)
            if it % config.record_every and it != config.max_iters:
                continue
            current = loss(point, data)
            history.append(current)
            iters_logged.append(it)
            if current <= config.loss_tol:
                stop_reason = "loss_tol"
                break
            if len(history) > window and it % config.record_every == 0:
                old = history[-1 - window]
                if abs(old - current) <= config.stop_tol * max(old, np.finfo(float).tiny):
                    stop_reason = "converged"
                    break
    return FitReport(
        config=config,
        final_point=point,
        loss_history=history,
        loss_iterations=iters_logged,
        iterations_run=it,
        wall_time_seconds=time.perf_counter() - start,
        stop_reason=stop_reason,
    )
