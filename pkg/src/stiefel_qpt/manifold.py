"""Geometry of the complex Stiefel manifold ``{X : X^dag X = I_p}``.

Points and tangent vectors are plain ``(n, p)`` complex arrays. Skew-Hermitian
directions are kept in factored form ``W = U V^dag - V U^dag`` whenever they
come from a gradient, so that ``W @ Y`` costs ``O(n p^2)`` instead of
``O(n^2 p)``; the dense ``n x n`` matrix is only built on request.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

ORTHO_TOL = 1e-8


def _h(a):
    return a.conj().T


def stiefel_defect(x: np.ndarray) -> float:
    """``||X^dag X - I||_F``."""
    return float(np.linalg.norm(_h(x) @ x - np.eye(x.shape[1])))


def _check_pair(x, a, what="ambient"):
    if np.shape(a) != np.shape(x):
        raise ValueError(f"{what} matrix has shape {np.shape(a)}, expected {np.shape(x)}")


def project(x: np.ndarray, ambient: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the tangent space at ``x``: ``A - X sym(X^dag A)``."""
    _check_pair(x, ambient)
    s = _h(x) @ ambient
    return ambient - x @ ((s + _h(s)) / 2)


def tangency_defect(x: np.ndarray, t: np.ndarray) -> float:
    s = _h(x) @ t
    return float(np.linalg.norm(s + _h(s)))


def inner(x: np.ndarray, a: np.ndarray, b: np.ndarray, metric: str = "canonical") -> float:
    """Riemannian inner product of tangent vectors ``a`` and ``b`` at ``x``.

    ``euclidean``: Re Tr(A^dag B). ``canonical``: Re Tr(A^dag (I - X X^dag / 2) B).
    """
    e = np.vdot(a, b).real
    if metric == "euclidean":
        return float(e)
    if metric == "canonical":
        return float(e - 0.5 * np.vdot(_h(x) @ a, _h(x) @ b).real)
    raise ValueError(f"unknown metric {metric!r}")


def norm(x: np.ndarray, a: np.ndarray, metric: str = "canonical") -> float:
    return float(np.sqrt(max(inner(x, a, a, metric), 0.0)))


class SkewDirection:
    """Skew-Hermitian ``n x n`` operator, dense or as ``U V^dag - V U^dag``."""

    def __init__(self, matrix: np.ndarray | None = None, *, factors: tuple[np.ndarray, np.ndarray] | None = None):
        if (matrix is None) == (factors is None):
            raise ValueError("give exactly one of matrix or factors")
        self._dense = None if matrix is None else np.asarray(matrix, dtype=np.complex128)
        self.factors = factors
        if self._dense is not None:
            m = self._dense
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("skew direction must be square")
            if np.linalg.norm(m + _h(m)) > 1e-10 * max(1.0, np.linalg.norm(m)):
                raise ValueError("matrix is not skew-Hermitian")

    @property
    def n(self) -> int:
        return len(self._dense) if self._dense is not None else self.factors[0].shape[0]

    @property
    def matrix(self) -> np.ndarray:
        if self._dense is None:
            u, v = self.factors
            self._dense = u @ _h(v) - v @ _h(u)
        return self._dense

    def dot(self, y: np.ndarray) -> np.ndarray:
        if self.factors is not None:
            u, v = self.factors
            return u @ (_h(v) @ y) - v @ (_h(u) @ y)
        return self._dense @ y

    def spectral_norm(self) -> float:
        if self.factors is not None:
            # nonzero spectrum of [U V] S [U V]^dag equals that of S [U V]^dag [U V]
            u, v = self.factors
            a = np.hstack([u, v])
            p = u.shape[1]
            s = np.block([[np.zeros((p, p)), np.eye(p)], [-np.eye(p), np.zeros((p, p))]])
            return float(np.abs(np.linalg.eigvals(s @ (_h(a) @ a))).max())
        return float(np.linalg.norm(self._dense, 2))

    def scaled(self, c: float) -> SkewDirection:
        if self.factors is not None:
            return SkewDirection(factors=(c * self.factors[0], self.factors[1]))
        return SkewDirection(c * self._dense)


def build_skew(x: np.ndarray, g: np.ndarray) -> SkewDirection:
    """Skew-Hermitian ``W = What - What^dag`` with ``What = g X^dag - X (X^dag g X^dag) / 2``.

    ``W X`` equals ``project(x, g)``, so the Cayley curve through ``x`` leaves
    with velocity ``-project(x, g)``. Returned in factored form, since
    ``What = (g - X X^dag g / 2) X^dag``.
    """
    _check_pair(x, g, "gradient")
    ghat = g - 0.5 * (x @ (_h(x) @ g))
    return SkewDirection(factors=(ghat, x))


def cayley_direct(x: np.ndarray, w: SkewDirection, tau: float) -> np.ndarray:
    """``(I + tau/2 W)^{-1} (I - tau/2 W) X`` by a dense linear solve."""
    if tau == 0:
        return x.copy()
    n = x.shape[0]
    wm = w.matrix
    lhs = np.eye(n) + (tau / 2) * wm
    rhs = x - (tau / 2) * (wm @ x)
    return scipy.linalg.solve(lhs, rhs, check_finite=False)


def qr_orthonormalize(y: np.ndarray) -> np.ndarray:
    """Orthonormal QR factor with the diagonal of ``R`` made real positive."""
    q, r = np.linalg.qr(y)
    d = np.diag(r)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return q * phase


def cayley_iterative(
    x: np.ndarray, w: SkewDirection, tau: float, s: int = 2, repair_tol: float = ORTHO_TOL
) -> np.ndarray:
    """Fixed-point approximation of :func:`cayley_direct` using only products.

    Starts from ``Y0 = X - tau W X`` and repeats ``Y <- X - tau/2 W (X + Y)``
    ``s`` times; contracts at rate ``tau ||W|| / 2``. If the result drifts off
    the manifold by more than ``repair_tol`` it is re-orthonormalized.
    """
    if s < 1:
        raise ValueError("need at least one inner iteration")
    if tau == 0:
        return x.copy()
    h = tau / 2
    wx = w.dot(x)
    y = x - tau * wx
    for _ in range(s):
        y = x - h * (wx + w.dot(y))
    if repair_tol is not None and stiefel_defect(y) > repair_tol:
        y = qr_orthonormalize(y)
    return y


def exp_reference(x: np.ndarray, w: SkewDirection, tau: float) -> np.ndarray:
    """Geodesic-style reference ``expm(-tau W) X``; for testing and benchmarks."""
    return scipy.linalg.expm(-tau * w.matrix) @ x


def random_stiefel(n: int, p: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    if n < p:
        raise ValueError(f"need n >= p, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    return qr_orthonormalize(a)
