"""Timing and accuracy of the direct versus fixed-point Cayley retraction."""

from __future__ import annotations

import time

import numpy as np
from threadpoolctl import threadpool_limits

from ..manifold import (
    SkewDirection,
    build_skew,
    cayley_direct,
    cayley_iterative,
    exp_reference,
    random_stiefel,
    stiefel_defect,
)
from .common import derive_seed

COLUMNS = ("n", "method", "tau", "wall_time", "error_vs_exp")
MAX_SIZE = 2048


def random_problem(n: int, p: int, seed: int) -> tuple[np.ndarray, SkewDirection]:
    """Random point and a dense skew direction (from a random gradient) with unit spectral norm."""
    rng = np.random.default_rng(seed)
    x = random_stiefel(n, p, rng)
    g = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    w = build_skew(x, g)
    w = SkewDirection(w.matrix / w.spectral_norm())
    return x, w


def _best_time(fn, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def retraction_benchmark(
    sizes=(64, 128, 256, 512, 1024),
    taus=(1e-3, 1e-2, 1e-1),
    trials: int = 3,
    p: int | None = None,
    inner_iters: int = 2,
    repeats: int = 3,
    seed: int = 0,
) -> list[dict]:
    """Rows ``{n, method, tau, wall_time, error_vs_exp}``.

    ``p`` defaults to ``round(n ** (1/3))``, the column count of a full-rank
    stacked channel with ``n`` rows. Both methods receive the same dense
    ``W``. Wall time is the best of ``repeats`` runs, then the median over
    trials; errors are averaged over trials. Runs with BLAS pinned to one
    thread.
    """
    if max(sizes) > MAX_SIZE:
        raise ValueError(f"sizes above {MAX_SIZE} are out of desk scale")
    rows = []
    with threadpool_limits(1):
        for n in sizes:
            cols = p if p is not None else max(1, round(n ** (1 / 3)))
            problems = [random_problem(n, cols, derive_seed(seed, "bench", n, t)) for t in range(trials)]
            for tau in taus:
                refs = [exp_reference(x, w, tau) for x, w in problems]
                for method in ("direct", "iterative"):
                    times, errs = [], []
                    for (x, w), ref in zip(problems, refs):
                        if method == "direct":
                            t, y = _best_time(lambda: cayley_direct(x, w, tau), repeats)
                        else:
                            t, y = _best_time(lambda: cayley_iterative(x, w, tau, inner_iters), repeats)
                        if stiefel_defect(y) > 1e-8:
                            raise RuntimeError(f"{method} retraction left the manifold at n={n}")
                        times.append(t)
                        errs.append(float(np.linalg.norm(y - ref)))
                    rows.append(
                        {
                            "n": n,
                            "method": method,
                            "tau": float(tau),
                            "wall_time": float(np.median(times)),
                            "error_vs_exp": float(np.mean(errs)),
                        }
                    )
    return rows
