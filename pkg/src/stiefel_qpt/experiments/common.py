"""Seeds, grid execution and CSV/metadata writers shared by the studies."""

from __future__ import annotations

import csv
import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits


def derive_seed(*keys) -> int:
    """Deterministic 32-bit seed from integer/str keys (order-sensitive)."""
    ints = []
    for k in keys:
        if isinstance(k, str):
            ints.extend(k.encode())
        elif isinstance(k, float):
            ints.extend(np.frombuffer(np.float64(k).tobytes(), dtype=np.uint32).tolist())
        else:
            ints.append(int(k))
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("QPT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _init_worker():
    threadpool_limits(1)


def run_cells(fn: Callable, cells: Sequence, threads: int | None = None) -> list:
    """Map ``fn`` over ``cells``; results come back in grid order regardless of completion order."""
    threads = min(resolve_threads(threads), max(1, len(cells)))
    if threads == 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker) as pool:
        return list(pool.map(fn, cells))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_table(path, rows: Iterable[dict], columns: Sequence[str]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_grid(path, x: np.ndarray, y: np.ndarray, values: np.ndarray, corner: str = "im\\re"):
    """Matrix CSV: first row holds the x axis, first column the y axis."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([corner] + [repr(float(v)) for v in x])
        for yv, row in zip(y, values):
            w.writerow([repr(float(yv))] + [repr(float(v)) for v in row])


def write_matrix(path, values: np.ndarray, labels: Sequence[str] | None = None):
    values = np.asarray(values)
    labels = list(labels) if labels is not None else [str(i) for i in range(values.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + labels)
        for lab, row in zip(labels, values):
            w.writerow([lab] + [repr(float(v)) for v in row])


def write_metadata(path, study: str, config: dict, extra: dict | None = None):
    from .. import __version__

    meta = {
        "study": study,
        "config": config,
        "versions": {
            "stiefel_qpt": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        meta.update(extra)
    Path(path).write_text(json.dumps(meta, indent=1, default=_fmt) + "\n")
