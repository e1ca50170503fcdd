"""JSON/CSV file formats for channels, datasets and fit reports.

Complex matrices are nested lists of ``[re, im]`` pairs. Floats are written
with ``repr`` (shortest round-trip form), so every reader reproduces the
written doubles exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .channel import KrausChannel, tp_defect
from .optimizer import FitConfig, FitReport
from .tomography import TomographyDataset

CHANNEL_FORMAT = "stiefel-qpt/channel/v1"
DATASET_FORMAT = "stiefel-qpt/dataset/v1"
REPORT_FORMAT = "stiefel-qpt/fit-report/v1"


class FormatError(ValueError):
    pass


def matrix_to_list(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=np.complex128)
    return np.stack([m.real, m.imag], axis=-1).tolist()


def list_to_matrix(obj) -> np.ndarray:
    a = np.asarray(obj, dtype=np.float64)
    if a.shape[-1] != 2:
        raise FormatError("matrix entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def _dump(obj, path):
    text = json.dumps(obj, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n")


def _load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc


def channel_to_dict(channel: KrausChannel) -> dict:
    return {
        "format": CHANNEL_FORMAT,
        "dim": channel.dim,
        "rank": channel.rank,
        "ops": [matrix_to_list(k) for k in channel.ops],
    }


def channel_from_dict(obj: dict) -> KrausChannel:
    try:
        dim, rank = int(obj["dim"]), int(obj["rank"])
        ops = list_to_matrix(obj["ops"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed channel document: {exc}") from exc
    if ops.shape != (rank, dim, dim):
        raise FormatError(f"ops have shape {ops.shape}, header says {(rank, dim, dim)}")
    return KrausChannel(ops)


def write_channel(path, channel: KrausChannel):
    _dump(channel_to_dict(channel), path)


def read_channel(path) -> KrausChannel:
    """Read a channel file; raises ``NotTracePreservingError`` quoting the defect if it is not TP."""
    return channel_from_dict(_load(path))


def channel_file_defect(path) -> float:
    """TP defect of the operators stored in ``path`` without validating them."""
    return tp_defect(list_to_matrix(_load(path)["ops"]))


def dataset_to_dict(data: TomographyDataset) -> dict:
    order = np.lexsort((data.j, data.i))
    records = [[int(data.i[r]), int(data.j[r]), float(data.values[r])] for r in order]
    return {
        "format": DATASET_FORMAT,
        "dim": data.dim,
        "probes": [matrix_to_list(p) for p in data.probes],
        "measurements": [matrix_to_list(m) for m in data.measurements],
        "records": records,
    }


def dataset_from_dict(obj: dict) -> TomographyDataset:
    try:
        dim = int(obj["dim"])
        probes = list_to_matrix(obj["probes"])
        meas = list_to_matrix(obj["measurements"])
        rec = obj["records"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed dataset document: {exc}") from exc
    if probes.shape[1:] != (dim, dim) or meas.shape[1:] != (dim, dim):
        raise FormatError("probe/measurement matrices do not match the declared dimension")
    i = np.array([r[0] for r in rec], dtype=np.intp)
    j = np.array([r[1] for r in rec], dtype=np.intp)
    v = np.array([r[2] for r in rec], dtype=np.float64)
    return TomographyDataset(probes, meas, i, j, v)


def write_dataset(path, data: TomographyDataset):
    _dump(dataset_to_dict(data), path)


def read_dataset(path) -> TomographyDataset:
    return dataset_from_dict(_load(path))


def write_records_csv(path, data: TomographyDataset):
    order = np.lexsort((data.j, data.i))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for r in order:
            w.writerow([int(data.i[r]), int(data.j[r]), repr(float(data.values[r]))])


def read_records_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    i = np.array([int(r["i"]) for r in rows], dtype=np.intp)
    j = np.array([int(r["j"]) for r in rows], dtype=np.intp)
    v = np.array([float(r["value"]) for r in rows])
    return i, j, v


def report_to_dict(report: FitReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "config": report.config.to_dict(),
        "stop_reason": report.stop_reason,
        "iterations_run": report.iterations_run,
        "wall_time_seconds": report.wall_time_seconds,
        "final_loss": report.final_loss,
        "loss_iterations": list(report.loss_iterations),
        "loss_history": [float(x) for x in report.loss_history],
        "channel": channel_to_dict(report.final_channel),
    }


def report_from_dict(obj: dict) -> FitReport:
    try:
        channel = channel_from_dict(obj["channel"])
        return FitReport(
            config=FitConfig(**obj["config"]),
            final_point=channel.ops.reshape(-1, channel.dim),
            loss_history=[float(x) for x in obj["loss_history"]],
            loss_iterations=[int(x) for x in obj["loss_iterations"]],
            iterations_run=int(obj["iterations_run"]),
            wall_time_seconds=float(obj["wall_time_seconds"]),
            stop_reason=str(obj["stop_reason"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed fit report: {exc}") from exc


def write_report(path, report: FitReport):
    _dump(report_to_dict(report), path)


def read_report(path) -> FitReport:
    return report_from_dict(_load(path))
