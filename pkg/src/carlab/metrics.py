"""Retention statistics over the per-stage accuracy record, and result files."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InsufficientHistoryError

if TYPE_CHECKING:
    from .trainer import RunLog

MATRIX_CSV = "accuracy_matrix.csv"
CURVE_CSV = "average_accuracy.csv"
FORGETTING_CSV = "forgetting.csv"
LOSS_CSV = "loss_trace.csv"


@dataclass
class AccuracyMatrix:
    """Lower-triangular record: ``rows[k][i]`` is task ``i``'s test accuracy (%) after training task ``k``."""

    rows: list[list[float]] = field(default_factory=list)

    def __post_init__(self):
        rows, self.rows = self.rows, []
        for r in rows:
            self.append(r)

    def append(self, row: Sequence[float]) -> None:
        row = [float(v) for v in row]
        if len(row) != len(self.rows) + 1:
            raise ValueError(f"row {len(self.rows) + 1} must hold {len(self.rows) + 1} entries, got {len(row)}")
        if any(not (0.0 <= v <= 100.0) for v in row):
            raise ValueError(f"accuracies must lie in [0, 100]: {row}")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        """Square array with NaN above the diagonal."""
        n = len(self.rows)
        out = np.full((n, n), np.nan)
        for k, row in enumerate(self.rows):
            out[k, :k + 1] = row
        return out


def average_accuracy(m: AccuracyMatrix, after_task: int) -> float:
    """Mean accuracy over seen tasks after training task ``after_task`` (1-based)."""
    if not 1 <= after_task <= len(m):
        raise IndexError(f"after_task must be in 1..{len(m)}, got {after_task}")
    row = m.rows[after_task - 1]
    return sum(row) / len(row)


def average_curve(m: AccuracyMatrix) -> list[float]:
    return [average_accuracy(m, k) for k in range(1, len(m) + 1)]


def forgetting(m: AccuracyMatrix) -> list[float]:
    """Peak minus final accuracy for every task but the last.

    The peak runs over all measurements of the task, including the one taken
    right after it was learned and the final one, so values are never negative.
    """
    n = len(m)
    if n < 2:
        raise InsufficientHistoryError("forgetting needs at least two training stages")
    final = m.rows[-1]
    return [max(m.rows[k][i] for k in range(i, n)) - final[i] for i in range(n - 1)]


def _fmt(v: float) -> str:
    return repr(float(v))


def emit_results(m: AccuracyMatrix, log: "RunLog | None", path) -> dict[str, Path]:
    """Write the matrix, average curve, forgetting and loss-trace CSVs into ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    files = {name: out / name for name in (MATRIX_CSV, CURVE_CSV, FORGETTING_CSV, LOSS_CSV)}

    with open(files[MATRIX_CSV], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["after_task", "task_i", "acc"])
        for k, row in enumerate(m.rows, start=1):
            for i, acc in enumerate(row, start=1):
                w.writerow([k, i, _fmt(acc)])

    with open(files[CURVE_CSV], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["after_task", "avg_acc"])
        for k, avg in enumerate(average_curve(m), start=1):
            w.writerow([k, _fmt(avg)])

    with open(files[FORGETTING_CSV], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_i", "forgetting"])
        if len(m) >= 2:
            for i, f in enumerate(forgetting(m), start=1):
                w.writerow([i, _fmt(f)])

    with open(files[LOSS_CSV], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "ce", "icf", "total"])
        if log is not None:
            for rec in log.losses:
                w.writerow([rec.step, _fmt(rec.loss.ce), _fmt(rec.loss.icf), _fmt(rec.loss.total)])
    return files


def read_matrix_csv(path) -> AccuracyMatrix:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            k, i = int(rec["after_task"]), int(rec["task_i"])
            if k > len(rows):
                rows.append([])
            if k != len(rows) or i != len(rows[-1]) + 1:
                raise ValueError(f"{path}: entries out of order at after_task={k}, task_i={i}")
            rows[-1].append(float(rec["acc"]))
    return AccuracyMatrix(rows)
