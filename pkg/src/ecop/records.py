"""Per-episode training records and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TrainingRecord:
    episode: int
    J: float
    JC: tuple
    lambda_max: tuple
    beta: float
    loss: float
    feasible: bool
    seconds: float | None
    algorithm: str


def header(num_constraints: int) -> list[str]:
    return (["episode", "J"] + [f"J_C{i + 1}" for i in range(num_constraints)]
            + [f"lambda_max_{i + 1}" for i in range(num_constraints)]
            + ["beta", "loss", "feasible", "seconds", "algorithm"])


def _fmt(x: float) -> str:
    return repr(float(x))


def to_row(rec: TrainingRecord) -> list[str]:
    return ([str(rec.episode), _fmt(rec.J)] + [_fmt(c) for c in rec.JC]
            + [_fmt(v) for v in rec.lambda_max]
            + [_fmt(rec.beta), _fmt(rec.loss), str(int(rec.feasible)),
               "" if rec.seconds is None else f"{rec.seconds:.6f}", rec.algorithm])


def records_to_csv(records: list[TrainingRecord], num_constraints: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(num_constraints))
    for rec in records:
        w.writerow(to_row(rec))
    return buf.getvalue()


def write_records(path, records: list[TrainingRecord], num_constraints: int) -> None:
    Path(path).write_text(records_to_csv(records, num_constraints))


def read_csv(path) -> dict[str, np.ndarray]:
    """Numeric columns of a per-seed or aggregate CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0] if rows else []:
        if key == "algorithm":
            continue
        out[key] = np.array([float(r[key]) if r[key] != "" else math.nan for r in rows])
    return out


def aggregate(per_seed: list[list[TrainingRecord]], num_constraints: int) -> str:
    """Across-seed mean and population std per episode."""
    n_eps = min(len(r) for r in per_seed)
    cols = ["J"] + [f"J_C{i + 1}" for i in range(num_constraints)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode"] + [f"{c}_{s}" for c in cols for s in ("mean", "std")])
    for k in range(n_eps):
        recs = [r[k] for r in per_seed]
        row = [str(recs[0].episode)]
        values = [np.array([rec.J for rec in recs])]
        values += [np.array([rec.JC[i] for rec in recs]) for i in range(num_constraints)]
        for v in values:
            row += [_fmt(v.mean()), _fmt(v.std())]
        w.writerow(row)
    return buf.getvalue()


def final_window(values: np.ndarray, window: int = 100) -> np.ndarray:
    return np.asarray(values)[-window:]
