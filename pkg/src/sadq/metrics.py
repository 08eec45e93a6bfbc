"""Metrics rows, CSV emission, and small diagnostic reductions."""

import math
from dataclasses import dataclass, fields

import numpy as np


class EmptyVector(ValueError):
    """Raised when a reduction gets no values to reduce."""


@dataclass
class MetricsRow:
    """One evaluation-interval snapshot of a training run.

    Values that are not defined yet (e.g. losses before learning starts)
    carry NaN, serialized as the literal string "nan".
    """

    wall_clock: float
    env_steps: int
    grad_steps: int
    eval_return_mean: float
    eval_return_std: float
    q_loss: float
    model_loss: float
    epsilon: float
    q_discrepancy: float
    target_variance_estimate: float


COLUMNS = tuple(f.name for f in fields(MetricsRow))

_INT_COLUMNS = {"env_steps", "grad_steps"}


def _format(name, value):
    if name in _INT_COLUMNS:
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return repr(v)


def format_row(row):
    return ",".join(_format(c, getattr(row, c)) for c in COLUMNS)


class MetricsWriter:
    """Appends one CSV row per evaluation interval, flushing each row.

    A killed run therefore loses at most the row being written.
    """

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")
        self._fh.write(",".join(COLUMNS) + "\n")
        self._fh.flush()

    def write(self, row):
        self._fh.write(format_row(row) + "\n")
        self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_metrics(rows, path):
    """Write a full metrics CSV (header plus one line per row)."""
    rows = list(rows)
    if not rows:
        raise EmptyVector("no metrics rows to emit")
    with MetricsWriter(path) as w:
        for row in rows:
            w.write(row)


def read_metrics(path):
    """Parse a metrics CSV back into a dict of numpy columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if header != list(COLUMNS):
        raise ValueError(f"{path}: unexpected columns {header}")
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        if name in _INT_COLUMNS:
            out[name] = np.array([int(x) for x in col], dtype=np.int64)
        else:
            out[name] = np.array([float(x) for x in col])
    return out


def q_discrepancy(q_values):
    """Spread of a single state's action values: max minus min."""
    q = np.asarray(q_values, dtype=np.float64)
    if q.size == 0:
        raise EmptyVector("q_discrepancy needs at least one value")
    return float(q.max() - q.min())
