"""Matrix representation of event sequences and time series.

A sample is a D x T matrix whose column ``s`` holds the observation at
time ``t - (s + 1)``, i.e. column 0 is lag 1 (the most recent step before
the prediction point).  Missing cells hold a large negative sentinel so
that max pooling ignores them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_SENTINEL = -1e6


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class EventRecord:
    timestamp: int
    attribute: str
    value: float

    def __post_init__(self):
        if self.timestamp < 0:
            raise DataError(f"negative timestamp {self.timestamp}")
        if not math.isfinite(self.value):
            raise DataError(
                f"non-finite value {self.value!r} for attribute {self.attribute!r}"
            )


@dataclass(frozen=True)
class SequenceMatrix:
    values: np.ndarray
    attribute_names: tuple[str, ...]
    sentinel: float = DEFAULT_SENTINEL

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"expected a non-empty D x T matrix, got shape {values.shape}")
        if len(self.attribute_names) != values.shape[0]:
            raise DataError(
                f"{len(self.attribute_names)} attribute names for {values.shape[0]} rows"
            )
        bad = ~(np.isfinite(values) | (values == self.sentinel))
        if bad.any():
            raise DataError("matrix cells must be finite or equal to the sentinel")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

    @property
    def D(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return self.values == self.sentinel

    def to_events(self, t: int) -> list[EventRecord]:
        """Inverse of :func:`ingest_events` for prediction point ``t``."""
        rec = []
        for i, name in enumerate(self.attribute_names):
            for s in range(self.T):
                v = self.values[i, s]
                if v != self.sentinel:
                    rec.append(EventRecord(t - (s + 1), name, float(v)))
        return rec


@dataclass(frozen=True)
class AttributeStats:
    mode: str
    center: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray = field(default=None)

    @property
    def D(self) -> int:
        return len(self.center)

    def inverse(self, matrix: SequenceMatrix) -> SequenceMatrix:
        return _transform(matrix, self, inverse=True)


@dataclass(frozen=True)
class LabeledSample:
    matrix: SequenceMatrix
    target: np.ndarray | int

    def __post_init__(self):
        if isinstance(self.target, (int, np.integer)):
            if self.target not in (0, 1):
                raise DataError(f"class label must be 0 or 1, got {self.target}")
        else:
            target = np.asarray(self.target, dtype=np.float64)
            if target.shape != (self.matrix.D,):
                raise DataError(
                    f"autoregression target has shape {target.shape}, expected ({self.matrix.D},)"
                )
            object.__setattr__(self, "target", target)


def ingest_events(
    records: Iterable[EventRecord],
    attribute_order: Sequence[str],
    t: int,
    T: int,
    sentinel: float = DEFAULT_SENTINEL,
) -> SequenceMatrix:
    """Place events recorded before ``t`` into a D x T lag matrix.

    Events at ``t - d`` for ``d`` in ``[1, T]`` land in column ``d - 1``;
    anything outside that range is dropped. Later records overwrite
    earlier ones at the same (timestamp, attribute).
    """
    if t <= 0 or T < 1:
        raise DataError(f"need t > 0 and T >= 1, got t={t}, T={T}")
    row = {name: i for i, name in enumerate(attribute_order)}
    values = np.full((len(attribute_order), T), sentinel, dtype=np.float64)
    for r in records:
        if r.attribute not in row:
            raise DataError(f"unknown attribute {r.attribute!r}")
        if not math.isfinite(r.value):
            raise DataError(f"non-finite value for attribute {r.attribute!r}")
        d = t - r.timestamp
        if 1 <= d <= T:
            values[row[r.attribute], d - 1] = r.value
    return SequenceMatrix(values, tuple(attribute_order), sentinel)


def fit_stats(train: Sequence[SequenceMatrix], mode: str = "standardize") -> AttributeStats:
    """Per-attribute statistics over the finite cells of the training matrices.

    ``standardize`` uses the population standard deviation; ``minmax`` maps the
    training range onto [0, 1]. A zero spread is flagged and treated as scale 1.
    """
    if mode not in ("standardize", "minmax"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if not train:
        raise DataError("no training matrices")
    names = train[0].attribute_names
    stacked = np.concatenate([m.values for m in train], axis=1)
    sentinel = train[0].sentinel
    center = np.empty(len(names))
    scale = np.empty(len(names))
    for i, name in enumerate(names):
        row = stacked[i][stacked[i] != sentinel]
        if row.size == 0:
            raise DataError(f"attribute {name!r} has no observed values in the training data")
        if mode == "standardize":
            center[i] = row.mean()
            scale[i] = row.std()
        else:
            center[i] = row.min()
            scale[i] = row.max() - row.min()
    degenerate = scale == 0
    scale[degenerate] = 1.0
    return AttributeStats(mode, center, scale, degenerate)


def _transform(matrix: SequenceMatrix, stats: AttributeStats, inverse: bool) -> SequenceMatrix:
    if stats.D != matrix.D:
        raise DataError(f"stats for {stats.D} attributes applied to a {matrix.D}-row matrix")
    vals = matrix.values.copy()
    miss = matrix.missing
    c = stats.center[:, None]
    s = stats.scale[:, None]
    out = vals * s + c if inverse else (vals - c) / s
    out[miss] = matrix.sentinel
    return SequenceMatrix(out, matrix.attribute_names, matrix.sentinel)


def apply_stats(matrix: SequenceMatrix, stats: AttributeStats) -> SequenceMatrix:
    return _transform(matrix, stats, inverse=False)


def normalize_series(series: np.ndarray, stats: AttributeStats, sentinel: float = DEFAULT_SENTINEL):
    """Row-wise transform of a D x N series with NaN or sentinel for missing cells."""
    series = np.asarray(series, dtype=np.float64)
    miss = np.isnan(series) | (series == sentinel)
    out = (series - stats.center[:, None]) / stats.scale[:, None]
    out[miss] = sentinel
    return out


def chrono_split(n: int, fraction: float) -> tuple[range, range]:
    if not 0 < fraction < 1:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    cut = math.floor(fraction * n)
    if cut < 1 or n - cut < 1:
        raise DataError(f"series of length {n} too short for a {fraction} split")
    return range(0, cut), range(cut, n)


def window_samples(
    series: np.ndarray,
    history: int,
    targets: Iterable[int] | None = None,
    sentinel: float = DEFAULT_SENTINEL,
    attribute_names: Sequence[str] | None = None,
) -> list[LabeledSample]:
    """Autoregression samples from a single D x N series.

    One sample per prediction point ``t`` (default every ``t`` in
    ``[history, N)``): the matrix holds lags 1..history before ``t``
    and the target is column ``t``.
    """
    X, Y = window_arrays(series, history, targets, sentinel)
    D = X.shape[1]
    names = tuple(attribute_names) if attribute_names else tuple(f"x{i}" for i in range(D))
    return [LabeledSample(SequenceMatrix(x, names, sentinel), y) for x, y in zip(X, Y)]


def window_arrays(series, history, targets=None, sentinel=DEFAULT_SENTINEL):
    """Array form of :func:`window_samples`: ``X`` is (B, D, H), ``Y`` is (B, D)."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[None, :]
    D, N = series.shape
    if history < 1:
        raise ValueError("history must be >= 1")
    if N <= history:
        raise DataError(f"series of length {N} has no prediction point for history {history}")
    ts = np.arange(history, N) if targets is None else np.asarray(list(targets), dtype=int)
    if ts.size and (ts.min() < history or ts.max() >= N):
        raise DataError("prediction points must lie in [history, N)")
    lags = np.arange(1, history + 1)
    idx = ts[:, None] - lags[None, :]
    X = series[:, idx].transpose(1, 0, 2)
    Y = series[:, ts].T
    if np.any(Y == sentinel):
        raise DataError("autoregression targets may not be missing")
    return np.ascontiguousarray(X), np.ascontiguousarray(Y)


# --- CSV formats ---------------------------------------------------------

def read_events_csv(path: str | Path) -> dict[str, list[EventRecord]]:
    """Read event rows grouped by sample id.

    Header ``timestamp,attribute,value``; an optional leading ``sample``
    column groups rows into samples (otherwise everything is one sample "0").
    """
    groups: dict[str, list[EventRecord]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if not {"timestamp", "attribute", "value"} <= set(cols):
            raise DataError(f"{path}: expected columns timestamp,attribute,value, got {cols}")
        for n, row in enumerate(reader, start=2):
            try:
                rec = EventRecord(int(row["timestamp"]), row["attribute"], float(row["value"]))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
            groups.setdefault(row.get("sample", "0"), []).append(rec)
    return groups


def write_events_csv(path: str | Path, groups: dict[str, list[EventRecord]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "timestamp", "attribute", "value"])
        for sid, recs in groups.items():
            for r in recs:
                w.writerow([sid, r.timestamp, r.attribute, repr(r.value)])


def read_matrix_csv(path: str | Path, sentinel: float = DEFAULT_SENTINEL) -> SequenceMatrix:
    names, rows = [], []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if not line:
                continue
            names.append(line[0])
            rows.append([sentinel if c.strip() == "" else float(c) for c in line[1:]])
    if len({len(r) for r in rows}) > 1:
        raise DataError(f"{path}: ragged matrix rows")
    return SequenceMatrix(np.array(rows, dtype=np.float64), tuple(names), sentinel)


def write_matrix_csv(path: str | Path, matrix: SequenceMatrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for name, row in zip(matrix.attribute_names, matrix.values):
            w.writerow([name] + ["" if v == matrix.sentinel else repr(float(v)) for v in row])


def read_series_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    """Return a D x N array (NaN where missing), oldest step first, and the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for n, line in enumerate(reader, start=2):
            if not line:
                continue
            if len(line) != len(header):
                raise DataError(f"{path}:{n}: expected {len(header)} columns")
            try:
                rows.append([math.nan if c.strip() == "" else float(c) for c in line])
            except ValueError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64).T, header
