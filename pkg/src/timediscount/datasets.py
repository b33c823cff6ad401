"""Dataset containers with chronological splitting and normalization.

Two shapes of data are supported.  :class:`SeriesData` is one D x N time
series used for autoregression: every step ``t >= history`` is a
prediction point.  :class:`EventData` is a list of per-sample lag
matrices with binary labels, already ordered in time.

Statistics are always fitted on the training part only.

``sunspots_monthly.csv`` is the public monthly mean relative sunspot
number series, January 1749 to December 1983 (2820 months), as
distributed in R's ``datasets::sunspots``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import seqdata
from .seqdata import DEFAULT_SENTINEL, DataError, SequenceMatrix

SUNSPOT_SHA256 = "2c656129ad1223cd9accd83ca4c3927b948471b197454a14ffb1731f7550440d"


def load_sunspots() -> np.ndarray:
    """Return the series as a (1, 2820) array, oldest month first."""
    raw = resources.files(__package__).joinpath("data/sunspots_monthly.csv").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != SUNSPOT_SHA256:
        raise RuntimeError(f"bundled sunspot file is corrupt (sha256 {digest})")
    rows = list(csv.DictReader(raw.decode().splitlines()))
    return np.array([[float(r["sunspots"]) for r in rows]])


def _stats_to_dict(stats: seqdata.AttributeStats) -> dict:
    return {"mode": stats.mode, "center": stats.center.tolist(), "scale": stats.scale.tolist()}


def stats_from_dict(d: dict) -> seqdata.AttributeStats:
    scale = np.asarray(d["scale"], dtype=np.float64)
    return seqdata.AttributeStats(d["mode"], np.asarray(d["center"], dtype=np.float64), scale,
                                  np.zeros(scale.shape, dtype=bool))


@dataclass
class Split:
    """Normalized train/test arrays plus the statistics that produced them."""

    train: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    stats: seqdata.AttributeStats

    @property
    def stats_dict(self) -> dict:
        return _stats_to_dict(self.stats)


@dataclass
class SeriesData:
    series: np.ndarray  # D x N, NaN where missing
    names: tuple[str, ...]
    task = "autoreg"

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.series.ndim != 2:
            raise DataError("series must be a D x N array")

    @property
    def D(self) -> int:
        return self.series.shape[0]

    @property
    def n(self) -> int:
        return self.series.shape[1]

    def cut(self, fraction: float) -> int:
        return len(seqdata.chrono_split(self.n, fraction)[0])

    def head(self, fraction: float) -> "SeriesData":
        """The training part as a dataset of its own (for validation splits)."""
        return SeriesData(self.series[:, : self.cut(fraction)], self.names)

    def _stats(self, cut: int, mode: str) -> seqdata.AttributeStats:
        part = self.series[:, :cut]
        names = self.names
        obs = np.where(np.isnan(part), DEFAULT_SENTINEL, part)
        return seqdata.fit_stats([SequenceMatrix(obs, names)], mode)

    def split(self, fraction: float, history: int, mode: str = "minmax",
              stats: seqdata.AttributeStats | None = None) -> Split:
        cut = self.cut(fraction)
        if cut <= history:
            raise DataError(f"training part of {cut} steps is too short for history {history}")
        stats = stats or self._stats(cut, mode)
        norm = seqdata.normalize_series(self.series, stats)
        train = seqdata.window_arrays(norm, history, range(history, cut))
        test = seqdata.window_arrays(norm, history, range(cut, self.n))
        return Split(train, test, stats)


@dataclass
class EventData:
    matrices: list  # raw SequenceMatrix per sample, in time order
    labels: np.ndarray
    task = "classify"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.matrices) != len(self.labels) or not self.matrices:
            raise DataError("need one label per sample and at least one sample")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")
        shapes = {m.values.shape for m in self.matrices}
        if len(shapes) != 1:
            raise DataError(f"samples have differing shapes {sorted(shapes)}")

    @property
    def D(self) -> int:
        return self.matrices[0].D

    @property
    def n(self) -> int:
        return len(self.matrices)

    @property
    def names(self):
        return self.matrices[0].attribute_names

    def cut(self, fraction: float) -> int:
        return len(seqdata.chrono_split(self.n, fraction)[0])

    def head(self, fraction: float) -> "EventData":
        c = self.cut(fraction)
        return EventData(self.matrices[:c], self.labels[:c])

    def _arrays(self, mats, stats):
        return np.stack([seqdata.apply_stats(m, stats).values for m in mats])

    def split(self, fraction: float, history: int | None = None, mode: str = "standardize",
              stats: seqdata.AttributeStats | None = None) -> Split:
        c = self.cut(fraction)
        if history is not None and history != self.matrices[0].T:
            raise DataError(f"samples have {self.matrices[0].T} lags, config history is {history}")
        stats = stats or seqdata.fit_stats(self.matrices[:c], mode)
        X = self._arrays(self.matrices, stats)
        return Split((X[:c], self.labels[:c]), (X[c:], self.labels[c:]), stats)


def sunspot_data() -> SeriesData:
    return SeriesData(load_sunspots(), ("sunspots",))


def events_dataset(groups: dict, labels: dict[str, int], history: int,
                   attribute_order=None, t: dict[str, int] | None = None) -> EventData:
    """Turn grouped event records into lag matrices.

    ``t`` gives each sample's prediction point; by default it is one step
    after the sample's last record.
    """
    if attribute_order is None:
        attribute_order = sorted({r.attribute for recs in groups.values() for r in recs})
    mats, labs = [], []
    for sid, recs in groups.items():
        if sid not in labels:
            raise DataError(f"sample {sid!r} has no label")
        ts = t.get(sid) if t else None
        if ts is None:
            ts = max((r.timestamp for r in recs), default=0) + 1
        mats.append(seqdata.ingest_events(recs, attribute_order, ts, history))
        labs.append(labels[sid])
    missing = set(labels) - set(groups)
    if missing:
        raise DataError(f"labels for unknown samples {sorted(missing)[:5]}")
    return EventData(mats, np.asarray(labs))


def read_labels_csv(path) -> tuple[dict[str, int], dict[str, int]]:
    """Read ``sample,label[,t]`` rows."""
    labels, t = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"sample", "label"} <= set(reader.fieldnames or []):
            raise DataError(f"{path}: expected columns sample,label[,t]")
        for n, row in enumerate(reader, start=2):
            try:
                labels[row["sample"]] = int(row["label"])
                if row.get("t") not in (None, ""):
                    t[row["sample"]] = int(row["t"])
            except ValueError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
    return labels, t


def write_labels_csv(path, labels, t: int | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "label", "t"] if t is not None else ["sample", "label"])
        for sid, y in enumerate(labels):
            w.writerow([sid, int(y)] + ([t] if t is not None else []))


def planted_split(seed: int = 0, n_train: int = 2000, n_test: int = 1000, **kwargs) -> Split:
    """Planted-motif classification task, standardized on the training samples."""
    from . import synth

    T = kwargs.pop("T", 64)
    D = kwargs.pop("D", 4)
    X, y = synth.planted_arrays(n_train + n_test, T=T, D=D, seed=seed, **kwargs)
    names = synth.attribute_names(D)
    data = EventData([SequenceMatrix(x, names) for x in X], y)
    frac = n_train / (n_train + n_test)
    if data.cut(frac) != n_train:
        frac = (n_train + 0.5) / (n_train + n_test)
    return data.split(frac, T, "standardize")


def sunspot_split(history: int = 100, fraction: float = 0.67) -> Split:
    return sunspot_data().split(fraction, history, "minmax")


