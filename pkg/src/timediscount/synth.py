"""Synthetic datasets.

``planted`` builds binary classification event sequences.  Every sample
carries routine background measurements (each cell recorded with
probability ``1 - missing``) plus a handful of salient events.  In class
1 the salient events form a motif: fixed relative offsets across several
attributes, placed at a uniformly random lag, with every event's
timestamp jittered independently by up to ``jitter`` steps.  In class 0
the same events occur at independent uniformly random times, so the
classes differ only in the relative timing of the events.

``var`` simulates a stable vector autoregression for regression checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seqdata import DEFAULT_SENTINEL, DataError, EventRecord, ingest_events


@dataclass(frozen=True)
class MotifSpec:
    attributes: tuple[int, ...] = (0, 1, 2)
    offsets: tuple[int, ...] = (0, 3, 6)
    amplitude: float = 5.0


def attribute_names(D: int) -> list[str]:
    return [f"a{i}" for i in range(D)]


def planted_events(
    n: int,
    T: int = 64,
    D: int = 4,
    jitter: int = 3,
    missing: float = 0.5,
    motif: MotifSpec = MotifSpec(),
    noise: float = 1.0,
    seed: int = 0,
) -> tuple[dict[str, list[EventRecord]], np.ndarray]:
    """Event lists per sample (prediction point ``t = T``) and labels."""
    if not 0 <= missing < 1:
        raise DataError(f"missingness must lie in [0, 1), got {missing}")
    if jitter < 0 or T < 1 or D < 1 or n < 1:
        raise DataError("need jitter >= 0 and positive n, T, D")
    if max(motif.attributes) >= D:
        raise DataError("motif uses an attribute beyond D")
    span = max(motif.offsets)
    lo, hi = 1 + jitter, T - span - jitter
    if hi < lo:
        raise DataError(f"motif of span {span} with jitter {jitter} does not fit in T={T}")
    rng = np.random.default_rng(seed)
    names = attribute_names(D)
    labels = rng.integers(0, 2, n)
    groups = {}
    for s in range(n):
        recs = []
        observed = rng.random((D, T)) >= missing
        values = rng.normal(0.0, noise, (D, T))
        for i, d in zip(*np.nonzero(observed)):
            recs.append(EventRecord(T - (d + 1), names[i], float(values[i, d])))
        m = len(motif.offsets)
        if labels[s]:
            start = rng.integers(lo, hi + 1)
            lags = start + np.asarray(motif.offsets) + rng.integers(-jitter, jitter + 1, m)
        else:
            lags = rng.integers(1, T + 1, m)
        amp = motif.amplitude + rng.normal(0.0, noise, m)
        for a, lag, v in zip(motif.attributes, lags, amp):
            recs.append(EventRecord(int(T - lag), names[a], float(v)))
        groups[str(s)] = recs
    return groups, labels


def events_to_arrays(groups, D: int, T: int, sentinel: float = DEFAULT_SENTINEL) -> np.ndarray:
    names = attribute_names(D)
    return np.stack([ingest_events(recs, names, T, T, sentinel).values for recs in groups.values()])


def planted_arrays(n, T=64, D=4, jitter=3, missing=0.5, motif=MotifSpec(), noise=1.0, seed=0,
                   sentinel=DEFAULT_SENTINEL):
    groups, labels = planted_events(n, T, D, jitter, missing, motif, noise, seed)
    return events_to_arrays(groups, D, T, sentinel), labels


def var_series(N: int, D: int = 2, coef: np.ndarray | None = None, noise: float = 0.1,
               seed: int = 0, burn_in: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Simulate x[t] = A x[t-1] + c + e[t]; returns the D x N series and A."""
    rng = np.random.default_rng(seed)
    if coef is None:
        Q = np.linalg.qr(rng.normal(size=(D, D)))[0]
        coef = Q @ np.diag(rng.uniform(0.5, 0.9, D)) @ Q.T
    coef = np.asarray(coef, dtype=np.float64)
    if np.max(np.abs(np.linalg.eigvals(coef))) >= 1:
        raise DataError("VAR coefficient matrix is not stable")
    c = rng.uniform(0.5, 1.0, D)
    x = np.zeros(D)
    out = np.empty((D, N))
    for t in range(-burn_in, N):
        x = coef @ x + c + noise * rng.normal(size=D)
        if t >= 0:
            out[:, t] = x
    return out, coef
