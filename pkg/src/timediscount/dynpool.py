"""Dynamic pooling over the lag axis.

Windows start at the prediction point and widen geometrically with
distance: window ``n`` has width ``max(1, round(l0 * l**n))``.  Windows
are non-overlapping and tile the source, so pooling downsamples.

All functions accept arrays whose last axis is the lag axis; any leading
axes (batch, attribute) are pooled independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PoolPlan:
    l0: float
    l: float
    windows: tuple[tuple[int, int], ...]
    final_infinite: bool = False

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    @property
    def source_len(self) -> int:
        return self.windows[-1][1]

    @property
    def starts(self) -> np.ndarray:
        return np.array([a for a, _ in self.windows], dtype=np.intp)

    @property
    def widths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.windows], dtype=np.intp)

    @property
    def is_identity(self) -> bool:
        return all(b - a == 1 for a, b in self.windows)


@dataclass(frozen=True)
class PooledMap:
    values: np.ndarray
    argmax: np.ndarray | None  # absolute source lag index per window (max mode)
    source_len: int
    empty: np.ndarray  # True where every member of the window was missing
    plan: PoolPlan
    counts: np.ndarray | None = None  # observed members per window (mean mode)
    mode: str = "max"
    observed: np.ndarray | None = None  # source-shaped mask (mean mode)


def window_width(l0: float, l: float, n: int) -> int:
    return max(1, math.floor(l0 * l**n + 0.5))


def make_plan(
    l0: float,
    l: float,
    source_len: int,
    final_infinite: bool = False,
    n_windows: int | None = None,
) -> PoolPlan:
    """Partition lags ``[0, source_len)`` into geometrically growing windows.

    Without ``final_infinite`` the last window is truncated at
    ``source_len``.  With it, the last window runs to the end of the
    history: a partial tail is merged into the preceding window, and if
    ``n_windows`` is given, window ``n_windows - 1`` absorbs everything
    from its start onwards so that the output length does not depend on
    how long the history is.
    """
    if l0 < 1 or l < 1 or source_len < 1:
        raise ValueError(f"need l0 >= 1, l >= 1, source_len >= 1 (got {l0}, {l}, {source_len})")
    if n_windows is not None and n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    windows = []
    a, n = 0, 0
    while a < source_len:
        if final_infinite and n_windows is not None and n == n_windows - 1:
            windows.append((a, source_len))
            break
        b = a + window_width(l0, l, n)
        if b > source_len:
            if final_infinite and windows:
                windows[-1] = (windows[-1][0], source_len)
            else:
                windows.append((a, source_len))
            break
        windows.append((a, b))
        a, n = b, n + 1
    if n_windows is not None and len(windows) != n_windows:
        raise ValueError(
            f"history of {source_len} lags yields {len(windows)} windows, expected {n_windows}"
        )
    return PoolPlan(float(l0), float(l), tuple(windows), final_infinite)


def _check(source: np.ndarray, plan: PoolPlan):
    if source.shape[-1] != plan.source_len:
        raise ValueError(
            f"source has {source.shape[-1]} lags but the plan covers {plan.source_len}"
        )


def max_pool(source: np.ndarray, plan: PoolPlan, sentinel: float | None = None) -> PooledMap:
    """Max over each window, skipping sentinel cells.

    A window with no observed member yields 0 and is flagged in ``empty``;
    its argmax is the window start.  Ties go to the smallest lag.
    """
    source = np.asarray(source, dtype=np.float64)
    _check(source, plan)
    starts = plan.starts
    if sentinel is None:
        masked = source
        observed = None
    else:
        observed = source != sentinel
        masked = np.where(observed, source, -np.inf)
    top = np.maximum.reduceat(masked, starts, axis=-1)
    empty = np.isneginf(top)
    rep = np.repeat(top, plan.widths, axis=-1)
    hit = masked == rep
    if observed is not None:
        hit &= observed
    lag = np.arange(plan.source_len)
    first = np.minimum.reduceat(np.where(hit, lag, plan.source_len), starts, axis=-1)
    argmax = np.where(empty, starts, first)
    values = np.where(empty, 0.0, top)
    return PooledMap(values, argmax, plan.source_len, empty, plan, None, "max")


def mean_pool(source: np.ndarray, plan: PoolPlan, sentinel: float | None = None) -> PooledMap:
    source = np.asarray(source, dtype=np.float64)
    _check(source, plan)
    starts = plan.starts
    if sentinel is None:
        observed = np.ones(source.shape, dtype=bool)
    else:
        observed = source != sentinel
    total = np.add.reduceat(np.where(observed, source, 0.0), starts, axis=-1)
    counts = np.add.reduceat(observed.astype(np.intp), starts, axis=-1)
    empty = counts == 0
    values = np.where(empty, 0.0, total / np.maximum(counts, 1))
    return PooledMap(values, None, plan.source_len, empty, plan, counts, "mean", observed)


def pool(source, plan, sentinel=None, mode="max") -> PooledMap:
    if mode == "max":
        return max_pool(source, plan, sentinel)
    if mode == "mean":
        return mean_pool(source, plan, sentinel)
    raise ValueError(f"unknown pooling mode {mode!r}")


def backward(grad_out: np.ndarray, pooled: PooledMap) -> np.ndarray:
    """Route the gradient of the pooled output back onto the source lags.

    Max mode passes each window's gradient to its argmax.  Mean mode
    spreads it evenly over the observed (non-sentinel) members.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != pooled.values.shape:
        raise ValueError(f"grad shape {grad_out.shape} != pooled shape {pooled.values.shape}")
    g = np.where(pooled.empty, 0.0, grad_out)
    if pooled.mode == "max":
        out = np.zeros(grad_out.shape[:-1] + (pooled.source_len,))
        np.put_along_axis(out, pooled.argmax, g, axis=-1)
        return out
    spread = np.repeat(g / np.maximum(pooled.counts, 1), pooled.plan.widths, axis=-1)
    return np.where(pooled.observed, spread, 0.0)
