"""Mini-batch Adam training loop and finite-difference gradient checking."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import auc, rmse

log = logging.getLogger(__name__)


class NumericError(FloatingPointError):
    """A gradient or objective became non-finite."""


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """Bias-corrected Adam update, in place on ``params``."""
    if grads.keys() != params.keys():
        raise ValueError(f"gradient keys {sorted(grads)} != parameter keys {sorted(params)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name} at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        params[name] -= state.alpha * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


@dataclass
class TrainLog:
    metric: str
    iterations: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    test_metric: list[float] = field(default_factory=list)

    def append(self, it: int, obj: float, metric: float):
        if self.iterations and it <= self.iterations[-1]:
            raise ValueError("iterations must increase")
        self.iterations.append(it)
        self.objective.append(obj)
        self.test_metric.append(metric)

    def _evaluated(self):
        m = np.asarray(self.test_metric, dtype=np.float64)
        return np.asarray(self.iterations)[~np.isnan(m)], m[~np.isnan(m)]

    @property
    def average(self) -> float:
        _, m = self._evaluated()
        return float(m.mean()) if m.size else math.nan

    @property
    def best(self) -> tuple[float, int]:
        its, m = self._evaluated()
        if not m.size:
            return math.nan, 0
        i = int(np.argmax(m) if self.metric == "auc" else np.argmin(m))
        return float(m[i]), int(its[i])

    @property
    def final(self) -> float:
        _, m = self._evaluated()
        return float(m[-1]) if m.size else math.nan

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "test_metric"])
            for row in zip(self.iterations, self.objective, self.test_metric):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def evaluate(model, X, Y, metric: str) -> float:
    pred = model.predict(X)
    if metric == "rmse":
        return rmse(Y, pred)
    if metric == "auc":
        return auc(np.asarray(Y).ravel(), pred[:, 1])
    raise ValueError(f"unknown metric {metric!r}")


def default_metric(model) -> str:
    return "rmse" if model.config.task == "autoreg" else "auc"


def batch_indices(n: int, batch_size: int, iterations: int, rng=None):
    """Sequential mini-batches with wrap-around; reshuffled per epoch when ``rng`` is given."""
    if n == 0:
        raise ValueError("empty training set")
    size = min(batch_size, n)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    cursor = 0
    for _ in range(iterations):
        idx = []
        while len(idx) < size:
            take = min(size - len(idx), n - cursor)
            idx.extend(order[cursor : cursor + take])
            cursor += take
            if cursor == n:
                cursor = 0
                if rng is not None:
                    order = rng.permutation(n)
        yield np.asarray(idx)


def train(
    model,
    train_data: tuple[np.ndarray, np.ndarray],
    test_data: tuple[np.ndarray, np.ndarray] | None,
    iterations: int,
    batch_size: int = 16,
    seed: int = 0,
    metric: str | None = None,
    eval_every: int = 1,
    shuffle: bool = False,
    alpha: float = 1e-3,
) -> TrainLog:
    """Run ``iterations`` Adam steps and log the test metric.

    The test metric is computed after every ``eval_every``-th update and
    after the last one; other records carry NaN.
    """
    metric = metric or default_metric(model)
    X, Y = train_data
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    if len(X) == 0 or (test_data is not None and len(test_data[0]) == 0):
        raise ValueError("training and test sets must be non-empty")
    rng = np.random.default_rng(seed) if shuffle else None
    state = AdamState.zeros_like(model.params, alpha=alpha)
    out = TrainLog(metric)
    for it, idx in enumerate(batch_indices(len(X), batch_size, iterations, rng), start=1):
        obj, grads = model.loss_and_grad(X[idx], Y[idx])
        if not math.isfinite(obj):
            raise NumericError(f"objective became {obj} at iteration {it}")
        adam_step(model.params, grads, state)
        m = math.nan
        if test_data is not None and (it % eval_every == 0 or it == iterations):
            m = evaluate(model, test_data[0], test_data[1], metric)
        out.append(it, obj, m)
    return out


# --- gradient checking ----------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    n_checked: int
    n_skipped: int
    tolerance: float
    failures: list[tuple[str, tuple[int, ...], float, float, float]]

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        where = f" at {self.worst[0]}{list(self.worst[1])}" if self.worst else ""
        return (
            f"{status}: max rel err {self.max_rel_error:.3e}{where}, "
            f"{self.n_checked} checked, {self.n_skipped} skipped near kinks"
        )


def relative_error(a: float, n: float, floor: float = 1e-8) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(model, X, Y, step: float = 1e-5, tolerance: float = 1e-4, corrupt=None,
               floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    A coordinate is skipped when either perturbed evaluation changes the
    discrete state of the network (which pooled unit wins, which hidden
    units are active), since the objective is not differentiable across
    such a kink.  ``corrupt`` may alter the analytic gradients before
    comparison (fault injection).
    """
    _, grads = model.loss_and_grad(X, Y)
    if corrupt is not None:
        corrupt(grads)
    base_sig = model.kink_signature(model.forward(X))
    worst, worst_err = None, 0.0
    checked = skipped = 0
    failures = []
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            tr = model.forward(X)
            kinked = model.kink_signature(tr) != base_sig
            fp = model.objective(X, Y, tr) if tr is not None else model.objective(X, Y)
            p[idx] = orig - step
            tr = model.forward(X)
            kinked |= model.kink_signature(tr) != base_sig
            fm = model.objective(X, Y, tr) if tr is not None else model.objective(X, Y)
            p[idx] = orig
            if kinked:
                skipped += 1
                continue
            checked += 1
            numeric = (fp - fm) / (2 * step)
            analytic = float(grads[name][idx])
            err = relative_error(analytic, numeric, floor)
            if err >= tolerance:
                failures.append((name, idx, analytic, numeric, err))
            if err > worst_err or worst is None:
                worst, worst_err = (name, idx), err
    return GradCheckReport(worst_err, worst, checked, skipped, tolerance, failures)
