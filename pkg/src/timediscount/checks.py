"""Random small problem instances for gradient checking."""

from __future__ import annotations

import numpy as np

from .model import KINDS, ModelConfig, build_model


def random_case(kind: str, rng: np.random.Generator, missing: float = 0.2):
    """A freshly initialised model of ``kind`` with a random batch.

    Sizes stay small (D <= 3, T <= 16, K in {2, 4}); the task, pooling
    plan, pooling mode, L1 weight and missingness pattern are all drawn at
    random.  Returns ``(model, X, Y)``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    D = int(rng.integers(1, 4))
    T = int(rng.integers(2, 17))
    B = int(rng.integers(1, 5))
    task = str(rng.choice(["autoreg", "classify"]))
    cfg = ModelConfig(
        kind=kind, task=task, D=D, K=int(rng.choice([2, 4])),
        lam=float(rng.uniform(0.5, 0.95)), mu=float(rng.uniform(0.5, 0.95)),
        pool1_l0=float(rng.choice([1, 2, 3])), pool1_l=float(rng.choice([1.0, 1.2, 1.5])),
        pool2_l0=float(rng.choice([1, 2])), pool2_l=float(rng.choice([1.0, 1.3])),
        final_infinite=bool(rng.integers(2)), pool_mode=str(rng.choice(["max", "mean"])),
        l1=float(rng.choice([0.0, 0.05])), history=T,
        var_lag=int(rng.integers(0, T + 1)),
    )
    model = build_model(cfg, rng)
    for p in model.params.values():
        p += rng.normal(0, 0.3, p.shape)  # move biases off zero, break symmetry
    X = rng.normal(size=(B, D, T))
    X[rng.random(X.shape) < missing] = cfg.sentinel
    Y = rng.integers(0, 2, B) if task == "classify" else rng.normal(size=(B, D))
    return model, X, Y
