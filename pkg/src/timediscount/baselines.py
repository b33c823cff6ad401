"""Comparison models: VAR, the DyBM prediction model and an ordinary 1D CNN.

The DyBM and CNN feature layers plug into :class:`~timediscount.model.Model`
in place of the time-discounting convolution.  Their forward passes are
written directly from their own definitions (no shared code with
``tdconv``) so that the reductions between the models can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tdconv
from .model import ModelConfig, as_batch, output_loss, prepare_targets, softmax


# --- VAR ------------------------------------------------------------------

@dataclass
class VarParams:
    V: np.ndarray  # (T, D, J): V[tau - 1, i, j] weights lag tau
    b: np.ndarray  # (J,) or a scalar array for the single-bias form

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.V.ndim != 3 or self.V.shape[0] < 1:
            raise ValueError("VAR weights must have shape (lag, D, J) with lag >= 1")

    @property
    def lag(self) -> int:
        return self.V.shape[0]


def var_predict(X, params: VarParams) -> np.ndarray:
    """sum_i sum_{tau=1..T} x_i[tau] V[tau, i, j] - b_j on dense input."""
    X, squeeze = as_batch(X)
    T = params.lag
    if X.shape[-1] < T:
        raise ValueError(f"VAR lag {T} exceeds the {X.shape[-1]} available lags")
    out = np.einsum("bdt,tdj->bj", X[..., :T], params.V) - params.b
    return out[0] if squeeze else out


def var_fit_ols(X, Y, lag: int, ridge: float = 1e-8) -> VarParams:
    """Least-squares VAR over training windows X (B, D, H) -> Y (B, J).

    Falls back to a tiny ridge penalty when the design is rank deficient.
    """
    X, _ = as_batch(X)
    Y = np.asarray(Y, dtype=np.float64)
    B, D, H = X.shape
    if lag > H:
        raise ValueError(f"lag {lag} exceeds history {H}")
    design = np.concatenate([X[..., :lag].transpose(0, 2, 1).reshape(B, lag * D), np.ones((B, 1))], axis=1)
    if np.linalg.matrix_rank(design) < design.shape[1]:
        A = design.T @ design + ridge * np.eye(design.shape[1])
        coef = np.linalg.solve(A, design.T @ Y)
    else:
        coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    V = coef[:-1].reshape(lag, D, -1)
    return VarParams(V, -coef[-1])


class VarModel:
    """VAR trained with the same loop, loss and optimiser as the main model."""

    kind = "var"

    def __init__(self, config: ModelConfig, params: VarParams):
        self.config = config
        self.p = params

    @classmethod
    def init(cls, config: ModelConfig, rng=None) -> "VarModel":
        lag = config.var_lag or config.history
        return cls(config, VarParams(np.zeros((lag, config.D, config.J)), np.zeros(config.J)))

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"var.V": self.p.V, "var.b": self.p.b}

    def _dense(self, X):
        X, _ = as_batch(X)
        return np.where(X == self.config.sentinel, 0.0, X)

    def logits(self, X):
        return var_predict(self._dense(X), self.p)

    def predict(self, X):
        X, squeeze = as_batch(X)
        f = self.logits(X)
        out = softmax(f) if self.config.task == "classify" else f
        return out[0] if squeeze else out

    def objective(self, X, Y) -> float:
        Yb = prepare_targets(self.config.task, Y, self.config.J)
        losses, _ = output_loss(self.config.task, self.logits(X), Yb)
        if losses.size == 0:
            raise ValueError("empty batch")
        return float(losses.mean())

    def loss_and_grad(self, X, Y):
        Xd = self._dense(X)
        Yb = prepare_targets(self.config.task, Y, self.config.J)
        f = var_predict(Xd, self.p)
        losses, df = output_loss(self.config.task, f, Yb)
        df /= len(f)
        grads = {
            "var.V": np.einsum("bdt,bj->tdj", Xd[..., : self.p.lag], df),
            "var.b": -df.sum(axis=0) if self.p.b.ndim else np.asarray(-df.sum()),
        }
        return float(losses.mean()), grads

    def forward(self, X):
        return None

    def kink_signature(self, trace):
        return ()


# --- DyBM -----------------------------------------------------------------

@dataclass
class DybmParams:
    U: np.ndarray  # (K, D)
    lam: float
    b: np.ndarray  # (K,)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if not 0 <= self.lam < 1:
            raise ValueError(f"decay rate must lie in [0, 1), got {self.lam}")


def dybm_predict(X, params: DybmParams) -> np.ndarray:
    """eta[k, d] = sum_i x_i[d] lam**d U[k, i] - b[k] for d = 1..T'."""
    X, squeeze = as_batch(X)
    T = X.shape[-1]
    W = np.array([params.lam**d * params.U for d in range(1, T + 1)])  # (T, K, D)
    eta = np.einsum("bdt,tkd->bkt", X, W) - params.b[:, None]
    return eta[0] if squeeze else eta


def init_dybm(D: int, K: int, lam: float, rng: np.random.Generator) -> DybmParams:
    return DybmParams(rng.uniform(-1, 1, (K, D)) / np.sqrt(D), lam, np.zeros(K))


class DybmLayer:
    kind = "dybm"

    def __init__(self, params: DybmParams):
        self.p = params

    @property
    def K(self):
        return self.p.U.shape[0]

    @property
    def params(self):
        return {"U": self.p.U, "b": self.p.b}

    def forward(self, X):
        return dybm_predict(X, self.p)

    def backward(self, X, upstream):
        T = X.shape[-1]
        decayed = X * self.p.lam ** np.arange(1, T + 1)
        return {"U": np.einsum("bkt,bdt->kd", upstream, decayed), "b": -upstream.sum(axis=(0, 2))}

    def meta(self):
        return {"lam": self.p.lam, "K": self.K}


# --- CNN ------------------------------------------------------------------

@dataclass
class ConvParams:
    W: list[np.ndarray]  # K arrays of shape (T_k + 1, D)
    b: np.ndarray  # (K,)

    def __post_init__(self):
        self.W = [np.asarray(w, dtype=np.float64) for w in self.W]
        self.b = np.asarray(self.b, dtype=np.float64)

    @property
    def patch_lengths(self):
        return tuple(w.shape[0] - 1 for w in self.W)


def cnn_forward(X, params: ConvParams) -> np.ndarray:
    """g[k, d] = sum_i sum_tau W_k[tau, i] x_i[d + tau] - b[k], zero beyond the last lag."""
    X, squeeze = as_batch(X)
    B, D, T = X.shape
    g = np.zeros((B, len(params.W), T))
    for k, w in enumerate(params.W):
        for tau in range(min(w.shape[0], T)):
            g[:, k, : T - tau] += np.einsum("bdt,d->bt", X[..., tau:], w[tau])
    g -= params.b[:, None]
    return g[0] if squeeze else g


def init_cnn(D, K, input_len, rng, lengths=tdconv.DEFAULT_PATCH_LENGTHS) -> ConvParams:
    lengths = [input_len if t == tdconv.FULL else int(t) for t in lengths]
    T = [lengths[k % len(lengths)] for k in range(K)]
    return ConvParams([rng.uniform(-1, 1, (t + 1, D)) / np.sqrt(D * (t + 1)) for t in T], np.zeros(K))


class CnnLayer:
    kind = "cnn"

    def __init__(self, params: ConvParams):
        self.p = params

    @property
    def K(self):
        return len(self.p.W)

    @property
    def params(self):
        out = {f"W{k}": w for k, w in enumerate(self.p.W)}
        out["b"] = self.p.b
        return out

    def forward(self, X):
        return cnn_forward(X, self.p)

    def backward(self, X, upstream):
        T = X.shape[-1]
        grads = {}
        for k, w in enumerate(self.p.W):
            dw = np.zeros_like(w)
            for tau in range(min(w.shape[0], T)):
                dw[tau] = np.einsum("bt,bdt->d", upstream[:, k, : T - tau], X[..., tau:])
            grads[f"W{k}"] = dw
        grads["b"] = -upstream.sum(axis=(0, 2))
        return grads

    def meta(self):
        return {"patch_lengths": list(self.p.patch_lengths)}


def var_from_patches(V: list[np.ndarray], b: np.ndarray, T: int) -> VarParams:
    """VAR equivalent to summing decay-free patch-form maps over all T lags.

    Output j uses patch ``V[j]`` of shape (T_j + 1, D).  Lag ``s`` collects
    every tap tau <= s - 1 of that patch (taps reaching past lag T are
    zero-padded), and the T per-lag biases add up to ``T * b``.
    """
    D = V[0].shape[1]
    W = np.zeros((T, D, len(V)))
    for j, v in enumerate(V):
        taps = np.zeros((T, D))
        n = min(v.shape[0], T)
        taps[:n] = v[:n]
        W[:, :, j] = np.cumsum(taps, axis=0)
    return VarParams(W, T * np.asarray(b, dtype=np.float64))
