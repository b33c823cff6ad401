"""Time-discounting convolution layer.

Input is a batch of pooled matrices ``X`` of shape (B, D, T') where
``X[..., d - 1]`` is lag ``d``.  Each of the K output feature maps is a
same-length correlation over lags, in one of two forms:

* trace form:  g[k, d] = sum_i U[k, i] sum_{tau=0..T_k} lam**(d+tau) x_i[d+tau] - b[k]
* patch form:  g[k, d] = mu**d sum_i sum_{tau=0..T_k} V_k[tau, i] x_i[d+tau] - b[k]

Lags past T' contribute zero.  Trace patches come first in the K axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

FULL = -1  # patch length placeholder meaning "the whole pooled input"
DEFAULT_PATCH_LENGTHS = (1, 2, 4, FULL)


@dataclass
class TdConvParams:
    U: np.ndarray  # (K_u, D)
    V: list[np.ndarray]  # K_v arrays of shape (T_k + 1, D)
    b: np.ndarray  # (K,)
    lam: float
    mu: float
    patch_lengths: tuple[int, ...]  # K entries, trace patches first
    strict_proportion: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.V = [np.asarray(v, dtype=np.float64) for v in self.V]
        self.patch_lengths = tuple(int(t) for t in self.patch_lengths)
        if not (0 <= self.lam < 1 and 0 <= self.mu < 1) and not self._allow_unit_decay:
            raise ValueError(f"decay rates must lie in [0, 1), got lam={self.lam}, mu={self.mu}")
        K_u, K_v = self.K_u, self.K_v
        if self.strict_proportion and abs(K_u - K_v) > 1:
            raise ValueError(f"trace/patch counts must differ by at most one, got {K_u}/{K_v}")
        if self.b.shape != (K_u + K_v,) or len(self.patch_lengths) != K_u + K_v:
            raise ValueError("biases and patch lengths need one entry per feature map")
        for k, v in enumerate(self.V):
            if v.shape != (self.patch_lengths[K_u + k] + 1, self.D):
                raise ValueError(f"patch {K_u + k} has shape {v.shape}")
        if any(t < 0 for t in self.patch_lengths):
            raise ValueError("patch lengths must be resolved to integers >= 0")

    _allow_unit_decay = False

    @property
    def K_u(self) -> int:
        return self.U.shape[0]

    @property
    def K_v(self) -> int:
        return len(self.V)

    @property
    def K(self) -> int:
        return self.K_u + self.K_v

    @property
    def D(self) -> int:
        return self.U.shape[1] if self.K_u else self.V[0].shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"U": self.U}
        for k, v in enumerate(self.V):
            out[f"V{k}"] = v
        out["b"] = self.b
        return out


class UnitDecayParams(TdConvParams):
    """Parameters allowing ``mu = 1``; only used for the decay-free reductions."""

    _allow_unit_decay = True


def resolve_patch_lengths(K: int, lengths, full: int) -> tuple[int, ...]:
    """Assign patch lengths to K feature maps, trace patches first.

    The configured lengths are cycled over each form separately, so both
    forms see every length in the same proportion once K allows it.
    """
    lengths = [full if t == FULL else int(t) for t in lengths]
    K_u = (K + 1) // 2
    K_v = K // 2
    return tuple(lengths[k % len(lengths)] for k in range(K_u)) + tuple(
        lengths[(K_u + k) % len(lengths)] for k in range(K_v)
    )


def init_params(
    D: int, K: int, lam: float, mu: float, input_len: int, rng: np.random.Generator,
    lengths=DEFAULT_PATCH_LENGTHS,
) -> TdConvParams:
    """Uniform weights in [-s, s] with s = 1/sqrt(D (T_k + 1)); zero biases."""
    T = resolve_patch_lengths(K, lengths, input_len)
    K_u = (K + 1) // 2
    U = np.stack([rng.uniform(-1, 1, D) / np.sqrt(D * (T[k] + 1)) for k in range(K_u)])
    V = [rng.uniform(-1, 1, (t + 1, D)) / np.sqrt(D * (t + 1)) for t in T[K_u:]]
    return TdConvParams(U.reshape(K_u, D), V, np.zeros(K), lam, mu, T)


def _suffix_traces(X: np.ndarray, lam: float) -> np.ndarray:
    """R[..., e] = sum_{e' >= e} lam**e' x[e'] with an extra zero column at the end."""
    T = X.shape[-1]
    A = X * lam ** np.arange(1, T + 1)
    R = np.zeros(X.shape[:-1] + (T + 1,))
    R[..., :T] = np.cumsum(A[..., ::-1], axis=-1)[..., ::-1]
    return R


def _trace_windows(R: np.ndarray, T_k: int) -> np.ndarray:
    T = R.shape[-1] - 1
    d = np.arange(T)
    hi = np.minimum(d + T_k + 1, T)
    return R[..., d] - R[..., hi]


def _patch_view(X: np.ndarray, T_k: int) -> np.ndarray:
    pad = np.zeros(X.shape[:-1] + (T_k,))
    return sliding_window_view(np.concatenate([X, pad], axis=-1), T_k + 1, axis=-1)


def _as_batch(X):
    X = np.asarray(X, dtype=np.float64)
    return (X[None], True) if X.ndim == 2 else (X, False)


def forward(X: np.ndarray, params: TdConvParams) -> np.ndarray:
    """Pre-activation feature maps of shape (B, K, T') (or (K, T') for 2D input)."""
    X, squeeze = _as_batch(X)
    if X.shape[1] != params.D:
        raise ValueError(f"input has {X.shape[1]} attributes, parameters expect {params.D}")
    B, _, T = X.shape
    g = np.empty((B, params.K, T))
    if params.K_u:
        R = _suffix_traces(X, params.lam)
        cache = {}
        for k in range(params.K_u):
            t_k = params.patch_lengths[k]
            if t_k not in cache:
                cache[t_k] = _trace_windows(R, t_k)
            g[:, k] = np.einsum("bdt,d->bt", cache[t_k], params.U[k])
    mu_pow = params.mu ** np.arange(1, T + 1)
    for k, v in enumerate(params.V):
        win = _patch_view(X, v.shape[0] - 1)
        g[:, params.K_u + k] = mu_pow * np.einsum("bdtw,wd->bt", win, v)
    g -= params.b[:, None]
    return g[0] if squeeze else g


def grad_weights(X: np.ndarray, params: TdConvParams, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(upstream * g) with respect to U, each V_k and b.

    Batched inputs are summed over the batch axis.
    """
    X, squeeze = _as_batch(X)
    up = np.asarray(upstream, dtype=np.float64)
    if squeeze:
        up = up[None]
    B, _, T = X.shape
    if up.shape != (B, params.K, T):
        raise ValueError(f"upstream shape {up.shape} does not match feature maps {(B, params.K, T)}")
    grads = {}
    dU = np.zeros_like(params.U)
    if params.K_u:
        R = _suffix_traces(X, params.lam)
        cache = {}
        for k in range(params.K_u):
            t_k = params.patch_lengths[k]
            if t_k not in cache:
                cache[t_k] = _trace_windows(R, t_k)
            dU[k] = np.einsum("bt,bdt->d", up[:, k], cache[t_k])
    grads["U"] = dU
    mu_pow = params.mu ** np.arange(1, T + 1)
    for k, v in enumerate(params.V):
        win = _patch_view(X, v.shape[0] - 1)
        grads[f"V{k}"] = np.einsum("bt,bdtw->wd", up[:, params.K_u + k] * mu_pow, win)
    grads["b"] = -up.sum(axis=(0, 2))
    return grads


def reduce_to_dybm(params: TdConvParams) -> TdConvParams:
    """Same weights with every patch length set to 0 (patch form keeps tap 0)."""
    return replace(
        params,
        V=[v[:1].copy() for v in params.V],
        patch_lengths=(0,) * params.K,
    )


class TdConvLayer:
    """Stateful wrapper used by the model pipeline."""

    kind = "tdconv"

    def __init__(self, params: TdConvParams):
        self.p = params

    @property
    def K(self):
        return self.p.K

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.p.arrays()

    def forward(self, X):
        return forward(X, self.p)

    def backward(self, X, upstream):
        return grad_weights(X, self.p, upstream)

    def meta(self) -> dict:
        return {"lam": self.p.lam, "mu": self.p.mu, "patch_lengths": list(self.p.patch_lengths),
                "K_u": self.p.K_u, "K_v": self.p.K_v, "D": self.p.D}
