"""Full prediction pipeline: pool -> convolution -> pool -> ReLU/FC head.

``Model`` composes a feature layer (time-discounting convolution, or one
of the baseline layers) with two dynamic pooling stages and a fully
connected readout.  Autoregression uses the squared error on the raw
head output; classification applies softmax and cross entropy.  An L1
penalty acts on the hidden units, i.e. the output of the second pooling
before the ReLU.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import dynpool, tdconv
from .seqdata import DEFAULT_SENTINEL, SequenceMatrix

PROB_EPS = 1e-12
KINDS = ("tdconv", "var", "dybm", "cnn", "cnn_pool")
TASKS = ("autoreg", "classify")


@dataclass
class ModelConfig:
    kind: str = "tdconv"
    task: str = "autoreg"
    D: int = 1
    K: int = 4
    lam: float = 0.85
    mu: float = 0.85
    pool1_l0: float = 1.0
    pool1_l: float = 1.0
    pool2_l0: float = 1.0
    pool2_l: float = 1.0
    final_infinite: bool = False
    pool_mode: str = "max"
    patch_lengths: tuple = tdconv.DEFAULT_PATCH_LENGTHS
    l1: float = 0.0
    history: int = 100
    var_lag: int = 0  # 0 means use the full history
    sentinel: float = DEFAULT_SENTINEL

    def __post_init__(self):
        self.patch_lengths = tuple(int(t) for t in self.patch_lengths)
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.kind != "var" and self.K < 2:
            raise ValueError("K must be >= 2")
        if self.l1 < 0:
            raise ValueError("l1 coefficient must be >= 0")
        if self.history < 1 or self.D < 1:
            raise ValueError("history and D must be >= 1")

    @property
    def J(self) -> int:
        return self.D if self.task == "autoreg" else 2

    @property
    def uses_dynamic_pooling(self) -> bool:
        return self.kind in ("tdconv", "cnn_pool")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch_lengths"] = list(self.patch_lengths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# --- losses ---------------------------------------------------------------

def softmax(f: np.ndarray) -> np.ndarray:
    e = np.exp(f - f.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss_autoreg(y, f) -> np.ndarray:
    """Squared Euclidean error; works row-wise on batches."""
    y, f = np.asarray(y, dtype=np.float64), np.asarray(f, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError(f"target shape {y.shape} != prediction shape {f.shape}")
    return np.sum((y - f) ** 2, axis=-1)


def loss_classify(y, p) -> np.ndarray:
    y, p = np.asarray(y, dtype=np.float64), np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"target shape {y.shape} != probability shape {p.shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)):
        raise ValueError("classification targets must be one-hot")
    return -np.sum(y * np.log(np.clip(p, PROB_EPS, 1.0)), axis=-1)


def one_hot(labels, J: int = 2) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    out = np.zeros((labels.size, J))
    out[np.arange(labels.size), labels.astype(int)] = 1.0
    return out


def output_loss(task: str, f: np.ndarray, Y: np.ndarray):
    """Per-sample losses and d(loss)/d(logits) for a batch of head outputs."""
    if task == "autoreg":
        return loss_autoreg(Y, f), 2.0 * (f - Y)
    p = softmax(f)
    return loss_classify(Y, p), p - Y


def prepare_targets(task: str, Y, J: int) -> np.ndarray:
    if task == "classify":
        return one_hot(Y, J)
    Y = np.asarray(Y, dtype=np.float64)
    return Y[None] if Y.ndim == 1 else Y


def as_batch(X) -> tuple[np.ndarray, bool]:
    if isinstance(X, SequenceMatrix):
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return X[None], True
    if X.ndim != 3:
        raise ValueError(f"expected (D, T) or (B, D, T) input, got shape {X.shape}")
    return X, False


# --- pipeline -------------------------------------------------------------

@dataclass
class ForwardTrace:
    X: np.ndarray
    pooled_in: dynpool.PooledMap
    g: np.ndarray
    pooled_hidden: dynpool.PooledMap
    z: np.ndarray
    mask: np.ndarray
    f: np.ndarray
    p: np.ndarray | None = None

    @property
    def output(self) -> np.ndarray:
        return self.f if self.p is None else self.p


class Model:
    """pool1 -> feature layer -> pool2 -> FC(ReLU) [-> softmax]."""

    def __init__(self, config: ModelConfig, layer, W_f: np.ndarray, b_f: np.ndarray):
        self.config = config
        self.layer = layer
        self.W_f = np.asarray(W_f, dtype=np.float64)
        self.b_f = np.asarray(b_f, dtype=np.float64)
        self._plans: dict[int, tuple[dynpool.PoolPlan, dynpool.PoolPlan]] = {}
        plan1, plan2 = self.plans(config.history)
        expected = (config.J, layer.K, plan2.n_windows)
        if self.W_f.shape != expected or self.b_f.shape != (config.J,):
            raise ValueError(f"head shape {self.W_f.shape} does not match {expected}")

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {f"conv.{k}": v for k, v in self.layer.params.items()}
        out["head.W"] = self.W_f
        out["head.b"] = self.b_f
        return out

    def _pool_hparams(self):
        c = self.config
        if c.uses_dynamic_pooling:
            return (c.pool1_l0, c.pool1_l), (c.pool2_l0, c.pool2_l)
        return (1.0, 1.0), (1.0, 1.0)

    def plans(self, L: int):
        """Pooling plans for an input with ``L`` lags.

        With a final infinite window the window counts are those implied by
        the configured history, so longer inputs are absorbed by the last
        window; otherwise the input must have exactly ``history`` lags.
        """
        if L in self._plans:
            return self._plans[L]
        c = self.config
        (a0, a), (b0, b) = self._pool_hparams()
        if L == c.history:
            p1 = dynpool.make_plan(a0, a, L, c.final_infinite)
            p2 = dynpool.make_plan(b0, b, p1.n_windows, c.final_infinite)
        elif c.final_infinite:
            ref1, ref2 = self.plans(c.history)
            p1 = dynpool.make_plan(a0, a, L, True, n_windows=ref1.n_windows)
            p2 = ref2
        else:
            raise ValueError(f"input has {L} lags, model was built for {c.history}")
        self._plans[L] = (p1, p2)
        return p1, p2

    def forward(self, X) -> ForwardTrace:
        X, _ = as_batch(X)
        c = self.config
        if X.shape[1] != c.D:
            raise ValueError(f"input has {X.shape[1]} attributes, model expects {c.D}")
        plan1, plan2 = self.plans(X.shape[-1])
        pooled_in = dynpool.pool(X, plan1, c.sentinel, c.pool_mode)
        if np.any(pooled_in.values == c.sentinel):
            raise RuntimeError("sentinel survived the first pooling stage")
        g = self.layer.forward(pooled_in.values)
        pooled_hidden = dynpool.pool(g, plan2, None, c.pool_mode)
        z = pooled_hidden.values
        mask = z > 0
        f = np.einsum("bkp,jkp->bj", np.where(mask, z, 0.0), self.W_f) + self.b_f
        p = softmax(f) if c.task == "classify" else None
        return ForwardTrace(X, pooled_in, g, pooled_hidden, z, mask, f, p)

    def predict(self, X) -> np.ndarray:
        X, squeeze = as_batch(X)
        out = self.forward(X).output
        return out[0] if squeeze else out

    def objective(self, X, Y, trace: ForwardTrace | None = None) -> float:
        trace = trace or self.forward(X)
        Yb = prepare_targets(self.config.task, Y, self.config.J)
        losses, _ = output_loss(self.config.task, trace.f, Yb)
        if losses.size == 0:
            raise ValueError("empty batch")
        penalty = self.config.l1 * np.abs(trace.z).sum(axis=(1, 2))
        return float(np.mean(losses + penalty))

    def loss_and_grad(self, X, Y) -> tuple[float, dict[str, np.ndarray]]:
        trace = self.forward(X)
        return self.objective(X, Y, trace), self.backward(trace, Y)

    def backward(self, trace: ForwardTrace, Y) -> dict[str, np.ndarray]:
        c = self.config
        Yb = prepare_targets(c.task, Y, c.J)
        B = trace.f.shape[0]
        if B == 0:
            raise ValueError("empty batch")
        _, df = output_loss(c.task, trace.f, Yb)
        df /= B
        a = np.where(trace.mask, trace.z, 0.0)
        grads = {
            "head.W": np.einsum("bj,bkp->jkp", df, a),
            "head.b": df.sum(axis=0),
        }
        dz = np.einsum("bj,jkp->bkp", df, self.W_f) * trace.mask
        if c.l1:
            dz += (c.l1 / B) * np.sign(trace.z)
        dg = dynpool.backward(dz, trace.pooled_hidden)
        for k, v in self.layer.backward(trace.pooled_in.values, dg).items():
            grads[f"conv.{k}"] = v
        return grads

    def kink_signature(self, trace: ForwardTrace):
        """Discrete state of the piecewise-linear parts (pool selection, ReLU/L1 sign)."""
        amax = trace.pooled_hidden.argmax
        return (amax.tobytes() if amax is not None else b"", np.sign(trace.z).tobytes())


def init_head(config: ModelConfig, K: int, P2: int, rng: np.random.Generator):
    s = 1.0 / np.sqrt(K * P2)
    return rng.uniform(-s, s, (config.J, K, P2)), np.zeros(config.J)


def build_model(config: ModelConfig, rng: np.random.Generator | int = 0):
    """Initialise a model of ``config.kind`` with random weights."""
    from . import baselines

    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if config.kind == "var":
        return baselines.VarModel.init(config, rng)
    probe = Model.__new__(Model)
    probe.config, probe._plans = config, {}
    plan1, plan2 = probe.plans(config.history)
    L1 = plan1.n_windows
    if config.kind == "tdconv":
        layer = tdconv.TdConvLayer(
            tdconv.init_params(config.D, config.K, config.lam, config.mu, L1, rng, config.patch_lengths)
        )
    elif config.kind == "dybm":
        layer = baselines.DybmLayer(baselines.init_dybm(config.D, config.K, config.lam, rng))
    else:
        layer = baselines.CnnLayer(baselines.init_cnn(config.D, config.K, L1, rng, config.patch_lengths))
    W_f, b_f = init_head(config, layer.K, plan2.n_windows, rng)
    return Model(config, layer, W_f, b_f)
