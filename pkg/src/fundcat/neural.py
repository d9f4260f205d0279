"""Feed-forward ReLU network with softmax output, trained by Adam.

Parameters are a list of ``(W, b)`` pairs with ``W`` of shape
``(fan_in, fan_out)``. Everything runs in float64 numpy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .preprocess import DesignMatrix
from .rng import derive_seed, generator
from .sampling import class_weights, holdout

PROB_FLOOR = 1e-12
DEFAULT_HIDDEN = (512, 256, 128)


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    output_dim: int
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError("all layer widths must be positive")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))


def init_params(arch: MlpArchitecture, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases."""
    rng = generator(seed, "mlp-init")
    return [
        (rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in), np.zeros(fan_out))
        for fan_in, fan_out in arch.layer_dims
    ]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_width(arch: MlpArchitecture, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise ValueError(f"batch width {X.shape[-1]} does not match input_dim {arch.input_dim}")
    return X


def _forward(params, X):
    acts = [X]
    pre = []
    h = X
    for W, b in params[:-1]:
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    W, b = params[-1]
    return softmax(h @ W + b), acts, pre


def forward(params, arch: MlpArchitecture, batch) -> np.ndarray:
    """Class probabilities for each row of ``batch``."""
    return _forward(params, _check_width(arch, batch))[0]


def loss_and_gradients(params, arch: MlpArchitecture, batch, labels, sample_weights=None):
    """Weighted mean cross-entropy and its gradient for every ``(W, b)``.

    Probabilities are floored at 1e-12 before the log; the gradient is the
    exact softmax cross-entropy gradient ``p - onehot``.
    """
    X = _check_width(arch, batch)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    coef = w / w.sum()
    # Non-finite values surface as a DivergenceError below, not as warnings.
    with np.errstate(invalid="ignore", over="ignore"):
        probs, acts, pre = _forward(params, X)
        p_true = np.maximum(probs[np.arange(n), y], PROB_FLOOR)
        loss = float(np.dot(coef, -np.log(p_true)))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite loss")

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= coef[:, None]
    grads = [None] * len(params)
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        grads[layer] = (acts[layer].T @ delta, delta.sum(axis=0))
        if layer:
            delta = (delta @ W.T) * (pre[layer - 1] > 0.0)
    return loss, grads


@dataclass(frozen=True)
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        def zeros():
            return [tuple(np.zeros_like(a) for a in layer) for layer in params]

        return cls(zeros(), zeros(), 0, lr, beta1, beta2, eps)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for layer, layer_g, layer_m, layer_v in zip(params, grads, state.m, state.v):
        p_out, m_out, v_out = [], [], []
        for p, g, m, v in zip(layer, layer_g, layer_m, layer_v):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            p_out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
            m_out.append(m)
            v_out.append(v)
        new_params.append(tuple(p_out))
        new_m.append(tuple(m_out))
        new_v.append(tuple(v_out))
    return new_params, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    class_weighted: bool = False
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.epochs < 1:
            raise ValueError("epochs, batch_size and patience must be >= 1")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


class EarlyStopping:
    """Tracks the best validation loss; ``update`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = -1
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
            return False
        self.wait += 1
        return self.wait >= self.patience


@dataclass(frozen=True)
class MlpModel:
    arch: MlpArchitecture
    params: list
    config: TrainConfig
    history: tuple = ()
    best_epoch: int = 0
    column_names: tuple = field(default=())

    @property
    def n_categories(self) -> int:
        return self.arch.output_dim

    def predict_proba(self, X) -> np.ndarray:
        if isinstance(X, DesignMatrix):
            X = X.values
        X = np.asarray(X, dtype=np.float64)
        return forward(self.params, self.arch, X.reshape(1, -1) if X.ndim == 1 else X)

    def to_dict(self) -> dict:
        return {
            "arch": asdict(self.arch),
            "config": asdict(self.config),
            "best_epoch": self.best_epoch,
            "history": [list(h) for h in self.history],
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict, column_names=()) -> "MlpModel":
        arch = MlpArchitecture(**{**d["arch"], "hidden_dims": tuple(d["arch"]["hidden_dims"])})
        params = [
            (np.array(layer["W"], dtype=np.float64).reshape(fi, fo), np.array(layer["b"], dtype=np.float64))
            for layer, (fi, fo) in zip(d["layers"], arch.layer_dims)
        ]
        return cls(arch, params, TrainConfig(**d["config"]),
                   tuple(tuple(h) for h in d["history"]), int(d["best_epoch"]), tuple(column_names))


def _loss_only(params, X, y, w):
    with np.errstate(invalid="ignore", over="ignore"):
        probs = _forward(params, X)[0]
    p_true = np.maximum(probs[np.arange(X.shape[0]), y], PROB_FLOOR)
    coef = w / w.sum()
    return float(np.dot(coef, -np.log(p_true))), probs


def fit_mlp(X, y=None, config: TrainConfig | None = None, holdout_frac: float = 0.10, *,
            n_categories: int | None = None, log=None) -> MlpModel:
    """Mini-batch Adam with a stratified validation holdout and early stopping.

    The returned model carries the parameters of the epoch with the lowest
    validation loss. ``history`` rows are ``(epoch, train_loss, val_loss,
    val_accuracy)`` with 1-based epochs.
    """
    config = config or TrainConfig()
    names = ()
    if isinstance(X, DesignMatrix):
        names = X.column_names
        y = X.labels if y is None else y
        X = X.values
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_categories = int(y.max()) + 1 if n_categories is None else n_categories
    arch = MlpArchitecture(X.shape[1], n_categories, config.hidden_dims)

    fit_idx, val_idx = holdout(np.arange(y.size), y, holdout_frac, derive_seed(config.seed, "mlp-holdout"))
    if config.class_weighted:
        w_all = class_weights(y[fit_idx], n_categories).sample_weights(y)
    else:
        w_all = np.ones(y.size)
    Xv, yv, wv = X[val_idx], y[val_idx], w_all[val_idx]

    params = init_params(arch, config.seed)
    state = AdamState.fresh(params, config.lr, config.beta1, config.beta2, config.eps)
    rng = generator(config.seed, "mlp-epochs")
    stopper = EarlyStopping(config.patience)
    best_params = params
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(fit_idx)
        total, seen = 0.0, 0
        for start in range(0, order.size, config.batch_size):
            b = order[start:start + config.batch_size]
            try:
                loss, grads = loss_and_gradients(params, arch, X[b], y[b], w_all[b])
            except DivergenceError:
                raise DivergenceError(f"non-finite training loss at epoch {epoch}") from None
            params, state = adam_step(state, params, grads)
            total += loss * b.size
            seen += b.size
        val_loss, probs = _loss_only(params, Xv, yv, wv)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        val_acc = float(np.mean(np.argmax(probs, axis=1) == yv))
        history.append((epoch, total / seen, val_loss, val_acc))
        if log is not None:
            log(f"epoch {epoch}: train_loss={total / seen:.5f} val_loss={val_loss:.5f} val_acc={val_acc:.4f}")
        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = params
        if stop:
            break
    return MlpModel(arch, best_params, config, tuple(history), stopper.best_epoch, tuple(names))


def predict_proba_mlp(model: MlpModel, rows) -> np.ndarray:
    return model.predict_proba(rows)
