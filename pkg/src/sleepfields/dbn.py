"""Stacked RBMs with a softmax top layer, used as a feature extractor that
maps each epoch to a vector of class probabilities.

Visible units are logistic even though inputs are standardized real values;
this is an approximation that is adequate for feature extraction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .cnf import logistic
from .errors import ConfigurationError, InputError, NumericError, StateError, TrainingError
from .optim import Method, OptimConfig, minimize

log = logging.getLogger(__name__)

__all__ = [
    "RbmLayer",
    "DbnConfig",
    "DbnModel",
    "rbm_hidden_probs",
    "rbm_visible_probs",
    "reconstruction_error",
    "init_layer",
    "cd1_update",
    "pretrain",
    "softmax",
    "softmax_nll_and_gradient",
    "finetune_softmax",
    "transform",
    "predict",
]


@dataclass(frozen=True, eq=False)
class RbmLayer:
    W: np.ndarray  # (visible, hidden)
    vbias: np.ndarray
    hbias: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or self.vbias.shape != (W.shape[0],) or self.hbias.shape != (W.shape[1],):
            raise InputError("RBM parameter shapes inconsistent")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(self.vbias)) and np.all(np.isfinite(self.hbias))):
            raise NumericError("RBM parameters must be finite")
        object.__setattr__(self, "W", W)

    @property
    def n_visible(self) -> int:
        return self.W.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class DbnConfig:
    hidden: tuple[int, ...] = (64, 32)
    epochs: int = 200
    lr: float = 0.05
    batch_size: int = 32
    seed: int = 0
    l2: float = 1e-3
    finetune_iter: int = 500
    # backpropagate the classification loss through the RBM stack as well
    backprop: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigurationError("need at least one hidden layer of positive size")
        if self.epochs < 0 or self.lr < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs, lr must be >= 0 and batch_size >= 1")


@dataclass(frozen=True, eq=False)
class DbnModel:
    layers: tuple[RbmLayer, ...]
    top: np.ndarray | None = None  # (last hidden + 1, L); last row is the bias
    n_labels: int = 0
    meta: dict = field(default_factory=dict)

    kind = "dbn"

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_hidden != b.n_visible:
                raise InputError("consecutive RBM layer sizes do not chain")

    @property
    def n_visible(self) -> int:
        return self.layers[0].n_visible

    def encode(self, X: np.ndarray) -> list[np.ndarray]:
        """Activations of every layer, input first."""
        acts = [X]
        for layer in self.layers:
            acts.append(rbm_hidden_probs(layer, acts[-1]))
        return acts


def rbm_hidden_probs(layer: RbmLayer, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != layer.n_visible:
        raise InputError(f"visible dimension {v.shape[-1]} != {layer.n_visible}")
    return logistic(v @ layer.W + layer.hbias)


def rbm_visible_probs(layer: RbmLayer, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != layer.n_hidden:
        raise InputError(f"hidden dimension {h.shape[-1]} != {layer.n_hidden}")
    return logistic(h @ layer.W.T + layer.vbias)


def reconstruction_error(layer: RbmLayer, v) -> float:
    """Mean squared error of the mean-field up-down reconstruction."""
    v = np.asarray(v, dtype=float)
    return float(np.mean((v - rbm_visible_probs(layer, rbm_hidden_probs(layer, v))) ** 2))


def init_layer(n_visible: int, n_hidden: int, rng: np.random.Generator) -> RbmLayer:
    return RbmLayer(rng.normal(0.0, 0.01, size=(n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))


def cd1_update(layer: RbmLayer, batch, lr: float, seed: int) -> RbmLayer:
    """One contrastive-divergence step with a single Gibbs sweep.

    Hidden units are sampled once; the reconstruction and the negative-phase
    hidden statistics use probabilities.
    """
    v0 = np.asarray(batch, dtype=float)
    if v0.ndim != 2 or v0.shape[1] != layer.n_visible:
        raise InputError(f"minibatch rows must have {layer.n_visible} entries")
    if lr == 0:
        return layer
    rng = np.random.default_rng(seed)
    h0 = rbm_hidden_probs(layer, v0)
    h0_sample = (rng.random(h0.shape) < h0).astype(float)
    v1 = rbm_visible_probs(layer, h0_sample)
    h1 = rbm_hidden_probs(layer, v1)
    B = v0.shape[0]
    dW = (v0.T @ h0 - v1.T @ h1) / B
    dv = (v0 - v1).mean(axis=0)
    dh = (h0 - h1).mean(axis=0)
    W = layer.W + lr * dW
    if not np.all(np.isfinite(W)):
        raise NumericError("non-finite RBM update")
    return RbmLayer(W, layer.vbias + lr * dv, layer.hbias + lr * dh)


def _train_layer(layer: RbmLayer, X: np.ndarray, cfg: DbnConfig, rng) -> tuple[RbmLayer, list[float]]:
    curve = []
    n = X.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            layer = cd1_update(layer, X[idx], cfg.lr, int(rng.integers(2**63)))
        curve.append(reconstruction_error(layer, X))
    return layer, curve


def pretrain(X, config: DbnConfig | None = None) -> DbnModel:
    """Greedy layer-wise CD-1: each layer trains on the hidden probabilities of the one below."""
    cfg = config or DbnConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("pretraining data must be a non-empty 2-D array")
    rng = np.random.default_rng(cfg.seed)
    layers = []
    curves = []
    inp = X
    for size in cfg.hidden:
        layer = init_layer(inp.shape[1], size, rng)
        layer, curve = _train_layer(layer, inp, cfg, rng)
        layers.append(layer)
        curves.append(curve)
        inp = rbm_hidden_probs(layer, inp)
    return DbnModel(tuple(layers), meta={"epochs": cfg.epochs, "lr": cfg.lr, "seed": cfg.seed, "curves": curves})


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _pack_params(model: DbnModel, top: np.ndarray, backprop: bool) -> np.ndarray:
    parts = [top.ravel()]
    if backprop:
        for layer in model.layers:
            parts += [layer.W.ravel(), layer.hbias]
    return np.concatenate(parts)


def _unpack_params(model: DbnModel, v: np.ndarray, L: int, backprop: bool):
    d = model.layers[-1].n_hidden + 1
    top = v[: d * L].reshape(d, L)
    if not backprop:
        return model.layers, top
    i = d * L
    layers = []
    for layer in model.layers:
        k = layer.W.size
        W = v[i : i + k].reshape(layer.W.shape)
        hb = v[i + k : i + k + layer.n_hidden]
        i += k + layer.n_hidden
        layers.append(RbmLayer(W, layer.vbias, hb))
    return tuple(layers), top


def softmax_nll_and_gradient(model: DbnModel, params: np.ndarray, X, y, l2: float = 0.0, backprop: bool = False):
    """Summed cross-entropy of the softmax top (plus L2) and its flat gradient.

    ``params`` holds the top weights and, with ``backprop``, every layer's
    weights and hidden biases in stack order.
    """
    L = model.n_labels
    layers, top = _unpack_params(model, np.asarray(params, dtype=float), L, backprop)
    acts = [np.asarray(X, dtype=float)]
    for layer in layers:
        acts.append(logistic(acts[-1] @ layer.W + layer.hbias))
    feats = np.hstack([acts[-1], np.ones((acts[-1].shape[0], 1))])
    logits = feats @ top
    logp = logits - logits.max(axis=1, keepdims=True)
    logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
    n = len(y)
    nll = -float(logp[np.arange(n), y].sum())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    grads = [(feats.T @ dlogits).ravel()]
    if backprop:
        layer_grads = []
        da = dlogits @ top[:-1].T
        for k in range(len(layers) - 1, -1, -1):
            a = acts[k + 1]
            dz = da * a * (1 - a)
            layer_grads.append((acts[k].T @ dz).ravel())
            layer_grads.append(dz.sum(axis=0))
            da = dz @ layers[k].W.T
        # reverse pairs back into stack order
        pairs = [layer_grads[i : i + 2] for i in range(0, len(layer_grads), 2)][::-1]
        for pw, pb in pairs:
            grads += [pw, pb]
    g = np.concatenate(grads)
    p = np.asarray(params, dtype=float)
    return nll + 0.5 * l2 * float(p @ p), g + l2 * p


def finetune_softmax(model: DbnModel, X, y, n_labels: int, config: DbnConfig | None = None) -> DbnModel:
    """Fit the softmax top (and optionally the stack) by minimizing cross-entropy."""
    cfg = config or DbnConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise InputError("features and labels differ in length")
    m = replace(model, n_labels=n_labels)
    d = m.layers[-1].n_hidden + 1
    top0 = np.zeros((d, n_labels))
    x0 = _pack_params(m, top0, cfg.backprop)
    res = minimize(
        lambda v: softmax_nll_and_gradient(m, v, X, y, cfg.l2, cfg.backprop),
        x0,
        OptimConfig(method=Method.LBFGS, max_iter=cfg.finetune_iter, tol=1e-5),
    )
    if not np.all(np.isfinite(res.x)):
        raise TrainingError("softmax fine-tuning diverged")
    layers, top = _unpack_params(m, res.x, n_labels, cfg.backprop)
    meta = dict(m.meta, finetune_status=res.status.value, finetune_iterations=res.iterations)
    return replace(m, layers=tuple(layers), top=top, meta=meta)


def transform(model: DbnModel, X) -> np.ndarray:
    """Per-epoch class probabilities ``(n, L)``."""
    if model.top is None:
        raise StateError("DBN has no trained softmax layer; run finetune_softmax first")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_visible:
        raise InputError(f"expected inputs of dimension {model.n_visible}")
    h = model.encode(X)[-1]
    return softmax(np.hstack([h, np.ones((h.shape[0], 1))]) @ model.top)


def predict(model: DbnModel, X) -> np.ndarray:
    return np.argmax(transform(model, X), axis=1)
