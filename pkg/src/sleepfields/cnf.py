"""Conditional neural fields: a CRF whose state features are the outputs of
K logistic gates applied to the epoch's feature vector."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chaingraph import ChainPotentials, viterbi
from .core import (
    Dataset,
    LabelAlphabet,
    LabelSequence,
    ObservationSequence,
    Packed,
    chunk_dataset,
    context_features,
    pack,
)
from .errors import ConfigurationError, InputError
from .training import TrainConfig, run_optimizer, supervised_chain_terms

__all__ = [
    "GateLayer",
    "CnfModel",
    "logistic",
    "gate_forward",
    "init_gate",
    "identity_gate",
    "build_potentials",
    "nll_and_gradient",
    "train",
    "predict",
]

ACTIVATIONS = ("logistic", "identity")


def logistic(a):
    # split by sign so exp never overflows
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True, eq=False)
class GateLayer:
    """``weights`` is ``(K, d + 1)``; the last column is the gate bias.

    ``activation="identity"`` exists only so tests can reduce a CNF to a CRF.
    """

    weights: np.ndarray
    activation: str = "logistic"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 2:
            raise InputError(f"gate weights must be (K, d+1) with K >= 1, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InputError("gate weights must be finite")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1

    def pre(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights[:, :-1].T + self.weights[:, -1]

    def act(self, a: np.ndarray) -> np.ndarray:
        return logistic(a) if self.activation == "logistic" else a

    def act_deriv(self, out: np.ndarray) -> np.ndarray:
        """Derivative of the activation expressed through its output."""
        return out * (1.0 - out) if self.activation == "logistic" else np.ones_like(out)


def gate_forward(gate: GateLayer, x_n) -> np.ndarray:
    x_n = np.asarray(x_n, dtype=float)
    if x_n.shape[-1] != gate.d:
        raise InputError(f"input dimension {x_n.shape[-1]} != gate dimension {gate.d}")
    return gate.act(gate.pre(x_n))


def init_gate(K: int, d: int, rng: np.random.Generator) -> GateLayer:
    """Uniform(-0.5, 0.5) / sqrt(d) weights, zero gate biases."""
    w = np.zeros((K, d + 1))
    w[:, :-1] = rng.uniform(-0.5, 0.5, size=(K, d)) / np.sqrt(d)
    return GateLayer(w)


def identity_gate(d: int) -> GateLayer:
    return GateLayer(np.hstack([np.eye(d), np.zeros((d, 1))]), activation="identity")


@dataclass(frozen=True, eq=False)
class CnfModel:
    gate: GateLayer
    state: np.ndarray  # (L, K)
    trans: np.ndarray  # (L, L)
    bias: np.ndarray  # (L,)
    alphabet: LabelAlphabet
    l2: float = 1e-2
    context_window: int = 0

    kind = "cnf"

    def __post_init__(self):
        L, K = self.alphabet.size, self.gate.K
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=float))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))
        if self.state.shape != (L, K) or self.trans.shape != (L, L) or self.bias.shape != (L,):
            raise InputError("CNF weight shapes inconsistent with alphabet and gate count")
        for a in (self.state, self.trans, self.bias):
            if not np.all(np.isfinite(a)):
                raise InputError("model weights must be finite")

    @classmethod
    def init(cls, alphabet: LabelAlphabet, m: int, K: int, rng, l2=1e-2, context_window=0) -> CnfModel:
        L = alphabet.size
        gate = init_gate(K, m * (2 * context_window + 1), rng)
        return cls(gate, np.zeros((L, K)), np.zeros((L, L)), np.zeros(L), alphabet, l2, context_window)

    @property
    def m(self) -> int:
        return self.gate.d // (2 * self.context_window + 1)

    @property
    def L(self) -> int:
        return self.alphabet.size

    def to_vector(self) -> np.ndarray:
        """Flat parameters: state, trans, bias, then gate weights (row-major)."""
        return np.concatenate([self.state.ravel(), self.trans.ravel(), self.bias, self.gate.weights.ravel()])

    def from_vector(self, v) -> CnfModel:
        L, K = self.L, self.gate.K
        v = np.asarray(v, dtype=float)
        sizes = np.cumsum([L * K, L * L, L])
        state, trans, bias, gw = np.split(v, sizes)
        return replace(
            self,
            state=state.reshape(L, K),
            trans=trans.reshape(L, L),
            bias=bias,
            gate=replace(self.gate, weights=gw.reshape(self.gate.weights.shape)),
        )

    def inputs(self, x: np.ndarray) -> np.ndarray:
        return context_features(x, self.context_window)


def build_potentials(model: CnfModel, x: ObservationSequence) -> ChainPotentials:
    if x.m != model.m:
        raise InputError(f"sequence dimension {x.m} != model dimension {model.m}")
    g = gate_forward(model.gate, model.inputs(x.epochs))
    return ChainPotentials(model.bias + g @ model.state.T, model.trans)


def _packed_nll(model: CnfModel, batch: Packed):
    gate = model.gate
    G = gate.act(gate.pre(batch.x))  # (B, T, K)
    node = model.bias + G @ model.state.T
    nll, r_node, r_edge = supervised_chain_terms(node, model.trans, batch.y, batch.lengths)
    g_state = np.einsum("bty,btk->yk", r_node, G)
    g_bias = r_node.sum(axis=(0, 1))
    d_pre = (r_node @ model.state) * gate.act_deriv(G) * batch.mask[:, :, None]
    g_gate = np.hstack([np.einsum("btk,btd->kd", d_pre, batch.x), d_pre.sum(axis=(0, 1))[:, None]])
    w = model.to_vector()
    nll += 0.5 * model.l2 * float(w @ w)
    grad = np.concatenate([g_state.ravel(), r_edge.ravel(), g_bias, g_gate.ravel()]) + model.l2 * w
    return nll, grad


def _pack_inputs(model: CnfModel, data: Dataset) -> Packed:
    if len(data) == 0:
        raise InputError("dataset is empty")
    if data.m != model.m:
        raise InputError(f"dataset dimension {data.m} != model dimension {model.m}")
    return pack([model.inputs(x.epochs) for x, _ in data], [y.labels for _, y in data])


def nll_and_gradient(model: CnfModel, data: Dataset) -> tuple[float, np.ndarray]:
    """Regularized nll and its flat gradient (layout of :meth:`CnfModel.to_vector`)."""
    return _packed_nll(model, _pack_inputs(model, data))


def train(data: Dataset, config: TrainConfig | None = None) -> CnfModel:
    """Joint BFGS over label weights and gate weights from a seeded gate init."""
    cfg = config or TrainConfig()
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    init = CnfModel.init(data.alphabet, data.m, cfg.gates, rng, cfg.l2, cfg.context_window)
    batch = _pack_inputs(init, chunk_dataset(data, cfg.max_segment))

    def objective(v):
        return _packed_nll(init.from_vector(v), batch)

    res = run_optimizer(objective, init.to_vector(), cfg, f"cnf(K={cfg.gates})")
    return init.from_vector(res.x)


def predict(model: CnfModel, x: ObservationSequence) -> LabelSequence:
    path, _ = viterbi(build_potentials(model, x))
    return LabelSequence(path)
