"""Linear-chain conditional random field over per-epoch feature vectors.

State features are the raw feature vector (one weight row per label) plus a
per-label bias; transition features are label-pair indicators.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chaingraph import ChainPotentials, viterbi
from .core import Dataset, LabelAlphabet, LabelSequence, ObservationSequence, Packed, chunk_dataset, pack
from .errors import InputError
from .training import TrainConfig, run_optimizer, supervised_chain_terms

__all__ = [
    "CrfModel",
    "score_sequence",
    "build_potentials",
    "nll_and_gradient",
    "train",
    "predict",
]


@dataclass(frozen=True, eq=False)
class CrfModel:
    state: np.ndarray  # (L, m)
    trans: np.ndarray  # (L, L)
    bias: np.ndarray  # (L,)
    alphabet: LabelAlphabet
    l2: float = 1e-2

    kind = "crf"

    def __post_init__(self):
        L = self.alphabet.size
        state = np.asarray(self.state, dtype=float)
        if state.ndim != 2 or state.shape[0] != L:
            raise InputError(f"state weights must be ({L}, m), got {state.shape}")
        if np.shape(self.trans) != (L, L) or np.shape(self.bias) != (L,):
            raise InputError("transition/bias shapes inconsistent with the alphabet")
        for a in (self.state, self.trans, self.bias):
            if not np.all(np.isfinite(a)):
                raise InputError("model weights must be finite")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=float))
        object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float))

    @classmethod
    def zeros(cls, alphabet: LabelAlphabet, m: int, l2: float = 1e-2) -> CrfModel:
        L = alphabet.size
        return cls(np.zeros((L, m)), np.zeros((L, L)), np.zeros(L), alphabet, l2)

    @property
    def m(self) -> int:
        return self.state.shape[1]

    @property
    def L(self) -> int:
        return self.alphabet.size

    def to_vector(self) -> np.ndarray:
        """Flat parameters in the order state, trans, bias (row-major)."""
        return np.concatenate([self.state.ravel(), self.trans.ravel(), self.bias])

    def from_vector(self, v: np.ndarray) -> CrfModel:
        L, m = self.L, self.m
        v = np.asarray(v, dtype=float)
        i = L * m
        return replace(
            self,
            state=v[:i].reshape(L, m),
            trans=v[i : i + L * L].reshape(L, L),
            bias=v[i + L * L :].copy(),
        )


def _check_x(model: CrfModel, x: ObservationSequence) -> None:
    if x.m != model.m:
        raise InputError(f"sequence {x.id!r} has dimension {x.m}, model expects {model.m}")


def score_sequence(model: CrfModel, x: ObservationSequence, y: LabelSequence) -> float:
    """Unnormalized log score of labelling ``y``: weights dotted with global features."""
    _check_x(model, x)
    if y.n != x.n:
        raise InputError(f"{x.n} epochs but {y.n} labels")
    lab = y.labels
    total = 0.0
    for t in range(x.n):
        total += model.bias[lab[t]] + model.state[lab[t]] @ x.epochs[t]
    for t in range(x.n - 1):
        total += model.trans[lab[t], lab[t + 1]]
    return float(total)


def build_potentials(model: CrfModel, x: ObservationSequence) -> ChainPotentials:
    _check_x(model, x)
    return ChainPotentials(model.bias + x.epochs @ model.state.T, model.trans)


def _packed_nll(model: CrfModel, batch: Packed):
    node = model.bias + batch.x @ model.state.T
    nll, r_node, r_edge = supervised_chain_terms(node, model.trans, batch.y, batch.lengths)
    g_state = np.einsum("bty,btm->ym", r_node, batch.x)
    g_bias = r_node.sum(axis=(0, 1))
    w = model.to_vector()
    nll += 0.5 * model.l2 * float(w @ w)
    grad = np.concatenate([g_state.ravel(), r_edge.ravel(), g_bias]) + model.l2 * w
    return nll, grad


def _pack_dataset(data: Dataset) -> Packed:
    if len(data) == 0:
        raise InputError("dataset is empty")
    return pack([x.epochs for x, _ in data], [y.labels for _, y in data])


def nll_and_gradient(model: CrfModel, data: Dataset) -> tuple[float, np.ndarray]:
    """Regularized negative log-likelihood and its gradient.

    The gradient is a flat vector laid out like :meth:`CrfModel.to_vector`.
    """
    if data.m != model.m:
        raise InputError(f"dataset dimension {data.m} != model dimension {model.m}")
    return _packed_nll(model, _pack_dataset(data))


def train(data: Dataset, config: TrainConfig | None = None) -> CrfModel:
    cfg = config or TrainConfig()
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    batch = _pack_dataset(chunk_dataset(data, cfg.max_segment))
    init = CrfModel.zeros(data.alphabet, data.m, cfg.l2)

    def objective(v):
        return _packed_nll(init.from_vector(v), batch)

    res = run_optimizer(objective, init.to_vector(), cfg, "crf")
    return init.from_vector(res.x)


def predict(model: CrfModel, x: ObservationSequence) -> LabelSequence:
    path, _ = viterbi(build_potentials(model, x))
    return LabelSequence(path)
