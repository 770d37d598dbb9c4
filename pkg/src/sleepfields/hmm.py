"""Supervised Gaussian-emission HMM baseline.

Parameters are estimated in closed form from labelled sequences: add-one
smoothed start and transition counts, per-label diagonal Gaussians with a
variance floor. Decoding reuses the chain engine with log densities as node
scores and log transition probabilities as edge scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chaingraph import ChainPotentials, log_forward, viterbi
from .core import Dataset, LabelAlphabet, LabelSequence, ObservationSequence
from .errors import InputError, TrainingError

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class HmmModel:
    start: np.ndarray  # (L,)
    trans: np.ndarray  # (L, L) row-stochastic
    means: np.ndarray  # (L, m)
    variances: np.ndarray  # (L, m)
    alphabet: LabelAlphabet

    kind = "hmm"

    def __post_init__(self):
        L = self.alphabet.size
        for name in ("start", "trans", "means", "variances"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.start.shape != (L,) or self.trans.shape != (L, L):
            raise InputError("start/transition shapes inconsistent with the alphabet")
        if self.means.shape != self.variances.shape or self.means.shape[0] != L:
            raise InputError("emission parameter shapes inconsistent")
        if abs(self.start.sum() - 1) > 1e-12 or np.any(np.abs(self.trans.sum(axis=1) - 1) > 1e-12):
            raise InputError("start distribution and transition rows must sum to 1")
        if np.any(self.variances < VARIANCE_FLOOR):
            raise InputError("variances below floor")

    @property
    def m(self) -> int:
        return self.means.shape[1]

    def log_emissions(self, x: np.ndarray) -> np.ndarray:
        """Log densities ``(n, L)`` of each epoch under each label's Gaussian."""
        if x.shape[1] != self.m:
            raise InputError(f"feature dimension {x.shape[1]} != model dimension {self.m}")
        diff = x[:, None, :] - self.means[None]
        return -0.5 * (
            (diff**2 / self.variances[None]).sum(axis=2)
            + np.log(2 * np.pi * self.variances).sum(axis=1)[None]
        )

    def potentials(self, x: ObservationSequence) -> ChainPotentials:
        node = self.log_emissions(x.epochs)
        node[0] += np.log(self.start)
        return ChainPotentials(node, np.log(self.trans))


def fit_supervised(data: Dataset) -> HmmModel:
    L, m = data.alphabet.size, data.m
    y_all = data.labels()
    x_all = data.epochs()
    seen = np.bincount(y_all, minlength=L)
    for k in range(L):
        if seen[k] == 0:
            raise TrainingError(f"label {data.alphabet.names[k]!r} never observed in training data")
    start = np.ones(L)
    trans = np.ones((L, L))
    for _, y in data:
        start[y.labels[0]] += 1
        np.add.at(trans, (y.labels[:-1], y.labels[1:]), 1.0)
    start /= start.sum()
    trans /= trans.sum(axis=1, keepdims=True)
    means = np.zeros((L, m))
    variances = np.zeros((L, m))
    for k in range(L):
        xk = x_all[y_all == k]
        means[k] = xk.mean(axis=0)
        variances[k] = np.maximum(xk.var(axis=0), VARIANCE_FLOOR)
    return HmmModel(start, trans, means, variances, data.alphabet)


def decode(model: HmmModel, x: ObservationSequence) -> LabelSequence:
    path, _ = viterbi(model.potentials(x))
    return LabelSequence(path)


def loglik(model: HmmModel, x: ObservationSequence) -> float:
    """Forward log-likelihood ``log p(x)`` of one observation sequence."""
    log_z, _ = log_forward(model.potentials(x))
    return log_z


predict = decode
