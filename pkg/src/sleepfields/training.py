"""Training configuration shared by the conditional-field trainers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .chaingraph import batch_expectations
from .errors import ConfigurationError, InputError, NumericError, TrainingError
from .optim import Method, OptimConfig, OptimResult, minimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1e-2
    optimizer: str = "bfgs"
    tol: float = 1e-5
    max_iter: int = 500
    # training sequences are cut into segments of at most this many epochs
    max_segment: int = 1000
    # neighbours on each side concatenated to the gate input (CNF variants)
    context_window: int = 0
    gates: int = 3
    hidden_per_label: int = 2
    hcrf_window: int = 11
    seed: int = 0

    def __post_init__(self):
        if self.l2 < 0:
            raise ConfigurationError("l2 must be non-negative")
        if self.gates < 1:
            raise ConfigurationError("gates must be >= 1")
        if self.hidden_per_label < 1:
            raise ConfigurationError("hidden_per_label must be >= 1")
        if self.hcrf_window < 1 or self.hcrf_window % 2 == 0:
            raise ConfigurationError("hcrf_window must be odd and >= 1")
        if self.max_segment < 1 or self.context_window < 0:
            raise ConfigurationError("max_segment must be >= 1 and context_window >= 0")
        Method(self.optimizer)

    def optim(self) -> OptimConfig:
        return OptimConfig(method=Method(self.optimizer), tol=self.tol, max_iter=self.max_iter)

    def with_(self, **kw) -> TrainConfig:
        return replace(self, **kw)


def run_optimizer(objective, x0: np.ndarray, cfg: TrainConfig, what: str) -> OptimResult:
    try:
        res = minimize(objective, x0, cfg.optim())
    except InputError as e:
        raise TrainingError(f"{what}: {e}") from e
    if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
        raise TrainingError(f"{what}: optimizer produced non-finite parameters")
    log.info(
        "%s: %s after %d iterations, nll=%.6g, |g|=%.3g",
        what, res.status.value, res.iterations, res.fun, res.grad_norm,
    )
    return res


def onehot(y: np.ndarray, S: int) -> np.ndarray:
    """One-hot of a padded ``(B, T)`` label array; padding (-1) rows are zero."""
    out = np.zeros(y.shape + (S,))
    valid = y >= 0
    out[valid, y[valid]] = 1.0
    return out


def transition_counts(y: np.ndarray, S: int) -> np.ndarray:
    """Observed transitions summed over a padded ``(B, T)`` label array."""
    a, b = y[:, :-1], y[:, 1:]
    ok = (a >= 0) & (b >= 0)
    counts = np.zeros((S, S))
    np.add.at(counts, (a[ok], b[ok]), 1.0)
    return counts


def supervised_chain_terms(node, edge, y, lengths):
    """Summed nll and residuals for fully labelled chains.

    Returns ``(nll, node_residual, edge_residual)`` where the residuals are
    expected minus observed counts: the derivative of the nll with respect to
    the node scores ``(B, T, S)`` and the shared edge scores ``(S, S)``.
    """
    S = node.shape[2]
    log_z, mu, xi = batch_expectations(node, edge, lengths)
    gold = onehot(y, S)
    score = (node * gold).sum() + (edge * transition_counts(y, S)).sum()
    nll = float(log_z.sum() - score)
    if not np.isfinite(nll):
        raise NumericError("non-finite negative log-likelihood")
    return nll, mu - gold, xi.sum(axis=0) - transition_counts(y, S)
