"""Log-space dynamic programming on linear chains.

Node scores are ``(n, S)`` and the transition scores ``(S, S)`` are shared by
every position. Entries equal to ``-inf`` are allowed and mark forbidden
states or transitions; NaN and ``+inf`` are rejected.

The single-sequence functions (:func:`log_forward`, :func:`marginals`, ...)
are thin wrappers over the batched routines used by the trainers, which work
on ``(B, T, S)`` node tensors padded to a common length.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InputError, SizeError

__all__ = [
    "ChainPotentials",
    "logsumexp",
    "log_forward",
    "log_backward",
    "marginals",
    "viterbi",
    "path_score",
    "brute_force_log_partition",
    "batch_forward_backward",
    "batch_expectations",
]

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True, eq=False)
class ChainPotentials:
    node: np.ndarray
    edge: np.ndarray

    def __post_init__(self):
        node = np.asarray(self.node, dtype=float)
        edge = np.asarray(self.edge, dtype=float)
        if node.ndim != 2 or node.shape[0] < 1:
            raise InputError(f"node potentials must be (n, S) with n >= 1, got {node.shape}")
        S = node.shape[1]
        if edge.shape != (S, S):
            raise InputError(f"edge potentials must be ({S}, {S}), got {edge.shape}")
        _check_values(node)
        _check_values(edge)
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "edge", edge)

    @property
    def n(self) -> int:
        return self.node.shape[0]

    @property
    def S(self) -> int:
        return self.node.shape[1]


def _check_values(a: np.ndarray) -> None:
    if np.isnan(a).any() or np.isposinf(a).any():
        raise InputError("potentials contain NaN or +inf")


def logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    """``log(sum(exp(a)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return out.reshape(())[()]
    return np.squeeze(out, axis=axis)


# finite stand-in for -inf maxima so that (-inf) - max stays -inf instead of NaN
_FLOOR = -1e300
# cap on elements materialized at once when summing pairwise marginals
_CHUNK = 2_000_000


def _lse_into(z: np.ndarray, axis: int) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    np.maximum(m, _FLOOR, out=m)
    out = np.log(np.exp(z - m).sum(axis=axis, keepdims=True)) + m
    return out.squeeze(axis)


def batch_forward_backward(node: np.ndarray, edge: np.ndarray, lengths: np.ndarray):
    """Forward and backward log tables for a padded batch.

    Returns ``(log_z, alpha, beta)`` with shapes ``(B,)``, ``(B, T, S)``,
    ``(B, T, S)``. Entries at padded positions are meaningless.
    """
    B, T, S = node.shape
    lengths = np.asarray(lengths)
    alpha = np.empty((B, T, S))
    beta = np.zeros((B, T, S))
    alpha[:, 0] = node[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in range(1, T):
            alpha[:, t] = node[:, t] + _lse_into(alpha[:, t - 1, :, None] + edge, axis=1)
        for t in range(T - 2, -1, -1):
            nxt = _lse_into(edge + (node[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
            # positions at or past the last valid epoch keep log 1
            beta[:, t] = np.where((t < lengths - 1)[:, None], nxt, 0.0)
        last = alpha[np.arange(B), lengths - 1]
        log_z = _lse_into(last, axis=1)
    return log_z, alpha, beta


def batch_expectations(node: np.ndarray, edge: np.ndarray, lengths: np.ndarray):
    """Partition functions and marginal statistics for a padded batch.

    Returns ``(log_z, node_marg, edge_counts)``: ``node_marg`` is ``(B, T, S)``
    and zero at padding, ``edge_counts`` is ``(B, S, S)``, the expected
    number of each transition summed over positions.
    """
    log_z, alpha, beta = batch_forward_backward(node, edge, lengths)
    if not np.all(np.isfinite(log_z)):
        raise InputError("chain has no path with finite score")
    B, T, S = node.shape
    mask = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    with np.errstate(invalid="ignore"):
        node_marg = np.exp(alpha + beta - log_z[:, None, None])
    node_marg = np.where(mask[:, :, None], node_marg, 0.0)
    edge_counts = np.zeros((B, S, S))
    step = max(1, _CHUNK // max(1, B * S * S))
    right = node + beta
    for t0 in range(0, T - 1, step):
        t1 = min(T - 1, t0 + step)
        logp = (
            alpha[:, t0:t1, :, None]
            + edge
            + right[:, t0 + 1 : t1 + 1, None, :]
            - log_z[:, None, None, None]
        )
        live = mask[:, t0 + 1 : t1 + 1, None, None]
        edge_counts += np.where(live, np.exp(logp), 0.0).sum(axis=1)
    return log_z, node_marg, edge_counts


def log_forward(p: ChainPotentials) -> tuple[float, np.ndarray]:
    log_z, alpha, _ = batch_forward_backward(p.node[None], p.edge, np.array([p.n]))
    return float(log_z[0]), alpha[0]


def log_backward(p: ChainPotentials) -> np.ndarray:
    _, _, beta = batch_forward_backward(p.node[None], p.edge, np.array([p.n]))
    return beta[0]


def marginals(p: ChainPotentials) -> tuple[np.ndarray, np.ndarray]:
    """Node marginals ``(n, S)`` and pairwise marginals ``(n-1, S, S)``."""
    log_z, alpha, beta = batch_forward_backward(p.node[None], p.edge, np.array([p.n]))
    log_z, alpha, beta = log_z[0], alpha[0], beta[0]
    if not np.isfinite(log_z):
        raise InputError("chain has no path with finite score")
    node = np.exp(alpha + beta - log_z)
    edge = np.exp(
        alpha[:-1, :, None] + p.edge[None] + (p.node[1:] + beta[1:])[:, None, :] - log_z
    )
    return node, edge


def viterbi(p: ChainPotentials) -> tuple[np.ndarray, float]:
    """Highest-scoring path; ties resolve to the smallest state index."""
    n, S = p.node.shape
    delta = p.node[0].copy()
    back = np.zeros((n, S), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + p.edge
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(S)] + p.node[t]
    path = np.empty(n, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    best = float(delta[path[-1]])
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


def path_score(p: ChainPotentials, path) -> float:
    path = np.asarray(path)
    return float(p.node[np.arange(p.n), path].sum() + p.edge[path[:-1], path[1:]].sum())


def brute_force_log_partition(p: ChainPotentials) -> float:
    """Exact log partition by enumerating all ``S**n`` paths."""
    if p.S**p.n > BRUTE_FORCE_LIMIT:
        raise SizeError(f"{p.S}^{p.n} paths exceeds the enumeration limit {BRUTE_FORCE_LIMIT}")
    scores = np.array([path_score(p, path) for path in itertools.product(range(p.S), repeat=p.n)])
    return float(logsumexp(scores))
