"""Fuzzy C-Means clustering used as an unsupervised feature extractor.

Memberships of each epoch to the ``c`` clusters replace its feature vector.
The fit loop is: normalize a random partition; then repeat centroid update,
objective, partition update until the objective changes by less than the
tolerance or the iteration budget runs out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .chaingraph import logsumexp
from .errors import ClusteringError, ConfigurationError, DegenerateClusterError, InputError

log = logging.getLogger(__name__)

__all__ = [
    "FcmConfig",
    "FuzzyPartition",
    "init_partition",
    "update_centroids",
    "objective",
    "squared_distances",
    "update_partition",
    "fit",
    "transform",
]


@dataclass(frozen=True)
class FcmConfig:
    clusters: int = 5
    fuzziness: float = 1.05
    tol: float = 1e-6
    max_iter: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1:
            raise ConfigurationError("clusters must be >= 1")
        if not self.fuzziness > 1:
            raise ConfigurationError("fuzziness must be > 1")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigurationError("tol must be > 0 and max_iter >= 1")


@dataclass(eq=False)
class FuzzyPartition:
    U: np.ndarray  # (n, c)
    V: np.ndarray  # (c, m)
    fuzziness: float
    history: list = field(default_factory=list)
    iterations: int = 0

    @property
    def clusters(self) -> int:
        return self.V.shape[0]


def init_partition(n: int, c: int, seed: int) -> np.ndarray:
    if c < 1 or n < c:
        raise ConfigurationError(f"need n >= c >= 1, got n={n}, c={c}")
    rng = np.random.default_rng(seed)
    U = rng.random((n, c))
    return U / U.sum(axis=1, keepdims=True)


def update_centroids(X: np.ndarray, U: np.ndarray, w: float) -> np.ndarray:
    """Membership-weighted means: ``V[k] = sum_i U[i,k]^w X[i] / sum_i U[i,k]^w``."""
    if X.shape[0] != U.shape[0]:
        raise InputError(f"{X.shape[0]} points but {U.shape[0]} membership rows")
    Uw = U**w
    tot = Uw.sum(axis=0)
    dead = np.flatnonzero(tot <= 0)
    if dead.size:
        raise DegenerateClusterError(dead)
    return (Uw.T @ X) / tot[:, None]


def squared_distances(X: np.ndarray, V: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - V[None, :, :]) ** 2).sum(axis=2)


def objective(X: np.ndarray, U: np.ndarray, V: np.ndarray, w: float) -> float:
    if U.shape != (X.shape[0], V.shape[0]) or X.shape[1] != V.shape[1]:
        raise InputError("shape mismatch between X, U and V")
    return float((squared_distances(X, V) * U**w).sum())


def update_partition(X: np.ndarray, V: np.ndarray, w: float) -> np.ndarray:
    """Standard FCM membership update, computed in log space.

    ``U[i,k] = 1 / sum_j (d_ik / d_ij)^(2/(w-1))`` with Euclidean ``d``.
    A point that coincides with a centroid gets membership 1 there (the first
    such centroid if several coincide).
    """
    if X.shape[1] != V.shape[1]:
        raise InputError(f"point dimension {X.shape[1]} != centroid dimension {V.shape[1]}")
    D = squared_distances(X, V)
    zero = D <= 0
    with np.errstate(divide="ignore"):
        logits = -np.log(D) / (w - 1.0)
    hit = zero.any(axis=1)
    logits[hit] = 0.0
    U = np.exp(logits - logsumexp(logits, axis=1)[:, None])
    if hit.any():
        U[hit] = 0.0
        U[hit, np.argmax(zero[hit], axis=1)] = 1.0
    return U


def _reseed(X: np.ndarray, U: np.ndarray, V_prev, dead) -> np.ndarray:
    """Give each dead cluster the point farthest from the live centroids."""
    U = U.copy()
    if V_prev is None:
        far = np.argsort(-((X - X.mean(axis=0)) ** 2).sum(axis=1))
    else:
        far = np.argsort(-squared_distances(X, V_prev).min(axis=1))
    for k, i in zip(dead, far):
        U[i] = 0.0
        U[i, k] = 1.0
    return U


def fit(X, config: FcmConfig | None = None) -> FuzzyPartition:
    cfg = config or FcmConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError("X must be 2-D")
    w = cfg.fuzziness
    U = init_partition(X.shape[0], cfg.clusters, cfg.seed)
    V = None
    history: list[float] = []
    reseeded = False
    t = 0
    while t < cfg.max_iter:
        try:
            V_new = update_centroids(X, U, w)
        except DegenerateClusterError as e:
            if reseeded:
                raise ClusteringError(f"degenerate clusters {e.clusters} persisted after reseeding") from e
            log.warning("reseeding degenerate clusters %s", e.clusters)
            U = _reseed(X, U, V, e.clusters)
            reseeded = True
            continue
        V = V_new
        P = objective(X, U, V, w)
        history.append(P)
        U = update_partition(X, V, w)
        t += 1
        # a converged objective with an empty cluster is not a usable partition
        if len(history) > 1 and abs(history[-1] - history[-2]) < cfg.tol and (U**w).sum(axis=0).min() > 0:
            break
    dead = np.flatnonzero((U**w).sum(axis=0) <= 0)
    if dead.size:
        raise ClusteringError(f"clusters {list(dead)} are empty after {t} iterations")
    return FuzzyPartition(U, V, w, history, t)


def transform(partition: FuzzyPartition, X_new) -> np.ndarray:
    """Membership features ``(n, c)`` of new points w.r.t. the fitted centroids."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != partition.V.shape[1]:
        raise InputError(f"expected points of dimension {partition.V.shape[1]}")
    return update_partition(X_new, partition.V, partition.fuzziness)
