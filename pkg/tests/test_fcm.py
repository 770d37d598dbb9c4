import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sleepfields import fcm
from sleepfields.errors import ClusteringError, ConfigurationError, DegenerateClusterError, InputError


def blobs(seed=0, n=60):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [8.0, 3.0]])
    X = np.vstack([c + 0.5 * rng.normal(size=(n, 2)) for c in centres])
    return X, centres, np.repeat([0, 1], n)


def entropy(U):
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(-np.nansum(U * np.log(U)))


def test_init_partition():
    np.testing.assert_array_equal(fcm.init_partition(5, 1, 0), 1.0)
    U = fcm.init_partition(40, 4, 3)
    np.testing.assert_allclose(U.sum(1), 1, atol=1e-12)
    assert np.all(U >= 0)
    np.testing.assert_array_equal(U, fcm.init_partition(40, 4, 3))
    with pytest.raises(ConfigurationError):
        fcm.init_partition(3, 4, 0)


def test_config_invariants():
    with pytest.raises(ConfigurationError):
        fcm.FcmConfig(fuzziness=1.0)
    with pytest.raises(ConfigurationError):
        fcm.FcmConfig(clusters=0)
    with pytest.raises(ConfigurationError):
        fcm.FcmConfig(max_iter=0)


def test_centroids_single_cluster_is_mean():
    X = np.random.default_rng(0).normal(size=(9, 3))
    np.testing.assert_allclose(fcm.update_centroids(X, np.ones((9, 1)), 1.5)[0], X.mean(0), atol=1e-14)


def test_centroids_hard_memberships():
    X = np.random.default_rng(1).normal(size=(10, 2))
    lab = np.array([0, 1] * 5)
    V = fcm.update_centroids(X, np.eye(2)[lab], 2.0)
    np.testing.assert_allclose(V, [X[lab == 0].mean(0), X[lab == 1].mean(0)], atol=1e-14)


def test_centroids_direct_formula():
    rng = np.random.default_rng(2)
    X, U, w = rng.normal(size=(6, 2)), rng.dirichlet(np.ones(3), size=6), 1.7
    V = fcm.update_centroids(X, U, w)
    for k in range(3):
        num = sum(U[i, k] ** w * X[i] for i in range(6))
        den = sum(U[i, k] ** w for i in range(6))
        np.testing.assert_allclose(V[k], num / den, atol=1e-14)


def test_degenerate_cluster_detected():
    U = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegenerateClusterError) as e:
        fcm.update_centroids(np.zeros((2, 1)), U, 2.0)
    assert list(e.value.clusters) == [1]


def test_objective_zero_and_homogeneity():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert fcm.objective(X, np.eye(2), X.copy(), 2.0) == 0.0
    rng = np.random.default_rng(3)
    X, V, U = rng.normal(size=(5, 2)), rng.normal(size=(2, 2)), rng.dirichlet(np.ones(2), size=5)
    assert fcm.objective(2 * X, U, 2 * V, 1.5) == pytest.approx(4 * fcm.objective(X, U, V, 1.5), rel=1e-12)


def test_objective_triple_loop():
    rng = np.random.default_rng(4)
    X, V, U, w = rng.normal(size=(5, 2)), rng.normal(size=(3, 2)), rng.dirichlet(np.ones(3), size=5), 1.3
    ref = 0.0
    for i in range(5):
        for k in range(3):
            d = sum((X[i, j] - V[k, j]) ** 2 for j in range(2))
            ref += d * U[i, k] ** w
    assert fcm.objective(X, U, V, w) == pytest.approx(ref, abs=1e-12)


def test_partition_equidistant_and_singular():
    V = np.array([[-1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(fcm.update_partition(np.array([[0.0, 5.0]]), V, 2.0), [[0.5, 0.5]], atol=1e-15)
    np.testing.assert_array_equal(fcm.update_partition(np.array([[1.0, 0.0]]), V, 1.05), [[0.0, 1.0]])
    # two coinciding centroids: the first one wins
    V2 = np.array([[3.0], [3.0], [0.0]])
    np.testing.assert_array_equal(fcm.update_partition(np.array([[3.0]]), V2, 2.0), [[1.0, 0.0, 0.0]])


def test_partition_formula():
    rng = np.random.default_rng(5)
    X, V, w = rng.normal(size=(4, 2)), rng.normal(size=(3, 2)), 1.6
    U = fcm.update_partition(X, V, w)
    d = np.sqrt(((X[:, None] - V[None]) ** 2).sum(2))
    ref = np.array([[1 / sum((d[i, k] / d[i, j]) ** (2 / (w - 1)) for j in range(3)) for k in range(3)] for i in range(4)])
    np.testing.assert_allclose(U, ref, atol=1e-12)


def reference_fcm(X, U, w, iters=200):
    # plain fixed-point iteration with the textbook ratio formula
    for _ in range(iters):
        Uw = U**w
        V = (Uw.T @ X) / Uw.sum(0)[:, None]
        d = np.sqrt(((X[:, None] - V[None]) ** 2).sum(2))
        U = 1.0 / ((d[:, :, None] / d[:, None, :]) ** (2 / (w - 1))).sum(2)
    return U, V


def test_low_fuzziness_blob_memberships():
    X, _, lab = blobs()
    part = fcm.fit(X, fcm.FcmConfig(clusters=2, fuzziness=1.05))
    own = part.U[np.arange(len(X)), part.U.argmax(1)]
    assert np.all(own >= 0.99)
    # same two groups as the reference iteration
    U_ref, _ = reference_fcm(X, fcm.init_partition(len(X), 2, 0), 1.05)
    np.testing.assert_array_equal(part.U.argmax(1), U_ref.argmax(1))
    assert len(set(zip(part.U.argmax(1), lab))) == 2


def test_fit_recovers_blob_centres():
    X, _, _ = blobs(1)
    part = fcm.fit(X, fcm.FcmConfig(clusters=2, fuzziness=1.05))
    V = part.V[np.argsort(part.V[:, 0])]
    np.testing.assert_allclose(V, [X[:60].mean(0), X[60:].mean(0)], atol=0.1)


@pytest.mark.parametrize("seed", range(10))
def test_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 3)) * rng.uniform(0.5, 3, 3)
    part = fcm.fit(X, fcm.FcmConfig(clusters=int(rng.integers(2, 6)), fuzziness=float(rng.uniform(1.05, 3)), seed=seed))
    h = np.array(part.history)
    assert np.all(np.diff(h) <= 1e-12)
    np.testing.assert_allclose(part.U.sum(1), 1, atol=1e-12)
    assert np.all((part.U >= 0) & (part.U <= 1))


def test_single_iteration_guard():
    X, _, _ = blobs()
    part = fcm.fit(X, fcm.FcmConfig(clusters=2, max_iter=1))
    assert part.iterations == 1 and len(part.history) == 1


def test_transform():
    X, _, _ = blobs(2)
    part = fcm.fit(X, fcm.FcmConfig(clusters=4, fuzziness=1.3))
    F = fcm.transform(part, X)
    assert F.shape == (len(X), 4)
    np.testing.assert_allclose(F, part.U, atol=1e-10)
    np.testing.assert_allclose(fcm.transform(part, np.zeros((3, 2))).sum(1), 1, atol=1e-12)
    with pytest.raises(InputError):
        fcm.transform(part, np.zeros((3, 3)))


@pytest.mark.parametrize("c", [4, 5, 6, 7, 8])
def test_cluster_sweep_dimensions(c):
    X = np.random.default_rng(c).normal(size=(50, 3))
    assert fcm.transform(fcm.fit(X, fcm.FcmConfig(clusters=c)), X).shape == (50, c)


def test_fuzziness_entropy_ordering():
    X, _, _ = blobs(3)
    sharp = fcm.fit(X, fcm.FcmConfig(clusters=2, fuzziness=1.01))
    soft = fcm.fit(X, fcm.FcmConfig(clusters=2, fuzziness=2.0))
    assert entropy(sharp.U) < entropy(soft.U)


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(4)), st.integers(0, 1000))
def test_cluster_permutation_symmetry(perm, seed):
    perm = list(perm)
    rng = np.random.default_rng(seed)
    X, V, U = rng.normal(size=(7, 2)), rng.normal(size=(4, 2)), rng.dirichlet(np.ones(4), size=7)
    np.testing.assert_allclose(fcm.update_partition(X, V[perm], 1.4), fcm.update_partition(X, V, 1.4)[:, perm], atol=1e-14)
    np.testing.assert_allclose(fcm.update_centroids(X, U[:, perm], 1.4), fcm.update_centroids(X, U, 1.4)[perm], atol=1e-13)
    assert fcm.objective(X, U[:, perm], V[perm], 1.4) == pytest.approx(fcm.objective(X, U, V, 1.4), rel=1e-12)


def test_persistent_degeneracy_is_an_error():
    # identical points: every membership collapses onto the first centroid
    with pytest.raises(ClusteringError):
        fcm.fit(np.ones((4, 2)), fcm.FcmConfig(clusters=2))


def test_reseed_assigns_farthest_point():
    X = np.array([[0.0], [0.1], [5.0]])
    U = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    out = fcm._reseed(X, U, np.array([[0.0], [0.0]]), np.array([1]))
    np.testing.assert_array_equal(out[2], [0.0, 1.0])
    np.testing.assert_array_equal(out[:2], U[:2])


def test_deterministic():
    X, _, _ = blobs(4)
    a = fcm.fit(X, fcm.FcmConfig(clusters=3, seed=9))
    b = fcm.fit(X, fcm.FcmConfig(clusters=3, seed=9))
    assert np.array_equal(a.U, b.U) and a.history == b.history
