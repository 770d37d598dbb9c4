import numpy as np
import pytest
from conftest import make_dataset

import oracles
from sleepfields import hmm
from sleepfields.chaingraph import ChainPotentials, logsumexp, viterbi
from sleepfields.core import Dataset, LabelAlphabet, LabelSequence, ObservationSequence
from sleepfields.errors import InputError, TrainingError

AB = LabelAlphabet(("A", "B"))


def random_hmm(L, m, rng):
    start = rng.dirichlet(np.ones(L))
    trans = rng.dirichlet(np.ones(L), size=L)
    return hmm.HmmModel(start, trans, rng.normal(size=(L, m)), rng.uniform(0.5, 2, (L, m)), LabelAlphabet(tuple(f"l{k}" for k in range(L))))


def test_alternation_smoothing_hand_count():
    y = np.array([0, 1] * 5)
    d = Dataset(((ObservationSequence("s", np.arange(10.0)[:, None]), LabelSequence(y)),), AB)
    model = hmm.fit_supervised(d)
    # A->B seen 5 times, B->A 4 times, plus one pseudo-count per cell
    np.testing.assert_allclose(model.trans, [[1 / 7, 6 / 7], [5 / 6, 1 / 6]], atol=1e-15)
    np.testing.assert_allclose(model.start, [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(model.trans.sum(1), 1, atol=1e-12)


def test_emission_mle(toy3):
    model = hmm.fit_supervised(toy3)
    x, y = toy3.epochs(), toy3.labels()
    for k in range(3):
        np.testing.assert_array_equal(model.means[k], x[y == k].mean(0))
        np.testing.assert_allclose(model.variances[k], np.maximum(x[y == k].var(0), hmm.VARIANCE_FLOOR))


def test_variance_floor():
    d = Dataset(((ObservationSequence("s", np.ones((4, 1))), LabelSequence([0, 0, 1, 1])),), AB)
    assert np.all(hmm.fit_supervised(d).variances == hmm.VARIANCE_FLOOR)


def test_missing_label_names_it():
    d = Dataset(((ObservationSequence("s", np.ones((3, 1))), LabelSequence([0, 0, 0])),), AB)
    with pytest.raises(TrainingError, match="'B'"):
        hmm.fit_supervised(d)


def test_model_invariants():
    with pytest.raises(InputError):
        hmm.HmmModel(np.array([0.5, 0.6]), np.eye(2), np.zeros((2, 1)), np.ones((2, 1)), AB)
    with pytest.raises(InputError):
        hmm.HmmModel(np.array([0.5, 0.5]), np.eye(2), np.zeros((2, 1)), np.full((2, 1), 1e-9), AB)


def test_separated_clusters_recover_bayes_labels():
    rng = np.random.default_rng(0)
    means = np.array([-10.0, 0.0, 10.0])
    seqs = []
    for i in range(3):
        y = rng.integers(3, size=40)
        seqs.append((ObservationSequence(f"s{i}", (means[y] + 0.3 * rng.normal(size=40))[:, None]), LabelSequence(y)))
    d = Dataset(tuple(seqs), LabelAlphabet(("a", "b", "c")))
    model = hmm.fit_supervised(d)
    for x, y in d:
        np.testing.assert_array_equal(hmm.decode(model, x).labels, y.labels)


def test_uniform_model_ties_to_zero():
    m = hmm.HmmModel(np.full(3, 1 / 3), np.full((3, 3), 1 / 3), np.zeros((3, 2)), np.ones((3, 2)), LabelAlphabet(("a", "b", "c")))
    assert (hmm.decode(m, ObservationSequence("x", np.random.default_rng(1).normal(size=(6, 2)))).labels == 0).all()


def test_decode_matches_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(5):
        m = random_hmm(3, 2, rng)
        x = ObservationSequence("x", rng.normal(size=(4, 2)))
        node = m.log_emissions(x.epochs)
        node[0] += np.log(m.start)
        ref, _ = oracles.best_path(node, np.log(m.trans))
        np.testing.assert_array_equal(hmm.decode(m, x).labels, ref)
        assert hmm.loglik(m, x) == pytest.approx(oracles.log_partition(node, np.log(m.trans)), abs=1e-10)


def test_factorized_loglik():
    rng = np.random.default_rng(3)
    m = random_hmm(3, 2, rng)
    m = hmm.HmmModel(m.start, np.tile(m.start, (3, 1)), m.means, m.variances, m.alphabet)
    x = ObservationSequence("x", rng.normal(size=(7, 2)))
    per_epoch = logsumexp(m.log_emissions(x.epochs) + np.log(m.start), axis=1)
    assert hmm.loglik(m, x) == pytest.approx(per_epoch.sum(), abs=1e-10)


def test_loglik_additive_over_duplicates():
    rng = np.random.default_rng(4)
    m = random_hmm(2, 1, rng)
    xs = [ObservationSequence(f"x{i}", rng.normal(size=(5, 1))) for i in range(3)]
    total = sum(hmm.loglik(m, x) for x in xs)
    assert sum(hmm.loglik(m, x) for x in xs + xs) == pytest.approx(2 * total, rel=1e-12)


def test_decode_invariant_to_density_scaling():
    rng = np.random.default_rng(5)
    m = random_hmm(3, 2, rng)
    x = ObservationSequence("x", rng.normal(size=(8, 2)))
    pot = m.potentials(x)
    shifted = ChainPotentials(pot.node + 4.2, pot.edge)
    np.testing.assert_array_equal(viterbi(shifted)[0], hmm.decode(m, x).labels)


def test_noiseless_deterministic_chain():
    # cyclic 0->1->2->0 with label-specific constant features
    y = np.arange(30) % 3
    x = np.eye(3)[y] * 5.0
    d = Dataset(((ObservationSequence("s", x), LabelSequence(y)),), LabelAlphabet(("a", "b", "c")))
    model = hmm.fit_supervised(d)
    np.testing.assert_array_equal(hmm.decode(model, d.sequences[0][0]).labels, y)


def test_dimension_mismatch():
    m = hmm.fit_supervised(make_dataset([10, 10], 2, 2))
    with pytest.raises(InputError):
        hmm.decode(m, ObservationSequence("x", np.zeros((3, 3))))
