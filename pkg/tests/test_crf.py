import math

import numpy as np
import pytest
from conftest import make_dataset

import oracles
from sleepfields import crf
from sleepfields.chaingraph import log_forward
from sleepfields.core import Dataset, LabelAlphabet, LabelSequence, ObservationSequence
from sleepfields.errors import InputError
from sleepfields.training import TrainConfig


def random_model(alphabet, m, rng, l2=0.0, scale=1.0):
    L = alphabet.size
    return crf.CrfModel(
        scale * rng.normal(size=(L, m)), scale * rng.normal(size=(L, L)), scale * rng.normal(size=L), alphabet, l2
    )


def separable(n_seq=4, n=30, seed=0):
    rng = np.random.default_rng(seed)
    seqs = []
    for i in range(n_seq):
        x = rng.uniform(0.1, 2.0, size=n) * rng.choice([-1, 1], size=n)
        seqs.append((ObservationSequence(f"q{i}", x[:, None]), LabelSequence((x > 0).astype(int))))
    return Dataset(tuple(seqs), LabelAlphabet(("A", "B")))


def test_zero_model_scores_zero(toy3):
    model = crf.CrfModel.zeros(toy3.alphabet, toy3.m)
    for x, y in toy3:
        assert crf.score_sequence(model, x, y) == 0.0
        pot = crf.build_potentials(model, x)
        assert not pot.node.any() and not pot.edge.any()


def test_bias_only_single_epoch():
    a = LabelAlphabet(("A", "B", "C"))
    model = crf.CrfModel(np.zeros((3, 2)), np.ones((3, 3)), np.array([0.5, -1.0, 2.0]), a)
    x = ObservationSequence("x", np.array([[3.0, 4.0]]))
    assert crf.score_sequence(model, x, LabelSequence([2])) == 2.0


def test_score_matches_hand_expansion():
    rng = np.random.default_rng(0)
    a = LabelAlphabet(("A", "B", "C"))
    model = random_model(a, 2, rng)
    x = ObservationSequence("x", rng.normal(size=(3, 2)))
    y = [2, 0, 0]
    s, b, w = model.state, model.bias, model.trans
    expected = (
        b[2] + s[2] @ x.epochs[0] + b[0] + s[0] @ x.epochs[1] + b[0] + s[0] @ x.epochs[2] + w[2, 0] + w[0, 0]
    )
    assert crf.score_sequence(model, x, LabelSequence(y)) == pytest.approx(expected, abs=1e-12)


def test_labelings_sum_to_one():
    rng = np.random.default_rng(1)
    a = LabelAlphabet(("A", "B", "C"))
    model = random_model(a, 2, rng)
    x = ObservationSequence("x", rng.normal(size=(3, 2)))
    logz, _ = log_forward(crf.build_potentials(model, x))
    probs = [math.exp(crf.score_sequence(model, x, LabelSequence(p)) - logz) for p in oracles.paths(3, 3)]
    assert all(0 < p <= 1 for p in probs)
    assert abs(sum(probs) - 1) <= 1e-10


def test_uniform_nll():
    a = LabelAlphabet(("Awake", "S1", "S2", "SWS", "REM"))
    d = Dataset(((ObservationSequence("s", np.ones((4, 2))), LabelSequence([0, 1, 4, 2])),), a)
    nll, _ = crf.nll_and_gradient(crf.CrfModel.zeros(a, 2, l2=0.0), d)
    assert nll == pytest.approx(4 * math.log(5), abs=1e-12)


def test_duplicating_doubles_nll(toy3):
    rng = np.random.default_rng(2)
    model = random_model(toy3.alphabet, toy3.m, rng)
    twice = Dataset(
        toy3.sequences + tuple((ObservationSequence(x.id + "'", x.epochs), y) for x, y in toy3), toy3.alphabet
    )
    n1, g1 = crf.nll_and_gradient(model, toy3)
    n2, g2 = crf.nll_and_gradient(model, twice)
    assert n2 == pytest.approx(2 * n1, rel=1e-12)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-10, atol=1e-12)


def test_gradient_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        L, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        d = make_dataset(rng.integers(1, 6, size=int(rng.integers(1, 4))), m, L, seed=int(rng.integers(1e9)))
        model = random_model(d.alphabet, m, rng, l2=float(rng.uniform(0, 1)))
        _, g = crf.nll_and_gradient(model, d)
        fd = oracles.central_diff(lambda v: crf.nll_and_gradient(model.from_vector(v), d)[0], model.to_vector())
        assert oracles.rel_err(g, fd) <= 1e-4


def test_gradient_blocks_individually(toy3):
    model = random_model(toy3.alphabet, toy3.m, np.random.default_rng(4), l2=0.3)
    _, g = crf.nll_and_gradient(model, toy3)
    fd = oracles.central_diff(lambda v: crf.nll_and_gradient(model.from_vector(v), toy3)[0], model.to_vector())
    L, m = model.L, model.m
    for sl in (slice(0, L * m), slice(L * m, L * m + L * L), slice(L * m + L * L, None)):
        assert oracles.rel_err(g[sl], fd[sl]) <= 1e-6


def test_train_separable():
    d = separable()
    model = crf.train(d, TrainConfig(l2=1e-3))
    for x, y in d:
        np.testing.assert_array_equal(crf.predict(model, x).labels, y.labels)


def test_history_non_increasing():
    from sleepfields.optim import minimize

    d = make_dataset([8, 6], 2, 3, seed=5)
    base = crf.CrfModel.zeros(d.alphabet, 2, 0.1)
    res = minimize(lambda v: crf.nll_and_gradient(base.from_vector(v), d), base.to_vector(), TrainConfig().optim())
    assert np.all(np.diff(res.history) <= 0)


def test_strong_regularization_shrinks_weights():
    d = separable()
    norms = [np.linalg.norm(crf.train(d, TrainConfig(l2=l2)).to_vector()) for l2 in (1e-2, 1.0, 1e2, 1e4, 1e8)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-5


def test_zero_model_predicts_label_zero(toy3):
    model = crf.CrfModel.zeros(toy3.alphabet, toy3.m)
    for x, _ in toy3:
        p = crf.predict(model, x)
        assert p.n == x.n and (p.labels == 0).all()


def test_bias_shift_leaves_predictions(toy3):
    rng = np.random.default_rng(6)
    model = random_model(toy3.alphabet, toy3.m, rng)
    shifted = crf.CrfModel(model.state, model.trans, model.bias + 3.7, model.alphabet)
    for x, _ in toy3:
        np.testing.assert_array_equal(crf.predict(model, x).labels, crf.predict(shifted, x).labels)


def test_dimension_mismatch(toy3):
    model = crf.CrfModel.zeros(toy3.alphabet, toy3.m + 1)
    with pytest.raises(InputError):
        crf.predict(model, toy3.sequences[0][0])
    with pytest.raises(InputError):
        crf.nll_and_gradient(model, toy3)


def test_training_deterministic():
    d = make_dataset([10, 12], 2, 3, seed=7)
    a, b = crf.train(d), crf.train(d)
    assert np.array_equal(a.to_vector(), b.to_vector())


def test_long_sequences_are_chunked():
    d = make_dataset([25], 2, 2, seed=8)
    full = crf.train(d, TrainConfig(max_segment=1000))
    short = crf.train(d, TrainConfig(max_segment=5))
    assert not np.array_equal(full.to_vector(), short.to_vector())
