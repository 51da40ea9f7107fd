"""
Tests the MLP embedder: gradients, embedding width, training and persistence.
"""
import math

import numpy as np
import pytest

import ddos_rag as dr
from ddos_rag import embed_mlp, evaluation, flow
from ddos_rag.exceptions import ModelLoadError, TrainingError


@pytest.fixture(scope="module")
def small_data():
    data = evaluation.generate_synthetic(30, seed=4)
    s = flow.fit_standardizer([x for x, _ in data])
    return [(s.apply(x), label) for x, label in data]


@pytest.fixture(scope="module")
def trained(small_data):
    return embed_mlp.train_mlp(small_data, {"epochs_max": 40, "h1": 16, "lr": 0.1, "seed": 3})


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_gradient_check(seed):
    rng = np.random.default_rng(seed)
    h1 = int(rng.integers(4, 12))
    m = embed_mlp.init_mlp([9, h1, 16, 6], seed=seed, label_smoothing=float(rng.uniform(0, 0.3)))

    X = rng.normal(size=(8, 9))
    labels = rng.integers(0, 6, size=8)
    assert embed_mlp.gradient_check(m, (X, labels)) < 1e-4


def test_gradient_check_pairs():
    m = embed_mlp.init_mlp([9, 6, 16, 6], seed=9)
    rng = np.random.default_rng(9)
    batch = [(rng.normal(size=9), label) for label in ["ICMP", "UDP", "TCP", "PSHACK", "RSTFIN", "BENIGN"]]

    assert embed_mlp.gradient_check(m, batch) < 1e-4


def test_embedding_width():
    m = embed_mlp.init_mlp([9, 32, 16, 6])
    assert m.dims == [9, 32, 16, 6]

    x = np.linspace(-1, 1, 9)
    z = m.embed(x)
    assert z.shape == (embed_mlp.EMBED_DIM, )
    assert np.all(z >= 0)
    assert embed_mlp.embed(m, np.vstack([x, x])).shape == (2, 16)

    probs = m.predict_proba(x)
    assert probs.shape == (6, )
    assert abs(np.sum(probs) - 1) < 1e-12


def test_init():
    m = embed_mlp.init_mlp([9, 32, 16, 6], seed=1)

    for W, fan_in in zip(m.weights, [9, 32, 16]):
        assert np.all(np.abs(W) <= 1.0 / np.sqrt(fan_in))
    assert all(np.all(b == 0) for b in m.biases)

    again = embed_mlp.init_mlp([9, 32, 16, 6], seed=1)
    assert all(np.array_equal(a, b) for a, b in zip(m.weights, again.weights))

    # Parameters are frozen, updates go through sgd_step
    with pytest.raises(ValueError):
        m.weights[0][0, 0] = 1.0


def test_smoothed_targets():
    targets = embed_mlp.smoothed_targets([0, 5], eps=0.1)

    assert np.allclose(np.sum(targets, axis=1), 1.0)
    assert targets[0, 0] == pytest.approx(0.9 + 0.1 / 6)
    assert targets[1, 0] == pytest.approx(0.1 / 6)


def test_sgd_step_reduces_loss():
    rng = np.random.default_rng(2)
    m = embed_mlp.init_mlp([9, 16, 16, 6], seed=2)
    X = rng.normal(size=(32, 9))
    labels = rng.integers(0, 6, size=32)

    updated, before = embed_mlp.sgd_step(m, X, labels, 0.01)
    assert before == pytest.approx(m.loss(X, labels))
    assert updated.loss(X, labels) < before
    assert updated is not m


def test_stratified_split():
    labels = np.repeat(np.arange(6), 10)
    train, val = embed_mlp.stratified_split(labels, 0.2, np.random.default_rng(0))

    assert len(val) == 12
    assert len(set(train) & set(val)) == 0
    assert sorted(list(train) + list(val)) == list(range(60))
    assert all(np.sum(labels[val] == c) == 2 for c in range(6))

    with pytest.raises(TrainingError):
        embed_mlp.stratified_split(np.array([0, 0, 1, 1]), 0.8, np.random.default_rng(0))


def test_train_mlp(trained, small_data):
    assert trained.dims == [9, 16, 16, 6]
    assert 0 <= trained.config["best_epoch"] <= trained.config["epochs_run"] <= 40
    assert trained.config["best_validation_loss"] < math.log(6)


def test_separable_two_class():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(2.0, 0.5, size=(100, 9)), rng.normal(-2.0, 0.5, size=(100, 9))])
    labels = [dr.ClassLabel.ICMP] * 100 + [dr.ClassLabel.BENIGN] * 100

    m = embed_mlp.train_mlp(list(zip(X, labels)), {"epochs_max": 200, "seed": 0})
    assert m.config["epochs_run"] <= 200

    # The split train_mlp draws first from its seeded generator
    y = np.array([x.index for x in labels])
    _, val_idx = embed_mlp.stratified_split(y, 0.2, np.random.default_rng(0))
    predicted = m.predict_label(X[val_idx])
    accuracy = np.mean([p is labels[i] for p, i in zip(predicted, val_idx)])
    assert accuracy >= 0.95


def test_train_mlp_deterministic(trained, small_data):
    again = embed_mlp.train_mlp(small_data, {"epochs_max": 40, "h1": 16, "lr": 0.1, "seed": 3})
    assert all(np.array_equal(a, b) for a, b in zip(trained.weights, again.weights))
    assert again.fingerprint() == trained.fingerprint()


def test_train_mlp_rejects(small_data):
    with pytest.raises(TrainingError):
        embed_mlp.train_mlp([])

    one_class = [x for x in small_data if x[1].value == "ICMP"]
    with pytest.raises(TrainingError):
        embed_mlp.train_mlp(one_class)

    with pytest.raises(KeyError):
        embed_mlp.train_mlp(small_data, {"epochs": 3})

    with pytest.raises(ValueError):
        embed_mlp.train_mlp(small_data, {"validation_fraction": 1.5})


def test_save_load(tmp_path, trained, small_data):
    filename = str(tmp_path / "mlp.json")
    trained.save(filename)

    loaded = embed_mlp.MlpModel.load(filename)
    X = np.vstack([x for x, _ in small_data])
    assert np.array_equal(loaded.embed(X), trained.embed(X))
    assert loaded.config == trained.config

    doc = trained.to_json()
    doc["version"] = 7
    with pytest.raises(ModelLoadError):
        embed_mlp.MlpModel.from_json(doc)

    doc = trained.to_json()
    doc["dims"] = [9, 16, 8, 6]
    with pytest.raises(ModelLoadError):
        embed_mlp.MlpModel.from_json(doc)
