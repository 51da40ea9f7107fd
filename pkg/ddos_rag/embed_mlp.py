"""
A small rectifier MLP trained on the standardized flow features. Its penultimate layer
is the 16-dimensional embedding used as an alternative retrieval space.
"""

import copy
import json
import logging
import os

import numpy as np

from . import constants
from . import fields
from . import schema
from .constants import ClassLabel
from .exceptions import ModelLoadError, TrainingError

logger = logging.getLogger(__name__)

MLP_VERSION = 1
EMBED_DIM = 16

default_config = {
    "h1": 32,
    "epochs_max": 200,
    "lr": 0.05,
    "label_smoothing": 0.1,
    "patience": 10,
    "validation_fraction": 0.2,
    "batch_size": 32,
    "seed": 0,
}


def relu(x):
    return np.maximum(0.0, x)


def smoothed_targets(labels, num_classes=constants.NUM_CLASSES, eps=0.1):
    """
    (1 - eps) on the true class plus eps / C on every class; rows sum to 1.
    """
    labels = np.asarray(labels, dtype=int)
    ret = np.full((labels.shape[0], num_classes), eps / num_classes)
    ret[np.arange(labels.shape[0]), labels] += 1.0 - eps
    return ret


class MlpModel:
    """
    Dense layers ``dims[0] -> ... -> dims[-1]`` with rectifiers on every hidden layer
    and a softmax output. Weight matrices are (fan_in, fan_out).
    """

    def __init__(self, weights, biases, label_smoothing=0.1, config=None):
        if len(weights) != len(biases) or len(weights) == 0:
            raise ValueError("MlpModel: weights and biases must be nonempty and of equal length.")

        self.weights = []
        self.biases = []
        for W, b in zip(weights, biases):
            W = np.array(W, dtype=np.double, ndmin=2)
            b = np.array(b, dtype=np.double).ravel()
            if W.shape[1] != b.shape[0]:
                raise ValueError("MlpModel: bias length %d does not match layer width %d." % (b.shape[0], W.shape[1]))
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("MlpModel: parameters must be finite.")
            W.flags.writeable = False
            b.flags.writeable = False
            self.weights.append(W)
            self.biases.append(b)

        for prev, nxt in zip(self.weights[:-1], self.weights[1:]):
            if prev.shape[1] != nxt.shape[0]:
                raise ValueError("MlpModel: layer shapes do not chain.")

        if not (0 <= label_smoothing < 1):
            raise ValueError("MlpModel: label_smoothing must lie in [0, 1).")

        self.label_smoothing = float(label_smoothing)
        self.config = copy.deepcopy(config) if config else {}

    def __repr__(self):
        return "MlpModel(dims=%s, label_smoothing=%g)" % (str(self.dims), self.label_smoothing)

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def num_outputs(self):
        return self.dims[-1]

    ### Forward

    def _as_matrix(self, x):
        X = np.asarray(x, dtype=np.double)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.dims[0]:
            raise ValueError("MlpModel: expected %d inputs, found %d." % (self.dims[0], X.shape[1]))
        if not np.all(np.isfinite(X)):
            raise ValueError("MlpModel: input contains non-finite values.")
        return X

    def forward(self, X, weights=None, biases=None):
        """
        Returns the pre-activations and activations of every layer; the last
        pre-activation holds the logits.
        """
        weights = self.weights if weights is None else weights
        biases = self.biases if biases is None else biases

        acts = [X]
        pre = []
        for num, (W, b) in enumerate(zip(weights, biases)):
            z = np.dot(acts[-1], W) + b
            pre.append(z)
            if num < len(weights) - 1:
                acts.append(relu(z))
        return pre, acts

    def predict_proba(self, x):
        X = self._as_matrix(x)
        pre, acts = self.forward(X)
        logits = pre[-1]
        e = np.exp(logits - np.max(logits, axis=1, keepdims=True))
        probs = e / np.sum(e, axis=1, keepdims=True)
        return probs[0] if np.ndim(x) == 1 else probs

    def predict_label(self, x):
        probs = self.predict_proba(x)
        if probs.ndim == 1:
            return ClassLabel.from_index(int(np.argmax(probs)))
        return [ClassLabel.from_index(int(x)) for x in np.argmax(probs, axis=1)]

    def embed(self, x):
        """
        Post-rectifier activations of the penultimate layer.
        """
        if len(self.weights) < 2:
            raise ValueError("MlpModel:embed: a network without hidden layers has no embedding.")

        X = self._as_matrix(x)
        pre, acts = self.forward(X)
        return acts[-1][0] if np.ndim(x) == 1 else acts[-1]

    ### Loss and gradients

    def loss(self, X, labels, weights=None, biases=None):
        pre, acts = self.forward(X, weights, biases)
        return _smoothed_cross_entropy(pre[-1], smoothed_targets(labels, self.num_outputs, self.label_smoothing))

    def gradients(self, X, labels, weights=None, biases=None):
        """
        Analytic gradients of the mean smoothed cross-entropy.

        Returns
        -------
        tuple
            (loss, [dW per layer], [db per layer])
        """
        weights = self.weights if weights is None else weights
        biases = self.biases if biases is None else biases

        X = np.asarray(X, dtype=np.double)
        targets = smoothed_targets(labels, self.num_outputs, self.label_smoothing)
        pre, acts = self.forward(X, weights, biases)
        loss = _smoothed_cross_entropy(pre[-1], targets)

        logits = pre[-1]
        e = np.exp(logits - np.max(logits, axis=1, keepdims=True))
        probs = e / np.sum(e, axis=1, keepdims=True)

        delta = (probs - targets) / X.shape[0]
        dW = [None] * len(weights)
        db = [None] * len(weights)
        for layer in range(len(weights) - 1, -1, -1):
            dW[layer] = np.dot(acts[layer].T, delta)
            db[layer] = np.sum(delta, axis=0)
            if layer > 0:
                delta = np.dot(delta, weights[layer].T) * (pre[layer - 1] > 0)

        return loss, dW, db

    ### Serialization

    def to_json(self):
        return {
            "version": MLP_VERSION,
            "dims": self.dims,
            "label_smoothing": self.label_smoothing,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": copy.deepcopy(self.config)
        }

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, dict) or data.get("version") != MLP_VERSION:
            version = data.get("version") if isinstance(data, dict) else None
            raise ModelLoadError("MlpModel:load: version %s not supported." % str(version))

        try:
            schema.validate(data, "mlp")
        except ValueError as exc:
            raise ModelLoadError("MlpModel:load: invalid model file.\n%s" % str(exc))

        try:
            model = cls(data["weights"], data["biases"], data["label_smoothing"], data.get("config"))
        except ValueError as exc:
            raise ModelLoadError("MlpModel:load: %s" % str(exc))

        if model.dims != list(data["dims"]):
            raise ModelLoadError("MlpModel:load: dims %s do not match the stored weights." % str(data["dims"]))
        return model

    def save(self, filename):
        with open(filename, "w") as outfile:
            json.dump(self.to_json(), outfile)
        logger.info("Wrote MLP model %s to %s", str(self.dims), filename)

    @classmethod
    def load(cls, filename):
        if not os.path.isfile(filename):
            raise OSError("Path '%s' not found." % filename)

        with open(filename, "r") as infile:
            try:
                data = json.load(infile)
            except ValueError as exc:
                raise ModelLoadError("MlpModel:load: '%s' is not valid JSON (%s)." % (filename, str(exc)))
        return cls.from_json(data)

    def fingerprint(self):
        return fields.get_hash(self.to_json(), "mlp")


def _smoothed_cross_entropy(logits, targets):
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    return float(-np.mean(np.sum(targets * log_probs, axis=1)))


def init_mlp(dims, seed=0, label_smoothing=0.1):
    """
    Weights uniform in +/- 1/sqrt(fan_in) from a seeded generator, zero biases.
    """
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, label_smoothing)


def sgd_step(m, X, labels, lr):
    """
    One plain gradient descent step, returning the updated model and the loss before it.
    """
    loss, dW, db = m.gradients(X, labels)
    weights = [W - lr * g for W, g in zip(m.weights, dW)]
    biases = [b - lr * g for b, g in zip(m.biases, db)]
    return MlpModel(weights, biases, m.label_smoothing, m.config), loss


### Training


def _check_config(config):
    ret = copy.deepcopy(default_config)
    if config is not None:
        unknown = set(config) - set(default_config)
        if len(unknown):
            raise KeyError("embed_mlp: Unknown config keys: %s." % ", ".join(sorted(unknown)))
        ret.update(config)

    if not (0 < ret["validation_fraction"] < 1):
        raise ValueError("embed_mlp: validation_fraction must lie in (0, 1).")
    if not (0 <= ret["label_smoothing"] < 1):
        raise ValueError("embed_mlp: label_smoothing must lie in [0, 1).")
    return ret


def stratified_split(labels, fraction, rng):
    """
    Splits row indices per class into (train, validation), drawing ``round(n * fraction)``
    validation rows from each class.
    """
    train_idx = []
    val_idx = []
    for c in np.unique(labels):
        idx = rng.permutation(np.where(labels == c)[0])
        n_val = int(round(idx.shape[0] * fraction))
        if n_val >= idx.shape[0]:
            raise TrainingError("embed_mlp:train: Class %s has too few rows (%d) to keep one in training." %
                                (ClassLabel.from_index(int(c)).value, idx.shape[0]))
        val_idx.extend(idx[:n_val].tolist())
        train_idx.extend(idx[n_val:].tolist())

    if len(val_idx) == 0:
        raise TrainingError("embed_mlp:train: Validation split is empty.")

    return np.array(sorted(train_idx)), np.array(sorted(val_idx))


def train_mlp(data, config=None):
    """
    Trains the 9 -> h1 -> 16 -> 6 embedder on smoothed cross-entropy with early stopping.

    Parameters
    ----------
    data : list of (array_like, ClassLabel)
        Standardized feature vectors with labels.
    config : dict, optional
        Any of ``h1``, ``epochs_max``, ``lr``, ``label_smoothing``, ``patience``,
        ``validation_fraction``, ``batch_size``, ``seed``.

    Returns
    -------
    MlpModel
        The snapshot with the lowest validation loss.
    """

    config = _check_config(config)
    if len(data) == 0:
        raise TrainingError("embed_mlp:train: Training data is empty.")

    try:
        X = np.vstack([np.asarray(v.as_vector() if hasattr(v, "as_vector") else v, dtype=np.double) for v, _ in data])
        y = np.array([ClassLabel.parse(label).index for _, label in data], dtype=int)
    except KeyError as exc:
        raise TrainingError("embed_mlp:train: %s" % str(exc))

    if not np.all(np.isfinite(X)):
        raise TrainingError("embed_mlp:train: Training features contain non-finite values.")
    if len(np.unique(y)) < 2:
        raise TrainingError("embed_mlp:train: At least two classes are required.")

    rng = np.random.default_rng(config["seed"])
    train_idx, val_idx = stratified_split(y, config["validation_fraction"], rng)

    dims = [X.shape[1], config["h1"], EMBED_DIM, constants.NUM_CLASSES]
    model = init_mlp(dims, seed=config["seed"], label_smoothing=config["label_smoothing"])

    best = model
    best_loss = model.loss(X[val_idx], y[val_idx])
    best_epoch = 0
    wait = 0
    history = []

    for epoch in range(1, config["epochs_max"] + 1):
        order = rng.permutation(train_idx)
        for start in range(0, order.shape[0], config["batch_size"]):
            batch = order[start:start + config["batch_size"]]
            model, _ = sgd_step(model, X[batch], y[batch], config["lr"])

        val_loss = model.loss(X[val_idx], y[val_idx])
        history.append(val_loss)
        logger.debug("embed_mlp:train: epoch %d validation loss %.6f", epoch, val_loss)

        if val_loss < best_loss:
            best, best_loss, best_epoch = model, val_loss, epoch
            wait = 0
        else:
            wait += 1
            if wait >= config["patience"]:
                break

    stored = dict(config)
    stored["best_epoch"] = best_epoch
    stored["epochs_run"] = len(history)
    stored["best_validation_loss"] = best_loss

    logger.info("embed_mlp:train: best validation loss %.6f at epoch %d of %d", best_loss, best_epoch, len(history))
    return MlpModel(best.weights, best.biases, best.label_smoothing, stored)


def embed(m, x):
    return m.embed(x)


def gradient_check(m, batch, step=1e-5):
    """
    Largest relative error between analytic and central finite-difference gradients.

    Parameters
    ----------
    m : MlpModel
        The network to check.
    batch : tuple or list
        Either ``(X, labels)`` or a list of ``(vector, label)`` pairs.
    step : float
        Finite-difference step.

    Returns
    -------
    float
        max over parameters of ``|a - n| / max(|a| + |n|, 1e-5)``.
    """

    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        X, labels = batch
        labels = [ClassLabel.parse(x).index if not isinstance(x, (int, np.integer)) else int(x) for x in labels]
    else:
        X = np.vstack([np.asarray(v, dtype=np.double) for v, _ in batch])
        labels = [ClassLabel.parse(x).index if not isinstance(x, (int, np.integer)) else int(x) for _, x in batch]

    X = np.asarray(X, dtype=np.double)
    labels = np.asarray(labels, dtype=int)

    _, dW, db = m.gradients(X, labels)
    weights = [W.copy() for W in m.weights]
    biases = [b.copy() for b in m.biases]

    worst = 0.0
    for params, grads in ((weights, dW), (biases, db)):
        for arr, grad in zip(params, grads):
            for pos in np.ndindex(arr.shape):
                orig = arr[pos]
                arr[pos] = orig + step
                plus = m.loss(X, labels, weights, biases)
                arr[pos] = orig - step
                minus = m.loss(X, labels, weights, biases)
                arr[pos] = orig

                numeric = (plus - minus) / (2 * step)
                rel = abs(grad[pos] - numeric) / max(abs(grad[pos]) + abs(numeric), 1e-5)
                worst = max(worst, rel)

    return worst
