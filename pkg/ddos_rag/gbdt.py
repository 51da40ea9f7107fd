"""
Multiclass softmax gradient-boosted regression trees: one tree per class per round, exact
greedy split search on second-order gradient statistics.
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

GBDT_VERSION = 1

default_params = {
    "max_depth": 6,
    "learning_rate": 0.1,
    "rounds": 100,
    "gamma": 0.0,
    "lambda": 1.0,
    "min_child_weight": 1.0,
}


def softmax(margins):
    """
    Row-wise softmax of a margin matrix (or a single margin vector).
    """
    margins = np.asarray(margins, dtype=np.double)
    shifted = margins - np.max(margins, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_loss(probs, labels):
    """
    Mean multinomial log-loss of class probabilities against integer labels.
    """
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


class RegressionTree:
    """
    A binary regression tree kept as nested nodes, either ``{"leaf": w}`` or
    ``{"feature": j, "threshold": t, "left": node, "right": node}``. Rows with
    ``x[j] < t`` descend left.
    """

    def __init__(self, root):
        self.root = root
        self._leaves = []
        self._number_leaves(self.root)

    def _number_leaves(self, node):
        if "leaf" in node:
            node["_id"] = len(self._leaves)
            self._leaves.append(node)
        else:
            self._number_leaves(node["left"])
            self._number_leaves(node["right"])

    @property
    def num_leaves(self):
        return len(self._leaves)

    def leaf_weights(self):
        return np.array([x["leaf"] for x in self._leaves])

    def depth(self, node=None):
        node = self.root if node is None else node
        if "leaf" in node:
            return 0
        return 1 + max(self.depth(node["left"]), self.depth(node["right"]))

    def split_features(self, node=None):
        node = self.root if node is None else node
        if "leaf" in node:
            return set()
        return {node["feature"]} | self.split_features(node["left"]) | self.split_features(node["right"])

    def _route(self, node, X, rows, out):
        if "leaf" in node:
            out[rows] = node["_id"]
            return

        go_left = X[rows, node["feature"]] < node["threshold"]
        self._route(node["left"], X, rows[go_left], out)
        self._route(node["right"], X, rows[~go_left], out)

    def apply(self, X):
        """
        Returns the leaf index (depth-first, left before right) reached by each row.
        """
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0], dtype=int)
        self._route(self.root, X, np.arange(X.shape[0]), out)
        return out

    def predict(self, X):
        return self.leaf_weights()[self.apply(X)]

    def to_json(self, node=None):
        node = self.root if node is None else node
        if "leaf" in node:
            return {"leaf": float(node["leaf"])}
        return {
            "feature": int(node["feature"]),
            "threshold": float(node["threshold"]),
            "left": self.to_json(node["left"]),
            "right": self.to_json(node["right"])
        }

    @classmethod
    def from_json(cls, data):
        return cls(copy.deepcopy(data))


### Tree growth


def _best_split(X, presorted, in_node, grad, hess, params):
    """
    Exact greedy search over every boundary between distinct sorted values.
    Returns (gain, feature, threshold) or None when nothing beats gamma.
    """
    lam = params["lambda"]
    mcw = params["min_child_weight"]

    G = np.sum(grad[in_node])
    H = np.sum(hess[in_node])
    parent = G**2 / (H + lam)

    best = None
    for feature in range(X.shape[1]):
        order = presorted[:, feature]
        idx = order[in_node[order]]
        if idx.shape[0] < 2:
            continue

        xs = X[idx, feature]
        GL = np.cumsum(grad[idx])[:-1]
        HL = np.cumsum(hess[idx])[:-1]
        GR = G - GL
        HR = H - HL

        valid = (xs[1:] > xs[:-1]) & (HL >= mcw) & (HR >= mcw)
        if not np.any(valid):
            continue

        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent)
        gain[~valid] = -np.inf

        pos = int(np.argmax(gain))
        if (best is None) or (gain[pos] > best[0]):
            lo, hi = xs[pos], xs[pos + 1]
            threshold = 0.5 * (lo + hi)
            if not (threshold > lo):
                threshold = hi
            best = (float(gain[pos]), feature, float(threshold))

    if (best is None) or not (best[0] > params["gamma"]):
        return None
    return best


def _grow(X, presorted, in_node, grad, hess, params, depth):
    if depth < params["max_depth"]:
        split = _best_split(X, presorted, in_node, grad, hess, params)
    else:
        split = None

    if split is None:
        weight = -np.sum(grad[in_node]) / (np.sum(hess[in_node]) + params["lambda"])
        return {"leaf": float(weight)}

    gain, feature, threshold = split
    go_left = X[:, feature] < threshold
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow(X, presorted, in_node & go_left, grad, hess, params, depth + 1),
        "right": _grow(X, presorted, in_node & ~go_left, grad, hess, params, depth + 1)
    }


def grow_tree(X, grad, hess, params=None, presorted=None):
    """
    Fits one regression tree to per-row gradient and hessian statistics.

    Parameters
    ----------
    X : np.ndarray
        (n, d) training matrix.
    grad, hess : np.ndarray
        First and second order statistics of the loss, one per row.
    params : dict, optional
        Tree parameters, missing keys are taken from ``default_params``.
    presorted : np.ndarray, optional
        ``np.argsort(X, axis=0)``, shared between the trees of an ensemble.

    Returns
    -------
    RegressionTree
        Leaf weights are ``-G / (H + lambda)`` over the rows reaching each leaf.
    """

    params = _check_params(params)
    X = np.asarray(X, dtype=np.double)
    if presorted is None:
        presorted = np.argsort(X, axis=0, kind="mergesort")

    in_node = np.ones(X.shape[0], dtype=bool)
    root = _grow(X, presorted, in_node, np.asarray(grad, dtype=np.double), np.asarray(hess, dtype=np.double),
                 params, 0)
    return RegressionTree(root)


def _check_params(params):
    ret = copy.deepcopy(default_params)
    if params is not None:
        unknown = set(params) - set(default_params)
        if len(unknown):
            raise KeyError("gbdt: Unknown parameters: %s." % ", ".join(sorted(unknown)))
        ret.update(params)

    ret["max_depth"] = int(ret["max_depth"])
    ret["rounds"] = int(ret["rounds"])
    for key in ["learning_rate", "gamma", "lambda", "min_child_weight"]:
        ret[key] = float(ret[key])

    if ret["rounds"] < 0 or ret["max_depth"] < 0:
        raise ValueError("gbdt: rounds and max_depth must be nonnegative.")
    if ret["gamma"] < 0 or ret["lambda"] < 0:
        raise ValueError("gbdt: gamma and lambda must be nonnegative.")
    return ret


### Model


class GbdtModel:
    """
    A trained softmax ensemble. ``trees[r * num_classes + c]`` is the tree of class ``c``
    in round ``r``.
    """

    def __init__(self, params, trees, feature_count=constants.NUM_FEATURES, train_loss=None):
        self.params = _check_params(params)
        self.trees = list(trees)
        self.feature_count = int(feature_count)
        self.class_order = constants.CLASS_ORDER
        self.train_loss = list(train_loss) if train_loss is not None else []

        if len(self.trees) != self.rounds * self.num_classes:
            raise ValueError("GbdtModel: expected %d trees, found %d." % (self.rounds * self.num_classes,
                                                                       len(self.trees)))

        for tree in self.trees:
            if any(x >= self.feature_count for x in tree.split_features()):
                raise ValueError("GbdtModel: split feature index out of range.")

    def __repr__(self):
        return "GbdtModel(rounds=%d, learning_rate=%g, feature_count=%d)" % (self.rounds, self.learning_rate,
                                                                            self.feature_count)

    @property
    def num_classes(self):
        return constants.NUM_CLASSES

    @property
    def rounds(self):
        return self.params["rounds"]

    @property
    def learning_rate(self):
        return self.params["learning_rate"]

    @property
    def gamma(self):
        return self.params["gamma"]

    @property
    def lambda_(self):
        return self.params["lambda"]

    ### Prediction

    def _as_matrix(self, x):
        X = np.asarray(x, dtype=np.double)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.feature_count:
            raise ValueError("GbdtModel: expected %d features, found %d." % (self.feature_count, X.shape[1]))
        if not np.all(np.isfinite(X)):
            raise ValueError("GbdtModel: input contains non-finite values.")
        return X

    def margins(self, x):
        X = self._as_matrix(x)
        ret = np.zeros((X.shape[0], self.num_classes))
        for num, tree in enumerate(self.trees):
            ret[:, num % self.num_classes] += self.learning_rate * tree.predict(X)
        return ret

    def predict_proba(self, x):
        """
        Softmax of the summed per-class leaf contributions. A single vector returns a
        6-vector, a matrix returns one row per input.
        """
        probs = softmax(self.margins(x))
        if np.ndim(x) == 1:
            return probs[0]
        return probs

    def predict_label(self, x):
        # np.argmax takes the lowest index on ties
        probs = self.predict_proba(x)
        if probs.ndim == 1:
            return ClassLabel.from_index(int(np.argmax(probs)))
        return [ClassLabel.from_index(int(x)) for x in np.argmax(probs, axis=1)]

    ### Serialization

    def to_json(self):
        return {
            "version": GBDT_VERSION,
            "params": copy.deepcopy(self.params),
            "class_order": list(constants.CANONICAL_LABELS),
            "feature_count": self.feature_count,
            "trees": [x.to_json() for x in self.trees],
            "train_loss": [float(x) for x in self.train_loss]
        }

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, dict) or data.get("version") != GBDT_VERSION:
            version = data.get("version") if isinstance(data, dict) else None
            raise ModelLoadError("GbdtModel:load: version %s not supported." % str(version))

        try:
            schema.validate(data, "gbdt")
        except ValueError as exc:
            raise ModelLoadError("GbdtModel:load: invalid model file.\n%s" % str(exc))

        if tuple(data["class_order"]) != constants.CANONICAL_LABELS:
            raise ModelLoadError("GbdtModel:load: class order %s does not match %s." %
                                 (str(data["class_order"]), str(constants.CANONICAL_LABELS)))

        try:
            trees = [RegressionTree.from_json(x) for x in data["trees"]]
            return cls(data["params"], trees, data["feature_count"], data.get("train_loss"))
        except (KeyError, ValueError) as exc:
            raise ModelLoadError("GbdtModel:load: %s" % str(exc))

    def save(self, filename):
        with open(filename, "w") as outfile:
            json.dump(self.to_json(), outfile)
        logger.info("Wrote GBDT model (%d trees) to %s", len(self.trees), filename)

    @classmethod
    def load(cls, filename):
        if not os.path.isfile(filename):
            raise OSError("Path '%s' not found." % filename)

        with open(filename, "r") as infile:
            try:
                data = json.load(infile)
            except ValueError as exc:
                raise ModelLoadError("GbdtModel:load: '%s' is not valid JSON (%s)." % (filename, str(exc)))

        model = cls.from_json(data)
        logger.info("Read GBDT model from %s", filename)
        return model

    def fingerprint(self):
        return fields.get_hash(self.to_json(), "gbdt")


### Training


def _training_arrays(data):
    if len(data) == 0:
        raise TrainingError("gbdt:train: Training data is empty.")

    rows = []
    labels = []
    for vec, label in data:
        if hasattr(vec, "as_vector"):
            vec = vec.as_vector()
        rows.append(np.asarray(vec, dtype=np.double))
        try:
            labels.append(ClassLabel.parse(label).index)
        except KeyError:
            raise TrainingError("gbdt:train: Unknown label '%s'." % str(label))

    try:
        X = np.vstack(rows)
    except ValueError:
        raise TrainingError("gbdt:train: Feature vectors differ in length.")

    if not np.all(np.isfinite(X)):
        raise TrainingError("gbdt:train: Training features contain non-finite values.")

    return X, np.array(labels, dtype=int)


def train(data, params=None):
    """
    Forward stage-wise fitting of the multinomial log-loss.

    Parameters
    ----------
    data : list of (array_like, ClassLabel)
        Feature vectors (or FlowFeatures) with labels.
    params : dict, optional
        Any of ``max_depth``, ``learning_rate``, ``rounds``, ``gamma``, ``lambda`` and
        ``min_child_weight``; the rest come from ``default_params``.

    Returns
    -------
    GbdtModel
        ``train_loss[r]`` is the training log-loss after ``r`` rounds.

    Notes
    -----
    Every class tree of a round is fit to gradients ``p - onehot`` and hessians
    ``p (1 - p)`` of the same probabilities, and the round's contributions are added to
    the margins together.
    """

    params = _check_params(params)
    X, y = _training_arrays(data)

    if len(np.unique(y)) < 2:
        logger.warning("gbdt:train: Only one distinct label in %d training rows.", len(y))

    num_classes = constants.NUM_CLASSES
    onehot = np.zeros((X.shape[0], num_classes))
    onehot[np.arange(X.shape[0]), y] = 1.0

    presorted = np.argsort(X, axis=0, kind="mergesort")
    margins = np.zeros((X.shape[0], num_classes))
    trees = []
    train_loss = [log_loss(softmax(margins), y)]

    for rnd in range(params["rounds"]):
        probs = softmax(margins)
        update = np.zeros_like(margins)
        for c in range(num_classes):
            grad = probs[:, c] - onehot[:, c]
            hess = probs[:, c] * (1.0 - probs[:, c])
            tree = grow_tree(X, grad, hess, params, presorted=presorted)
            update[:, c] = params["learning_rate"] * tree.predict(X)
            trees.append(tree)

        margins += update
        train_loss.append(log_loss(softmax(margins), y))
        logger.debug("gbdt:train: round %d loss %.6f", rnd + 1, train_loss[-1])

    model = GbdtModel(params, trees, X.shape[1], train_loss)
    logger.info("gbdt:train: %d rows, %d rounds, final loss %.6f", X.shape[0], params["rounds"], train_loss[-1])
    return model


def predict_proba(m, x):
    return m.predict_proba(x)


def predict_label(m, x):
    return m.predict_label(x)


def save(m, filename):
    m.save(filename)


def load(filename):
    return GbdtModel.load(filename)
