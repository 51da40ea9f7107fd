"""A module for classification metrics over a confusion matrix.

Matrices are (C, C + 1): rows are true classes, the first C columns predicted classes
and the last column unparseable answers. Ratios with a zero denominator are 0.
"""
import numpy as np


def _safe_divide(num, den):
    num = np.asarray(num, dtype=np.double)
    den = np.asarray(den, dtype=np.double)
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def true_positives(matrix):
    c = matrix.shape[0]
    return np.diag(matrix[:, :c]).astype(np.double)


def precision(matrix):
    # Parse failures are predicted as no class, so they never add a false positive
    c = matrix.shape[0]
    return _safe_divide(true_positives(matrix), np.sum(matrix[:, :c], axis=0))


def recall(matrix):
    return _safe_divide(true_positives(matrix), np.sum(matrix, axis=1))


def f1(matrix):
    p = precision(matrix)
    r = recall(matrix)
    return _safe_divide(2.0 * p * r, p + r)


def accuracy(matrix):
    total = np.sum(matrix)
    return float(np.sum(true_positives(matrix)) / total) if total else 0.0


def parse_failure_rate(matrix):
    total = np.sum(matrix)
    return float(np.sum(matrix[:, -1]) / total) if total else 0.0


def macro(values):
    """Unweighted mean over classes."""
    return float(np.mean(values))


# Per-class stats wrapped in a dictionary:
_stats_dict = {}
_stats_dict['precision'] = precision
_stats_dict['recall'] = recall
_stats_dict['f1'] = f1


def list_statistics():
    return sorted(_stats_dict)


def wrap_statistics(description, matrix):
    """
    Returns the per-class values of a named statistic.
    """
    if description not in _stats_dict:
        raise KeyError("Statistic '%s' not recognized." % description)

    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[1] != matrix.shape[0] + 1:
        raise ValueError("Confusion matrix must be (C, C + 1), found %s." % str(matrix.shape))

    return _stats_dict[description](matrix)
