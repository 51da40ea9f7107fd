"""A collection of fields which determine what we hash into artifact fingerprints
"""

import hashlib
import json

import numpy as np

# Rounding applied to floats before hashing
FINGERPRINT_NOISE = 10

### Hash Fields
hash_fields = {}
hash_fields["standardizer"] = ("means", "stddevs")
hash_fields["gbdt"] = ("version", "params", "class_order", "feature_count", "trees")
hash_fields["mlp"] = ("version", "dims", "label_smoothing", "weights", "biases")
hash_fields["detector"] = ("name", "regime", "k", "retrieval_space", "include_rationale", "model_kind", "model_name",
                           "standardizer", "gbdt", "mlp", "knowledge_base")

_rounded_fields = {"means", "stddevs"}


def round_floats(values, around=FINGERPRINT_NOISE):
    """
    Rounds a float vector to a common precision and flips negative zeros so equal
    standardizers hash equally.
    """
    arr = np.around(np.asarray(values, dtype=np.double), around)
    arr[np.abs(arr) < 5**(-(around + 1))] = 0.0
    return arr.tolist()


def get_hash(data, field_type):
    """
    Returns the sha1 fingerprint of the hashed fields of a JSON-like artifact.
    """

    m = hashlib.sha1()
    concat = ""
    if field_type is None:
        concat = json.dumps(data, sort_keys=True)
    else:
        if field_type not in hash_fields:
            raise KeyError("fields:get_hash: Field type '%s' not recognized." % field_type)

        for field in hash_fields[field_type]:
            value = data.get(field)
            if field in _rounded_fields and value is not None:
                value = round_floats(value)
            concat += json.dumps(value, sort_keys=True)

    m.update(concat.encode("utf-8"))
    return m.hexdigest()
