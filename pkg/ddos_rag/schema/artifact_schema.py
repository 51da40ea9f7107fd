"""
The json-schema for the trained artifacts: standardizer, GBDT and MLP model files
"""

standardizer_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "Per-feature z-score parameters.",
    "properties": {
        "means": {
            "$ref": "#/definitions/feature_vector"
        },
        "stddevs": {
            "$ref": "#/definitions/feature_vector"
        },
        "feature_order": {
            "type": "array",
            "items": {
                "type": "string"
            }
        }
    },
    "required": ["means", "stddevs"],
    "definitions": {},
    "additionalProperties": False,

    # Custom components
    "required_definitions": ["feature_vector"]
}

gbdt_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "A multiclass softmax gradient-boosted tree ensemble.",
    "properties": {
        "version": {
            "type": "integer"
        },
        "params": {
            "type": "object",
            "properties": {
                "max_depth": {
                    "type": "integer",
                    "minimum": 0
                },
                "learning_rate": {
                    "type": "number"
                },
                "rounds": {
                    "type": "integer",
                    "minimum": 0
                },
                "gamma": {
                    "type": "number",
                    "minimum": 0
                },
                "lambda": {
                    "type": "number",
                    "minimum": 0
                },
                "min_child_weight": {
                    "type": "number",
                    "minimum": 0
                }
            },
            "required": ["max_depth", "learning_rate", "rounds", "gamma", "lambda", "min_child_weight"]
        },
        "class_order": {
            "type": "array",
            "items": {
                "$ref": "#/definitions/class_label"
            }
        },
        "feature_count": {
            "type": "integer",
            "minimum": 1
        },
        "trees": {
            "type": "array",
            "items": {
                "$ref": "#/definitions/tree_node"
            }
        },
        "train_loss": {
            "type": "array",
            "items": {
                "type": "number"
            }
        }
    },
    "required": ["version", "params", "class_order", "feature_count", "trees"],
    "definitions": {
        "tree_node": {
            "type": "object",
            "oneOf": [{
                "properties": {
                    "leaf": {
                        "type": "number"
                    }
                },
                "required": ["leaf"],
                "additionalProperties": False
            }, {
                "properties": {
                    "feature": {
                        "type": "integer",
                        "minimum": 0
                    },
                    "threshold": {
                        "type": "number"
                    },
                    "left": {
                        "$ref": "#/definitions/tree_node"
                    },
                    "right": {
                        "$ref": "#/definitions/tree_node"
                    }
                },
                "required": ["feature", "threshold", "left", "right"],
                "additionalProperties": False
            }]
        }
    },
    "additionalProperties": False,
    "required_definitions": ["class_label"]
}

mlp_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "A rectifier MLP whose penultimate layer is the retrieval embedding.",
    "properties": {
        "version": {
            "type": "integer"
        },
        "dims": {
            "type": "array",
            "items": {
                "type": "integer",
                "minimum": 1
            },
            "minItems": 2
        },
        "label_smoothing": {
            "type": "number",
            "minimum": 0,
            "maximum": 1
        },
        "weights": {
            "description": "Row-major (fan_in x fan_out) matrices, one per layer.",
            "type": "array",
            "items": {
                "type": "array",
                "items": {
                    "type": "array",
                    "items": {
                        "type": "number"
                    }
                }
            }
        },
        "biases": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {
                    "type": "number"
                }
            }
        },
        "config": {
            "type": "object"
        }
    },
    "required": ["version", "dims", "label_smoothing", "weights", "biases"],
    "definitions": {},
    "additionalProperties": False,
    "required_definitions": []
}
