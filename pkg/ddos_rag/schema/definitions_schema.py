"""
All json-schema definitions shared between the project's schemas
"""

import copy

__all__ = ["get_definition"]

_definitions = {
    "feature_vector": {
        "description": "A nine-dimensional flow vector in the frozen feature order.",
        "type": "array",
        "items": {
            "type": "number"
        },
        "minItems": 9,
        "maxItems": 9
    },
    "class_label": {
        "description": "A canonical class label.",
        "type": "string",
        "enum": ["ICMP", "UDP", "TCP", "PSHACK", "RSTFIN", "BENIGN"]
    },
    "model_ref": {
        "description": "A reference to the language model answering prompts.",
        "type": "object",
        "properties": {
            "kind": {
                "type": "string",
                "enum": ["REMOTE", "RULE_ORACLE"]
            },
            "name": {
                "type": "string"
            },
            "endpoint": {
                "type": ["string", "null"]
            },
            "path": {
                "type": "string"
            },
            "timeout_ms": {
                "type": "integer",
                "minimum": 1
            },
            "retries": {
                "type": "integer",
                "minimum": 0
            },
            "max_in_flight": {
                "type": "integer",
                "minimum": 1
            },
            "backoff_s": {
                "type": "number",
                "minimum": 0
            }
        },
        "required": ["kind"],
        "additionalProperties": False
    }
}


def get_definition(definition):
    if definition not in _definitions:
        raise KeyError("Definition '%s' not present." % definition)

    return copy.deepcopy(_definitions[definition])
