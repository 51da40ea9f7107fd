"""
The json-schema for one knowledge base line and the KB sidecar metadata
"""

exemplar_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "An archived labeled flow quotable in prompts.",
    "properties": {
        "id": {
            "type": "integer",
            "minimum": 0
        },
        "features_std": {
            "$ref": "#/definitions/feature_vector"
        },
        "signature": {
            "type": ["array", "null"],
            "items": {
                "type": "number",
                "minimum": 0,
                "maximum": 1
            }
        },
        "description": {
            "type": "string",
            "minLength": 1
        },
        "label": {
            "$ref": "#/definitions/class_label"
        },
        "rationale": {
            "type": ["string", "null"]
        },
        "embedding": {
            "type": ["array", "null"],
            "items": {
                "type": "number"
            }
        }
    },
    "required": ["id", "features_std", "signature", "description", "label", "rationale"],
    "definitions": {},
    "additionalProperties": False,
    "required_definitions": ["feature_vector", "class_label"]
}

kb_metadata_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "Provenance of a knowledge base.",
    "properties": {
        "standardizer_fingerprint": {
            "type": ["string", "null"]
        },
        "model_fingerprint": {
            "type": ["string", "null"]
        },
        "created": {
            "type": ["string", "null"]
        },
        "teacher": {
            "type": ["string", "null"]
        },
        "teacher_failures": {
            "type": "integer",
            "minimum": 0
        },
        "custom_space": {
            "type": ["integer", "null"]
        },
        "size": {
            "type": "integer",
            "minimum": 0
        }
    },
    "definitions": {},
    "additionalProperties": True,
    "required_definitions": []
}
