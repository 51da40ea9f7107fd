"""
The json-schema for a run configuration (detection and evaluation sweeps)
"""

run_config_schema = {
    "$schema": "http://json-schema.org/draft-04/schema#",
    "description": "Artifacts, model reference and the detector grid of a run.",
    "properties": {
        "standardizer": {
            "type": "string",
            "description": "Path to the fitted standardizer JSON."
        },
        "gbdt_model": {
            "type": ["string", "null"]
        },
        "mlp_model": {
            "type": ["string", "null"]
        },
        "knowledge_base": {
            "type": ["string", "null"]
        },
        "strict_fingerprints": {
            "type": "boolean",
            "default": False
        },
        "seed": {
            "type": "integer",
            "default": 0
        },
        "per_class": {
            "type": "integer",
            "minimum": 0,
            "default": 500
        },
        "column_map": {
            "type": ["object", "string"],
            "description": "A column map or the name of a packaged one."
        },
        "thresholds": {
            "type": "object",
            "properties": {
                "payload_len": {
                    "type": "number",
                    "minimum": 0
                },
                "rate": {
                    "type": "number",
                    "minimum": 0
                }
            },
            "additionalProperties": False
        },
        "model": {
            "$ref": "#/definitions/model_ref"
        },
        "grid": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "name": {
                        "type": "string"
                    },
                    "regime": {
                        "type": "string",
                        "enum": ["NO_KB", "SHORT_KB", "COT", "ONE_SHOT", "FEW_SHOT"]
                    },
                    "k": {
                        "type": "integer",
                        "minimum": 0
                    },
                    "retrieval_space": {
                        "type": "string",
                        "enum": ["signature", "feature", "custom"]
                    },
                    "include_rationale": {
                        "type": ["boolean", "null"]
                    },
                    "max_chars": {
                        "type": ["integer", "null"],
                        "minimum": 1
                    },
                    "model": {
                        "$ref": "#/definitions/model_ref"
                    }
                },
                "required": ["regime"],
                "additionalProperties": False
            }
        }
    },
    "required": ["standardizer", "model", "grid"],
    "definitions": {},
    "additionalProperties": False,
    "required_definitions": ["model_ref"]
}
