"""
Assists in grabbing the requisite schema
"""

import copy
import json

import jsonschema

from .definitions_schema import get_definition
from .artifact_schema import standardizer_schema, gbdt_schema, mlp_schema
from .kb_schema import exemplar_schema, kb_metadata_schema
from .run_config_schema import run_config_schema

__all__ = ["get_schema", "validate", "list_schemas"]

_schemas = {}
_schemas["standardizer"] = standardizer_schema
_schemas["gbdt"] = gbdt_schema
_schemas["mlp"] = mlp_schema
_schemas["exemplar"] = exemplar_schema
_schemas["kb_metadata"] = kb_metadata_schema
_schemas["run_config"] = run_config_schema

# Add in the shared definitions
for _schema in _schemas.values():
    for req in _schema["required_definitions"]:
        _schema["definitions"][req] = get_definition(req)

_validators = {name: jsonschema.Draft4Validator(schema) for name, schema in _schemas.items()}


def list_schemas():
    return sorted(_schemas)


def get_schema(name):
    if name not in _schemas:
        raise KeyError("Schema name %s not found." % name)
    return copy.deepcopy(_schemas[name])


def validate(data, schema_name, return_errors=False):
    if schema_name not in _schemas:
        raise KeyError("Schema name %s not found." % schema_name)

    errors = [x for x in _validators[schema_name].iter_errors(data)]
    if len(errors):
        if return_errors:
            return errors
        else:
            error_msg = "Error validating schema '%s'!\n" % schema_name
            error_msg += "Data: \n" + json.dumps(data, indent=2)[:2000]
            error_msg += "\n\nJSON Schema errors as follow:\n"
            error_msg += "\n".join(x.message for x in errors)
            error_msg += "\n"

            raise ValueError(error_msg)
    else:
        return True
