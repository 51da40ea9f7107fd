"""
Errors raised across ddos_rag. Each class also derives from the builtin the same failure
raised before it had its own type, so broad ``except ValueError`` handlers keep working.
"""

__all__ = [
    "DdosRagError", "ConfigurationError", "IngestionError", "TrainingError", "ModelLoadError", "QueryError",
    "PromptError", "TransportError", "ProtocolError", "ParseFailure", "EvaluationError"
]


class DdosRagError(Exception):
    pass


class ConfigurationError(DdosRagError, KeyError):
    def __str__(self):
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class IngestionError(DdosRagError, ValueError):
    pass


class TrainingError(DdosRagError, ValueError):
    pass


class ModelLoadError(DdosRagError, ValueError):
    pass


class QueryError(DdosRagError, ValueError):
    pass


class PromptError(DdosRagError, ValueError):
    pass


class TransportError(DdosRagError, IOError):
    pass


class ProtocolError(DdosRagError, ValueError):
    pass


class ParseFailure(DdosRagError, ValueError):
    """
    No vocabulary label follows any "the answer is" in a model response.
    """

    def __init__(self, message, response=""):
        super().__init__(message)
        self.response = response


class EvaluationError(DdosRagError, ValueError):
    pass
