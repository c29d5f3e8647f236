"""Exceptions carrying machine-readable error codes."""

ERR_INVALID_INPUT = "INVALID_INPUT"
ERR_CONFIG = "CONFIG_ERROR"
ERR_SPECTRUM_CAP = "SPECTRUM_CAP_EXCEEDED"
ERR_BRACKET_NOT_FOUND = "BRACKET_NOT_FOUND"
ERR_SOLVER_FAILED = "SOLVER_FAILED"
ERR_DEGENERATE_DERIVATIVE = "DEGENERATE_DERIVATIVE"
ERR_EMBEDDING_NOT_FOUND = "EMBEDDING_NOT_FOUND"
ERR_OPERATION_FAILED = "OPERATION_FAILED"


class CrlabError(Exception):
    code = ERR_OPERATION_FAILED

    def __init__(self, message, details=None, code=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}
        if code:
            self.code = code

    def to_record(self):
        return {"error": self.message, "code": self.code, "details": self.details}


class InvalidInputError(CrlabError, ValueError):
    code = ERR_INVALID_INPUT


class ConfigError(CrlabError):
    code = ERR_CONFIG


class TruncationError(CrlabError):
    """Raised when a computation needs eigenvalues beyond the spectrum cap."""
    code = ERR_SPECTRUM_CAP


class BracketError(CrlabError):
    code = ERR_BRACKET_NOT_FOUND


class SolverError(CrlabError):
    code = ERR_SOLVER_FAILED


class DerivativeError(CrlabError):
    code = ERR_DEGENERATE_DERIVATIVE


class DiagnosticsError(CrlabError):
    code = ERR_EMBEDDING_NOT_FOUND
