"""Error codes and exception family for the consent ledger platform."""

import json
from typing import Any, Dict, Optional


class ConsentErrorCodes:
    """Error codes following the JSON-RPC 2.0 layout plus application codes."""

    # JSON-RPC 2.0 standard errors
    PARSE_ERROR = -32700
    INVALID_REQUEST = -32600
    METHOD_NOT_FOUND = -32601
    INVALID_PARAMS = -32602
    INTERNAL_ERROR = -32603

    # Application-specific error codes
    KEY_GENERATION_FAILED = -41001
    MALFORMED_KEY = -41002
    DECRYPTION_FAILED = -41003
    UNKNOWN_CHANNEL = -41101
    CHAIN_CORRUPT = -41102
    RECORD_NOT_FOUND = -41201
    ALREADY_REGISTERED = -41202
    CONTRACT_REJECTED = -41203
    UNKNOWN_NODE = -41301
    CHAIN_UNAVAILABLE = -41302
    PARTIAL_COMMIT = -41303
    DOCUMENT_NOT_FOUND = -41401
    INFEASIBLE_WORKLOAD = -41501
    VALIDATION_ERROR = -41901


def create_error(
    code: int,
    message: str,
    data: Optional[Dict[str, Any]] = None
) -> str:
    """Create an error response in JSON-RPC 2.0 format.

    Args:
        code: Error code from ConsentErrorCodes
        message: Human-readable error message
        data: Optional additional error data

    Returns:
        JSON string with error response
    """
    error_response = {
        "error": {
            "code": code,
            "message": message
        }
    }

    if data:
        error_response["error"]["data"] = data

    return json.dumps(error_response)


def create_success(data: Dict[str, Any]) -> str:
    """Create a success response."""
    return json.dumps(data)


class ConsentError(Exception):
    """Base exception for consent ledger errors."""

    def __init__(self, code: int, message: str, data: Optional[Dict[str, Any]] = None):
        self.code = code
        self.message = message
        self.data = data
        super().__init__(message)

    def to_json(self) -> str:
        """Convert exception to error JSON."""
        return create_error(self.code, self.message, self.data)


class KeyGenerationError(ConsentError):
    """Key generation failed (bad parameters or entropy source)."""

    def __init__(self, message: str):
        super().__init__(
            code=ConsentErrorCodes.KEY_GENERATION_FAILED,
            message=f"Key generation failed: {message}"
        )


class MalformedKeyError(ConsentError):
    """Key material could not be parsed."""

    def __init__(self, message: str = "malformed key"):
        super().__init__(
            code=ConsentErrorCodes.MALFORMED_KEY,
            message=message
        )


class DecryptionError(ConsentError):
    """Ciphertext could not be opened with the supplied key."""

    def __init__(self, message: str = "decryption failed"):
        super().__init__(
            code=ConsentErrorCodes.DECRYPTION_FAILED,
            message=message
        )


class UnknownChannelError(ConsentError):
    """Channel name not known to the ledger."""

    def __init__(self, channel: str):
        super().__init__(
            code=ConsentErrorCodes.UNKNOWN_CHANNEL,
            message=f"Unknown channel '{channel}'",
            data={"channel": channel}
        )


class ChainIntegrityError(ConsentError):
    """A block does not link onto the local chain."""

    def __init__(self, channel: str, height: int, message: str):
        super().__init__(
            code=ConsentErrorCodes.CHAIN_CORRUPT,
            message=f"Chain integrity error on {channel} at height {height}: {message}",
            data={"channel": channel, "height": height}
        )


class RecordNotFoundError(ConsentError):
    """No ledger record under the requested key."""

    def __init__(self, key: str):
        super().__init__(
            code=ConsentErrorCodes.RECORD_NOT_FOUND,
            message=f"Record '{key}' not found",
            data={"key": key}
        )


class AlreadyRegisteredError(ConsentError):
    """A dataset with this composite key is already registered."""

    def __init__(self, key: str):
        super().__init__(
            code=ConsentErrorCodes.ALREADY_REGISTERED,
            message=f"Dataset '{key}' is already registered",
            data={"key": key}
        )


class ContractRejectedError(ConsentError):
    """Contract refused a proposal; carries a reason code and an audit event."""

    def __init__(self, reason: str, message: str = "", event: Optional[Dict[str, Any]] = None):
        self.reason = reason
        self.event = event
        super().__init__(
            code=ConsentErrorCodes.CONTRACT_REJECTED,
            message=message or f"Rejected: {reason}",
            data={"reason": reason}
        )


class UnknownNodeError(ConsentError):
    """Fault injection target is not part of the network."""

    def __init__(self, node_id: str):
        super().__init__(
            code=ConsentErrorCodes.UNKNOWN_NODE,
            message=f"Unknown node '{node_id}'",
            data={"node_id": node_id}
        )


class ChainUnavailableError(ConsentError):
    """The network could not commit or answer in time."""

    def __init__(self, message: str = "chain unavailable"):
        super().__init__(
            code=ConsentErrorCodes.CHAIN_UNAVAILABLE,
            message=message
        )


class PartialCommitError(ChainUnavailableError):
    """A 3A transaction committed but its log companion never did."""

    def __init__(self, operation: str, tx_id: str):
        ConsentError.__init__(
            self,
            code=ConsentErrorCodes.PARTIAL_COMMIT,
            message=f"{operation} committed on the 3A ledger as {tx_id} but was not recorded on the log ledger",
            data={"operation": operation, "tx_id": tx_id}
        )


class DocumentNotFoundError(ConsentError):
    """Profile document not held by the resource server."""

    def __init__(self, profile_id: str):
        super().__init__(
            code=ConsentErrorCodes.DOCUMENT_NOT_FOUND,
            message=f"Profile '{profile_id}' not found",
            data={"profile_id": profile_id}
        )


class InfeasibleWorkloadError(ConsentError):
    """Benchmark workload cannot be generated."""

    def __init__(self, message: str, **details: Any):
        super().__init__(
            code=ConsentErrorCodes.INFEASIBLE_WORKLOAD,
            message=f"Infeasible workload: {message}",
            data=details or None,
        )


class ValidationError(ConsentError):
    """Input validation error."""

    def __init__(self, field: str, message: str):
        super().__init__(
            code=ConsentErrorCodes.VALIDATION_ERROR,
            message=f"Validation error for field '{field}': {message}",
            data={"field": field, "validation_error": message}
        )


class ConfigurationError(ConsentError):
    """Configuration error."""

    def __init__(self, message: str, config_file: str = None):
        super().__init__(
            code=ConsentErrorCodes.INTERNAL_ERROR,
            message=f"Configuration error: {message}",
            data={"config_file": config_file} if config_file else None
        )
