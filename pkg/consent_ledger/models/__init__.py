"""Domain models for identities, ledgers, contracts, the network and the profile store."""

from .identity import ComplexIdentity, IdentityView, KeyFixture, KeyPair, KeyPurpose, Role
from .ledger import Block, Transaction, TxStatus
from .records import AccessPolicy, AuditEntry, DatasetRef, LogRecord, Operation, ThreeARecord
from .profile import ApiRequest, ApiResponse, ProfileDocument, ProfileRow

__all__ = [
    "ComplexIdentity", "IdentityView", "KeyFixture", "KeyPair", "KeyPurpose", "Role",
    "Block", "Transaction", "TxStatus",
    "AccessPolicy", "AuditEntry", "DatasetRef", "LogRecord", "Operation", "ThreeARecord",
    "ApiRequest", "ApiResponse", "ProfileDocument", "ProfileRow",
]
