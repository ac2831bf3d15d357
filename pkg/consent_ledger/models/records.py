"""World-state records of the two contracts and their composite keys."""

import json
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, Field

from consent_ledger.core.encoding import canonical_json, sha256_hex

KEY_SEPARATOR = "~"
THREE_A_PREFIX = "3A"
LOG_PREFIX = "log"
TOKEN_PREFIX = "tok"
NONCE_PREFIX = "nonce"

THREE_A_CHANNEL = "3A_channel"
LOG_CHANNEL = "log_channel"
CHANNELS = (THREE_A_CHANNEL, LOG_CHANNEL)

THREE_A_CONTRACT = "3A_cc"
LOG_CONTRACT = "log_cc"

_HEX = set("0123456789abcdef")


class Operation(str, Enum):
    """CRUD operations an access policy grants."""
    CREATE = "create"
    READ = "read"
    UPDATE = "update"
    DELETE = "delete"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, value: str) -> "Operation":
        return cls(str(value).strip().lower())


ALL_OPERATIONS: Tuple[Operation, ...] = tuple(Operation)
WRITE_OPERATIONS: FrozenSet[Operation] = frozenset({Operation.CREATE, Operation.UPDATE, Operation.DELETE})
DEFAULT_DC_OPERATIONS: Tuple[Operation, ...] = (Operation.CREATE, Operation.READ, Operation.UPDATE)


class RecordStatus(str, Enum):
    APPROVED = "approved"
    REJECTED = "rejected"

    def __str__(self):
        return self.value


class ReasonCode(str, Enum):
    """Why a validation, access or erasure request was refused."""
    SIGNATURE = "signature"
    UNKNOWN_TOKEN = "unknown_token"
    NOT_HOLDER = "not_holder"
    SCOPE_MISS = "scope_miss"
    EXPIRED = "expired"
    NOT_APPROVED = "not_approved"
    POLICY = "policy"
    UNKNOWN = "unknown"
    NOT_OWNER = "not_owner"
    REPLAYED_NONCE = "replayed_nonce"

    def __str__(self):
        return self.value


def _composite(prefix: str, parts: Tuple[str, ...]) -> str:
    for part in parts:
        if not part or set(part) - _HEX:
            raise ValueError(f"key component must be lowercase hex: {part!r}")
    return KEY_SEPARATOR.join((prefix,) + parts)


def three_a_key(pk_ds: str, pk_dc: str, pk_enc: str) -> str:
    """State key of a dataset record on the 3A ledger."""
    return _composite(THREE_A_PREFIX, (pk_ds, pk_dc, pk_enc))


def log_key(pk_ds: str, pk_dc: str, pk_dp: str, pk_enc: str) -> str:
    """State key of a processor record on the log ledger."""
    return _composite(LOG_PREFIX, (pk_ds, pk_dc, pk_dp, pk_enc))


def token_key(access_token: str) -> str:
    """Secondary index entry mapping a token to its log record key."""
    return _composite(TOKEN_PREFIX, (access_token,))


def nonce_key(signer: str, nonce: str) -> str:
    """Marker of a nonce already spent by ``signer`` on this channel."""
    return _composite(NONCE_PREFIX, (signer, sha256_hex(nonce)))


def split_key(key: str) -> Tuple[str, ...]:
    prefix, *parts = key.split(KEY_SEPARATOR)
    return tuple(parts)


class DatasetRef(BaseModel):
    """The externally observable part of a composite identity."""

    pk_ds: str
    pk_dc: str
    pk_enc: str

    model_config = {"frozen": True}

    @property
    def key(self) -> str:
        return three_a_key(self.pk_ds, self.pk_dc, self.pk_enc)

    def log_key(self, pk_dp: str) -> str:
        return log_key(self.pk_ds, self.pk_dc, pk_dp, self.pk_enc)

    @classmethod
    def from_key(cls, key: str) -> "DatasetRef":
        pk_ds, pk_dc, pk_enc = split_key(key)
        return cls(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)


class AccessPolicy(BaseModel):
    """Access control list: operation -> set of public keys."""

    create: List[str] = Field(default_factory=list)
    read: List[str] = Field(default_factory=list)
    update: List[str] = Field(default_factory=list)
    delete: List[str] = Field(default_factory=list)

    def members(self, op: Operation) -> List[str]:
        return getattr(self, Operation(op).value)

    def allows(self, pk: str, op: Operation) -> bool:
        return pk in self.members(op)

    def with_member(self, op: Operation, pk: str) -> "AccessPolicy":
        members = sorted(set(self.members(op)) | {pk})
        return self.model_copy(update={Operation(op).value: members})

    def without_member(self, op: Operation, pk: str) -> "AccessPolicy":
        members = sorted(set(self.members(op)) - {pk})
        return self.model_copy(update={Operation(op).value: members})


class ThreeARecord(BaseModel):
    """One dataset entry of the 3A ledger."""

    owner: str
    controller: str
    pk_enc: str
    en_pointer: str = ""
    policy: AccessPolicy
    hash: str = ""
    timestamp: int = 0

    def to_state(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def from_state(cls, value: str) -> "ThreeARecord":
        return cls.model_validate(json.loads(value))

    @property
    def dataset(self) -> DatasetRef:
        return DatasetRef(pk_ds=self.owner, pk_dc=self.controller, pk_enc=self.pk_enc)


class LogRecord(BaseModel):
    """One processor entry of the log ledger."""

    owner: str
    controller: str
    processor: str
    pk_enc: str
    access_token: str
    issued_at: int
    status: RecordStatus = RecordStatus.APPROVED
    operation: Optional[Operation] = None
    scope: List[Operation] = Field(default_factory=list)
    expires_in: float
    refresh_count: int = Field(default=1, ge=0)

    def to_state(self) -> str:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def from_state(cls, value: str) -> "LogRecord":
        return cls.model_validate(json.loads(value))

    @property
    def key(self) -> str:
        return log_key(self.owner, self.controller, self.processor, self.pk_enc)

    @property
    def dataset_key(self) -> str:
        return three_a_key(self.owner, self.controller, self.pk_enc)

    def holders(self) -> Tuple[str, str, str]:
        return (self.owner, self.controller, self.processor)


class ValidationVerdict(BaseModel):
    """Outcome of a token validation."""

    outcome: str
    reason: Optional[str] = Field(None, description="A ReasonCode value, or a network-level reason")
    dataset_key: Optional[str] = None
    tx_id: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.outcome == "accepted"

    @classmethod
    def accept(cls, dataset_key: Optional[str] = None, tx_id: Optional[str] = None) -> "ValidationVerdict":
        return cls(outcome="accepted", dataset_key=dataset_key, tx_id=tx_id)

    @classmethod
    def reject(cls, reason: str, tx_id: Optional[str] = None) -> "ValidationVerdict":
        return cls(outcome="rejected", reason=reason, tx_id=tx_id)


class AuditEntry(BaseModel):
    """Who did what, when, to which dataset, with what verdict."""

    who: str
    what: str
    when: int
    which: str
    verdict: str
    scope: List[str] = Field(default_factory=list)
    reason: Optional[str] = None
    owner: Optional[str] = None
    controller: Optional[str] = None
    processor: Optional[str] = None
    tx_id: str
    height: int

    def export_line(self) -> str:
        return canonical_json({
            "who": self.who,
            "what": self.what,
            "when": self.when,
            "which": self.which,
            "verdict": self.verdict,
            "why": self.scope,
        })


class ConsentReceipt(BaseModel):
    """What a party learns after a consent operation and its log entry commit."""

    operation: str
    accepted: bool
    reason: Optional[str] = None
    dataset_key: Optional[str] = None
    access_token: Optional[str] = None
    record: Optional[ThreeARecord] = None
    tx_id: Optional[str] = None
    log_tx_id: Optional[str] = None

    @property
    def dataset(self) -> Optional[DatasetRef]:
        return DatasetRef.from_key(self.dataset_key) if self.dataset_key else None


class AccessGrant(BaseModel):
    """Outcome of a data access request: the encrypted pointer and token, or a reason."""

    accepted: bool
    reason: Optional[str] = None
    en_pointer: Optional[str] = None
    access_token: Optional[str] = None
    tx_id: Optional[str] = None
