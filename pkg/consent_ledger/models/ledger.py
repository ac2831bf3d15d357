"""Immutable transaction and block models."""

from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from consent_ledger.core.encoding import length_prefixed, sha256

ZERO_HASH = "00" * 32


class TxStatus(str, Enum):
    SUCCESS = "success"
    REJECTED = "rejected"

    def __str__(self):
        return self.value


class ReadEntry(BaseModel):
    """A key read during execution and the digest of the value observed."""

    channel: str
    key: str
    digest: str = Field(default="", description="sha256 hex of the value, empty when absent")

    model_config = {"frozen": True}


class WriteEntry(BaseModel):
    """A staged write; ``value`` None deletes the key."""

    key: str
    value: Optional[str] = None

    model_config = {"frozen": True}

    @property
    def is_delete(self) -> bool:
        return self.value is None


class Transaction(BaseModel):
    """A contract invocation as recorded on a channel."""

    tx_id: str
    channel: str
    contract: str
    function: str
    args: Tuple[str, ...] = ()
    reads: Tuple[ReadEntry, ...] = ()
    writes: Tuple[WriteEntry, ...] = ()
    submitter: str
    submitted_at: int
    status: TxStatus = TxStatus.SUCCESS
    response: str = ""

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _rejected_carries_no_writes(self) -> "Transaction":
        if self.status is TxStatus.REJECTED and self.writes:
            raise ValueError("rejected transactions carry empty writes")
        return self

    def canonical_parts(self) -> Tuple[str, ...]:
        parts = [
            self.tx_id, self.channel, self.contract, self.function,
            str(len(self.args)), *self.args,
            str(len(self.reads)),
        ]
        for read in self.reads:
            parts += [read.channel, read.key, read.digest]
        parts.append(str(len(self.writes)))
        for write in self.writes:
            parts += [write.key, "D" if write.is_delete else "P", write.value or ""]
        parts += [self.submitter, str(self.submitted_at), self.status.value, self.response]
        return tuple(parts)

    def canonical_bytes(self) -> bytes:
        return length_prefixed(self.canonical_parts())


class Block(BaseModel):
    """A hash-chained batch of transactions."""

    height: int = Field(ge=0)
    prev_hash: str
    txs: Tuple[Transaction, ...]
    block_hash: str

    model_config = {"frozen": True}

    @staticmethod
    def compute_hash(height: int, prev_hash: str, txs: Tuple[Transaction, ...]) -> str:
        body = length_prefixed(
            [str(height), prev_hash, str(len(txs))] + [tx.canonical_bytes() for tx in txs]
        )
        return sha256(body).hex()

    @classmethod
    def build(cls, height: int, prev_hash: str, txs: Tuple[Transaction, ...]) -> "Block":
        txs = tuple(txs)
        return cls(height=height, prev_hash=prev_hash, txs=txs, block_hash=cls.compute_hash(height, prev_hash, txs))

    def hash_matches(self) -> bool:
        return self.block_hash == self.compute_hash(self.height, self.prev_hash, self.txs)


class ChainVerdict(BaseModel):
    """Result of walking a chain: ok, or the lowest corrupt height."""

    ok: bool
    height: Optional[int] = None
    detail: Optional[str] = None

    def __str__(self):
        return "ok" if self.ok else f"corrupt({self.height})"


class HistoryEntry(BaseModel):
    height: int
    tx_id: str
    value: Optional[str]

    model_config = {"frozen": True}
