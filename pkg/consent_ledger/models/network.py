"""Proposals, endorsements and per-transaction traces of the simulated network."""

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel

from consent_ledger.core.encoding import length_prefixed, sha256_hex
from consent_ledger.models.ledger import ReadEntry, TxStatus, WriteEntry


class TxKind(str, Enum):
    READ = "READ"
    WRITE = "WRITE"

    def __str__(self):
        return self.value


class Verdict(str, Enum):
    """What the submitting client learns about its transaction."""
    SUCCESS = "success"
    REJECTED = "rejected"
    TIMEOUT = "timeout"

    def __str__(self):
        return self.value


class FaultKind(str, Enum):
    CRASH = "crash"
    RECOVER = "recover"
    CORRUPT = "corrupt"

    def __str__(self):
        return self.value


class Proposal(BaseModel):
    """A signed request to execute one contract function."""

    channel: str
    contract: str
    function: str
    args: Tuple[str, ...] = ()
    client_pk: str
    nonce: str
    submitted_at: int
    read_only: bool = False
    signature: str = ""

    model_config = {"frozen": True}

    def signing_bytes(self) -> bytes:
        return length_prefixed(
            [self.channel, self.contract, self.function, str(len(self.args)), *self.args,
             self.client_pk, self.nonce, self.submitted_at, self.read_only]
        )

    @property
    def tx_id(self) -> str:
        return sha256_hex(self.signing_bytes())

    @property
    def kind(self) -> TxKind:
        return TxKind.READ if self.read_only else TxKind.WRITE


class ExecutionResult(BaseModel):
    """Read/write set and response from executing a proposal on one replica."""

    status: TxStatus
    reads: Tuple[ReadEntry, ...] = ()
    writes: Tuple[WriteEntry, ...] = ()
    response: str = ""

    model_config = {"frozen": True}

    def digest(self) -> str:
        parts: List[Any] = [self.status.value, str(len(self.reads))]
        for read in self.reads:
            parts += [read.channel, read.key, read.digest]
        parts.append(str(len(self.writes)))
        for write in self.writes:
            parts += [write.key, "D" if write.is_delete else "P", write.value or ""]
        parts.append(self.response)
        return sha256_hex(length_prefixed(parts))


class Endorsement(BaseModel):
    """One peer's (optionally signed) execution result."""

    peer_id: str
    peer_pk: str
    digest: str = ""
    signature: str = ""
    result: Optional[ExecutionResult] = None
    refused: bool = False

    model_config = {"frozen": True}


class TxOutcome(BaseModel):
    """Client-visible result of one submitted proposal."""

    tx_id: str
    verdict: Verdict
    status: Optional[TxStatus] = None
    response: str = ""
    reason: Optional[str] = None
    height: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.verdict is Verdict.SUCCESS and self.status is TxStatus.SUCCESS


@dataclass
class TxTrace:
    """Timing of one transaction in simulated milliseconds."""

    tx_id: str
    kind: TxKind
    submitted_at: float
    completed_at: Optional[float] = None
    verdict: Optional[Verdict] = None
    status: Optional[TxStatus] = None

    @property
    def latency_ms(self) -> Optional[float]:
        if self.completed_at is None:
            return None
        return self.completed_at - self.submitted_at


@dataclass(frozen=True)
class SimEvent:
    at: float
    kind: str
    payload: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SimReport:
    """Per-transaction verdicts and commit times of one simulated run."""

    traces: List[TxTrace]
    events: List[SimEvent] = field(default_factory=list)
    block_counts: Dict[str, int] = field(default_factory=dict)

    def verdicts(self) -> List[Optional[Verdict]]:
        return [trace.verdict for trace in self.traces]

    def count(self, verdict: Verdict) -> int:
        return sum(1 for trace in self.traces if trace.verdict is verdict)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["tx_id", "kind", "submitted_at", "committed_at", "verdict"])
        for trace in self.traces:
            writer.writerow([
                trace.tx_id,
                trace.kind.value,
                f"{trace.submitted_at:.3f}",
                "" if trace.completed_at is None else f"{trace.completed_at:.3f}",
                trace.verdict.value if trace.verdict else "",
            ])
        return buffer.getvalue()
