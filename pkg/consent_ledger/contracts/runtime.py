"""Minimal contract runtime: a state stub, a function registry and execution."""

import logging
from typing import Any, Callable, ClassVar, Dict, List, Optional, Tuple

from pydantic import ValidationError as PydanticValidationError

from consent_ledger.core.encoding import canonical_json, sha256_hex
from consent_ledger.core.errors import ContractRejectedError
from consent_ledger.ledger.chain import Ledger
from consent_ledger.models.ledger import ReadEntry, TxStatus, WriteEntry
from consent_ledger.models.network import ExecutionResult, Proposal
from consent_ledger.models.records import nonce_key

logger = logging.getLogger(__name__)


class ContractStub:
    """State access for one execution against one replica.

    Reads see committed state only and are recorded with a digest of the
    value observed. Writes are staged until the transaction commits.
    """

    def __init__(
        self,
        ledger: Ledger,
        channel: str,
        tx_id: str,
        timestamp_ms: int,
        submitter: str,
        read_only: bool = False,
    ):
        self._ledger = ledger
        self.channel = channel
        self.tx_id = tx_id
        self.tx_timestamp = timestamp_ms
        self.submitter = submitter
        self.read_only = read_only
        self._reads: Dict[Tuple[str, str], ReadEntry] = {}
        self._writes: Dict[str, Optional[str]] = {}

    def _record_read(self, channel: str, key: str, value: Optional[str]) -> None:
        if (channel, key) not in self._reads:
            digest = sha256_hex(value) if value is not None else ""
            self._reads[(channel, key)] = ReadEntry(channel=channel, key=key, digest=digest)

    def get_state(self, key: str) -> Optional[str]:
        value = self._ledger.get_state(self.channel, key)
        self._record_read(self.channel, key, value)
        return value

    def get_cross_channel_state(self, channel: str, key: str) -> Optional[str]:
        """Read-only access to another channel on the same replica."""
        value = self._ledger.get_state(channel, key)
        self._record_read(channel, key, value)
        return value

    def get_state_by_prefix(self, prefix: str) -> List[Tuple[str, str]]:
        state = self._ledger.channel(self.channel).world_state
        matches = sorted((key, value) for key, value in state.items() if key.startswith(prefix))
        for key, value in matches:
            self._record_read(self.channel, key, value)
        return matches

    def spend_nonce(self, signer: str, nonce: str) -> bool:
        """Mark ``nonce`` spent for ``signer``; False when it already was."""
        key = nonce_key(signer, nonce)
        if self.get_state(key) is not None:
            return False
        self.put_state(key, self.tx_id)
        return True

    def put_state(self, key: str, value: str) -> None:
        if self.read_only:
            raise ContractRejectedError("read_only", "write attempted in a read-only call")
        self._writes[key] = value

    def del_state(self, key: str) -> None:
        if self.read_only:
            raise ContractRejectedError("read_only", "delete attempted in a read-only call")
        self._writes[key] = None

    @property
    def reads(self) -> Tuple[ReadEntry, ...]:
        return tuple(self._reads.values())

    @property
    def writes(self) -> Tuple[WriteEntry, ...]:
        return tuple(WriteEntry(key=key, value=value) for key, value in self._writes.items())


def contract_function(name: str, read_only: bool = False) -> Callable:
    """Expose a contract method under ``name``."""

    def decorator(func: Callable) -> Callable:
        func._contract_function = (name, read_only)
        return func

    return decorator


class Contract:
    """Base class; subclasses name their channel and decorate functions."""

    name: ClassVar[str]
    channel: ClassVar[str]
    functions: ClassVar[Dict[str, Tuple[str, bool]]] = {}

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        functions: Dict[str, Tuple[str, bool]] = {}
        for base in reversed(cls.__mro__):
            for attr, member in vars(base).items():
                spec = getattr(member, "_contract_function", None)
                if spec:
                    functions[spec[0]] = (attr, spec[1])
        cls.functions = functions

    def is_read_only(self, function: str) -> bool:
        return self.functions.get(function, ("", False))[1]

    def invoke(self, stub: ContractStub, function: str, args: Tuple[str, ...]) -> ExecutionResult:
        """Run one function; rejections become rejected results, never exceptions."""
        entry = self.functions.get(function)
        try:
            if entry is None:
                raise ContractRejectedError("unknown_function", f"{self.name} has no function {function}")
            response = getattr(self, entry[0])(stub, *args)
        except ContractRejectedError as e:
            body: Dict[str, Any] = {"verdict": "rejected", "reason": e.reason}
            if e.event is not None:
                body["event"] = e.event
            return ExecutionResult(status=TxStatus.REJECTED, reads=stub.reads, response=canonical_json(body))
        except (TypeError, ValueError, KeyError, PydanticValidationError) as e:
            logger.debug("%s.%s rejected malformed arguments: %s", self.name, function, e)
            body = {"verdict": "rejected", "reason": "bad_arguments"}
            return ExecutionResult(status=TxStatus.REJECTED, reads=stub.reads, response=canonical_json(body))

        return ExecutionResult(
            status=TxStatus.SUCCESS,
            reads=stub.reads,
            writes=stub.writes,
            response=canonical_json(response),
        )


class ContractRegistry:
    """Deployed contracts by name."""

    def __init__(self, contracts: Optional[List[Contract]] = None):
        self._contracts: Dict[str, Contract] = {}
        for contract in contracts or []:
            self.deploy(contract)

    def deploy(self, contract: Contract) -> None:
        self._contracts[contract.name] = contract

    def get(self, name: str) -> Contract:
        return self._contracts[name]

    def channel_of(self, name: str) -> str:
        return self._contracts[name].channel

    def execute(self, ledger: Ledger, proposal: Proposal) -> ExecutionResult:
        """Execute a proposal against one replica's committed state."""
        stub = ContractStub(
            ledger,
            proposal.channel,
            proposal.tx_id,
            proposal.submitted_at,
            proposal.client_pk,
            read_only=proposal.read_only,
        )
        contract = self._contracts.get(proposal.contract)
        if contract is None or contract.channel != proposal.channel:
            body = {"verdict": "rejected", "reason": "unknown_contract"}
            return ExecutionResult(status=TxStatus.REJECTED, response=canonical_json(body))
        return contract.invoke(stub, proposal.function, proposal.args)
