"""Append-only hash-chained channels with a derived world state."""

import json
import logging
import threading
from itertools import count
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pydantic import ValidationError as PydanticValidationError

from consent_ledger.core.encoding import length_prefixed, sha256_hex
from consent_ledger.core.errors import ChainIntegrityError, UnknownChannelError, ValidationError
from consent_ledger.models.ledger import (
    ZERO_HASH, Block, ChainVerdict, HistoryEntry, Transaction, TxStatus, WriteEntry
)
from consent_ledger.models.records import CHANNELS

logger = logging.getLogger(__name__)


def apply_writes(state: Dict[str, str], writes: Iterable[WriteEntry]) -> None:
    for write in writes:
        if write.is_delete:
            state.pop(write.key, None)
        else:
            state[write.key] = write.value


class Channel:
    """One channel: its chain, world state and per-key history.

    Commits go through a single writer; readers see the state dict that was
    current when they looked, never a half-applied block.
    """

    def __init__(self, name: str):
        self.name = name
        self._blocks: List[Block] = []
        self._state: Mapping[str, str] = MappingProxyType({})
        self._history: Dict[str, List[HistoryEntry]] = {}
        self._writer = threading.Lock()
        self._unreadable: Optional[ChainVerdict] = None
        self._unread_tail: List[str] = []

    @property
    def height(self) -> int:
        return len(self._blocks)

    @property
    def tip_hash(self) -> str:
        return self._blocks[-1].block_hash if self._blocks else ZERO_HASH

    @property
    def blocks(self) -> Tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def world_state(self) -> Mapping[str, str]:
        return self._state

    def block(self, height: int) -> Block:
        return self._blocks[height]

    @property
    def damaged(self) -> Optional[ChainVerdict]:
        """The corrupt verdict of a stored block that could not be parsed, if any."""
        return self._unreadable

    def _require_intact(self) -> None:
        if self._unreadable is not None:
            raise ChainIntegrityError(self.name, self._unreadable.height, self._unreadable.detail)

    def get_state(self, key: str) -> Optional[str]:
        return self._state.get(key)

    def history(self, key: str) -> List[HistoryEntry]:
        return list(self._history.get(key, ()))

    def append(self, txs: Sequence[Transaction]) -> Block:
        """Chain a new block onto the tip and apply its successful writes."""
        if not txs:
            raise ValidationError("txs", "a block needs at least one transaction")
        with self._writer:
            self._require_intact()
            block = Block.build(self.height, self.tip_hash, tuple(txs))
            self._apply(block)
        logger.debug("Appended block %d to %s with %d txs", block.height, self.name, len(txs))
        return block

    def commit_block(self, block: Block) -> None:
        """Commit a block produced elsewhere; it must link onto the local tip."""
        with self._writer:
            self._require_intact()
            if block.height != self.height:
                raise ChainIntegrityError(self.name, block.height, f"expected height {self.height}")
            if block.prev_hash != self.tip_hash:
                raise ChainIntegrityError(self.name, block.height, "prev_hash does not match tip")
            if not block.hash_matches():
                raise ChainIntegrityError(self.name, block.height, "block_hash mismatch")
            self._apply(block)

    def _apply(self, block: Block) -> None:
        state = dict(self._state)
        for tx in block.txs:
            if tx.status is not TxStatus.SUCCESS:
                continue
            apply_writes(state, tx.writes)
            for write in tx.writes:
                self._history.setdefault(write.key, []).append(
                    HistoryEntry(height=block.height, tx_id=tx.tx_id, value=write.value)
                )
        self._blocks.append(block)
        self._state = MappingProxyType(state)

    def verify(self) -> ChainVerdict:
        """Recompute every hash and link; report the lowest corrupt height."""
        prev_hash = ZERO_HASH
        for position, block in enumerate(self._blocks):
            if block.height != position:
                return ChainVerdict(ok=False, height=position, detail="height out of sequence")
            if block.prev_hash != prev_hash:
                return ChainVerdict(ok=False, height=position, detail="prev_hash does not link")
            if not block.hash_matches():
                return ChainVerdict(ok=False, height=position, detail="block_hash mismatch")
            prev_hash = block.block_hash
        if self._unreadable is not None:
            return self._unreadable
        return ChainVerdict(ok=True)

    def replay_state(self) -> Dict[str, str]:
        state: Dict[str, str] = {}
        for block in self._blocks:
            for tx in block.txs:
                if tx.status is TxStatus.SUCCESS:
                    apply_writes(state, tx.writes)
        return state

    def export_ndjson(self) -> str:
        lines = [block.model_dump_json() for block in self._blocks] + self._unread_tail
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_blocks(cls, name: str, blocks: Iterable[Block]) -> "Channel":
        """Load blocks as stored, without checking links; see ``verify``."""
        channel = cls(name)
        for block in blocks:
            channel._apply(block)
        return channel

    @classmethod
    def from_ndjson(cls, name: str, text: str) -> "Channel":
        """Load an exported chain.

        Loading stops at the first line that does not parse as a block; that
        height is reported corrupt by ``verify`` and the raw lines from it on
        are kept for export.
        """
        lines = [line for line in text.splitlines() if line.strip()]
        channel = cls(name)
        for position, line in enumerate(lines):
            try:
                block = Block.model_validate_json(line)
            except PydanticValidationError as e:
                detail = f"unreadable block: {e.error_count()} schema error(s)"
                logger.warning("Channel %s: block %d does not parse", name, position)
                channel._unreadable = ChainVerdict(ok=False, height=position, detail=detail)
                channel._unread_tail = lines[position:]
                break
            channel._apply(block)
        return channel


class Ledger:
    """The pair of channels held by one node."""

    def __init__(self, channel_names: Sequence[str] = CHANNELS):
        self._channels: Dict[str, Channel] = {name: Channel(name) for name in channel_names}
        self._staged = count()

    @property
    def channel_names(self) -> Tuple[str, ...]:
        return tuple(self._channels)

    def channel(self, name: str) -> Channel:
        try:
            return self._channels[name]
        except KeyError:
            raise UnknownChannelError(name)

    def put_state(
        self,
        channel: str,
        key: str,
        value: str,
        submitter: str,
        submitted_at: int,
        contract: str = "ledger",
        function: str = "PutState",
    ) -> Transaction:
        """Stage a single write as a transaction; it takes effect on append_block."""
        self.channel(channel)
        tx_id = sha256_hex(length_prefixed(
            [channel, key, value, submitter, submitted_at, next(self._staged)]
        ))
        return Transaction(
            tx_id=tx_id,
            channel=channel,
            contract=contract,
            function=function,
            args=(key, value),
            writes=(WriteEntry(key=key, value=value),),
            submitter=submitter,
            submitted_at=submitted_at,
        )

    def get_state(self, channel: str, key: str) -> Optional[str]:
        return self.channel(channel).get_state(key)

    def append_block(self, channel: str, txs: Sequence[Transaction]) -> Block:
        return self.channel(channel).append(txs)

    def commit_block(self, channel: str, block: Block) -> None:
        self.channel(channel).commit_block(block)

    def require_intact(self) -> None:
        """Raise ChainIntegrityError when a channel was loaded with an unreadable block."""
        for name, channel in self._channels.items():
            verdict = channel.damaged
            if verdict is not None:
                raise ChainIntegrityError(name, verdict.height, verdict.detail)

    def verify_chain(self, channel: str) -> ChainVerdict:
        verdict = self.channel(channel).verify()
        if not verdict.ok:
            logger.error("Chain verification failed on %s at height %s: %s", channel, verdict.height, verdict.detail)
        return verdict

    def history(self, channel: str, key: str) -> List[HistoryEntry]:
        return self.channel(channel).history(key)

    def export_chain(self, channel: str) -> str:
        return self.channel(channel).export_ndjson()

    def import_chain(self, channel: str, text: str) -> None:
        """Replace a channel with an exported chain, rebuilding state by replay."""
        self.channel(channel)
        self._channels[channel] = Channel.from_ndjson(channel, text)

    def heights(self) -> Dict[str, int]:
        return {name: channel.height for name, channel in self._channels.items()}

    def snapshot(self) -> Dict[str, List[dict]]:
        """Plain-data view of every channel, for equality checks and persistence."""
        return {
            name: [json.loads(block.model_dump_json()) for block in channel.blocks]
            for name, channel in self._channels.items()
        }
