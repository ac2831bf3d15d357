"""Discrete-event simulation of the execute-order-validate transaction flow.

Clients fan a signed proposal out to every live peer. Each peer queues it
on its FIFO work queue, executes the contract against its own replica and
returns a (possibly signed) endorsement. Read-only proposals finish once a
quorum of matching endorsements is in. Writes then go to the ordering
leader, which validates read sets against the sequencer replica, cuts a
block at ``batch_size`` or ``batch_timeout_ms`` and delivers it to every
peer. A write counts as committed once every live peer has appended it.

Simulated time is in milliseconds; ``env.now == 0`` maps to the clock
origin handed to the network.
"""

import json
import math
import logging
import random
from dataclasses import dataclass, field
from itertools import count
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import simpy

from consent_ledger.contracts.runtime import ContractRegistry
from consent_ledger.core.config import NetworkConfig
from consent_ledger.core.crypto import generate_keypair, sign, verify
from consent_ledger.core.encoding import canonical_json, sha256_hex
from consent_ledger.core.errors import UnknownNodeError
from consent_ledger.ledger.chain import Ledger
from consent_ledger.models.identity import KeyPair
from consent_ledger.models.ledger import Block, ReadEntry, Transaction, TxStatus
from consent_ledger.models.network import (
    Endorsement, ExecutionResult, FaultKind, Proposal, SimEvent, SimReport,
    TxKind, TxOutcome, TxTrace, Verdict
)
from consent_ledger.network.monitor import MonitoredResource

logger = logging.getLogger(__name__)


class SimClock:
    """Milliseconds since epoch derived from simulated time."""

    def __init__(self, env: simpy.Environment, origin_ms: int = 0):
        self.env = env
        self.origin_ms = origin_ms

    def now_ms(self) -> int:
        return self.origin_ms + int(self.env.now)


@dataclass
class Peer:
    node_id: str
    index: int
    keypair: KeyPair
    ledger: Ledger
    resource: MonitoredResource
    deliveries: simpy.Store
    hop_rng: random.Random
    delivery_rng: random.Random
    alive: bool = True
    epoch: int = 0
    corrupt: bool = False
    buffer: Dict[str, Dict[int, Block]] = field(default_factory=dict)


@dataclass
class OrderingNode:
    node_id: str
    index: int
    resource: MonitoredResource
    alive: bool = True


@dataclass
class _Pending:
    proposal: Proposal
    result: ExecutionResult
    done: simpy.Event
    trace: TxTrace


@dataclass
class _BlockTracker:
    channel: str
    block: Block
    required: Set[str]
    waiters: List[_Pending]
    committed: Set[str] = field(default_factory=set)
    finished: bool = False


@dataclass
class TxHandle:
    """A submitted transaction: the client's verdict process and its trace."""

    trace: TxTrace
    process: simpy.Process
    done: simpy.Event


@dataclass(frozen=True)
class ScriptedTx:
    """One proposal of a traffic script, submitted at ``at_ms``."""

    at_ms: float
    signer: KeyPair
    contract: str
    function: str
    args: Tuple[str, ...]
    read_only: bool = False


class Network:
    """Peers, ordering nodes and the sequencer replica of one deployment."""

    def __init__(self, config: NetworkConfig, registry: ContractRegistry, origin_ms: int = 0):
        self.config = config
        self.registry = registry
        self.env = simpy.Environment()
        self.clock = SimClock(self.env, origin_ms)
        self.sequencer = Ledger()
        seed = config.seed

        self.peers: List[Peer] = []
        for index in range(config.peer_count):
            peer = Peer(
                node_id=f"peer{index}",
                index=index,
                keypair=generate_keypair(),
                ledger=Ledger(),
                resource=MonitoredResource(self.env),
                deliveries=simpy.Store(self.env),
                hop_rng=random.Random(f"{seed}:hop:{index}"),
                delivery_rng=random.Random(f"{seed}:deliver:{index}"),
            )
            peer.buffer = {name: {} for name in peer.ledger.channel_names}
            self.peers.append(peer)
            self.env.process(self._commit_loop(peer))

        self.osns: List[OrderingNode] = [
            OrderingNode(node_id=f"osn{index}", index=index, resource=MonitoredResource(self.env))
            for index in range(config.osn_count)
        ]
        self._osn_rng = random.Random(f"{seed}:osn")
        self._nonces = count()
        self._batches: Dict[str, List[_Pending]] = {name: [] for name in self.sequencer.channel_names}
        self._batch_epoch: Dict[str, int] = {name: 0 for name in self.sequencer.channel_names}
        self._trackers: Dict[Tuple[str, int], _BlockTracker] = {}
        self._ordered_ids: Set[str] = set()
        self.traces: List[TxTrace] = []
        self.events: List[SimEvent] = []

    # -- topology ------------------------------------------------------------

    def node(self, node_id: str):
        for node in [*self.peers, *self.osns]:
            if node.node_id == node_id:
                return node
        raise UnknownNodeError(node_id)

    def live_peers(self) -> List[Peer]:
        return [peer for peer in self.peers if peer.alive]

    def reference_ledger(self) -> Ledger:
        """Ledger of the first live peer, or the sequencer when none is up."""
        live = self.live_peers()
        return live[0].ledger if live else self.sequencer

    def load_chains(self, exports: Dict[str, str]) -> None:
        """Install exported chains on the sequencer and every peer."""
        for channel, text in exports.items():
            self.sequencer.import_chain(channel, text)
            for peer in self.peers:
                peer.ledger.import_chain(channel, text)

    def quorum(self, live: int) -> int:
        if self.config.endorsement_quorum is None:
            return live
        return min(self.config.endorsement_quorum, live)

    def _note(self, kind: str, **payload) -> None:
        self.events.append(SimEvent(at=self.env.now, kind=kind, payload=payload))

    def _hop(self, rng: random.Random) -> float:
        jitter = rng.uniform(-self.config.hop_jitter_ms, self.config.hop_jitter_ms)
        return max(0.0, self.config.hop_latency_ms + jitter)

    # -- clients -------------------------------------------------------------

    def propose(
        self,
        signer: KeyPair,
        contract: str,
        function: str,
        args: Sequence[str],
        read_only: bool = False,
    ) -> Proposal:
        """Build and sign a proposal stamped with the current time."""
        unsigned = Proposal(
            channel=self.registry.channel_of(contract),
            contract=contract,
            function=function,
            args=tuple(args),
            client_pk=signer.public_hex,
            nonce=f"{next(self._nonces):016x}",
            submitted_at=self.clock.now_ms(),
            read_only=read_only,
        )
        signature = sign(signer, unsigned.signing_bytes())
        return unsigned.model_copy(update={"signature": signature.hex})

    def submit(self, proposal: Proposal, deadline_ms: Optional[float] = None) -> TxHandle:
        """Start the pipeline for ``proposal``; the handle's process yields a TxOutcome."""
        trace = TxTrace(tx_id=proposal.tx_id, kind=proposal.kind, submitted_at=self.env.now)
        self.traces.append(trace)
        done = self.env.event()
        self._note("proposal_arrival", tx_id=proposal.tx_id, tx_kind=proposal.kind.value)
        process = self.env.process(self._client(proposal, trace, done, deadline_ms))
        return TxHandle(trace=trace, process=process, done=done)

    def call(self, proposal: Proposal) -> TxOutcome:
        """Submit and run the simulation until the client has its verdict."""
        handle = self.submit(proposal)
        return self.env.run(until=handle.process)

    def advance(self, ms: float) -> None:
        if ms > 0:
            self.env.run(until=self.env.now + ms)

    def advance_to_ms(self, timestamp_ms: int) -> None:
        """Run until the clock reads ``timestamp_ms``."""
        self.advance(timestamp_ms - self.clock.now_ms())

    def _client(self, proposal: Proposal, trace: TxTrace, done: simpy.Event, deadline_ms: Optional[float]):
        self.env.process(self._pipeline(proposal, trace, done))
        if deadline_ms is None:
            deadline_ms = self.env.now + self.config.client_timeout_ms
        if math.isinf(deadline_ms):
            yield done
        else:
            yield done | self.env.timeout(max(0.0, deadline_ms - self.env.now))

        if done.triggered:
            outcome = done.value
        else:
            outcome = TxOutcome(tx_id=proposal.tx_id, verdict=Verdict.TIMEOUT, reason="timeout")
            self._note("client_timeout", tx_id=proposal.tx_id)
        trace.verdict = outcome.verdict
        return outcome

    def _finish(self, done: simpy.Event, trace: TxTrace, outcome: TxOutcome) -> None:
        trace.completed_at = self.env.now
        trace.status = outcome.status
        if not done.triggered:
            done.succeed(outcome)

    # -- endorsement ---------------------------------------------------------

    def _pipeline(self, proposal: Proposal, trace: TxTrace, done: simpy.Event):
        live = self.live_peers()
        if not live:
            self._note("no_live_peers", tx_id=proposal.tx_id)
            return
        needed = self.quorum(len(live))
        gate = self.env.event()
        collected: List[Endorsement] = []
        finished = [0]
        for peer in live:
            out_hop, back_hop = self._hop(peer.hop_rng), self._hop(peer.hop_rng)
            self.env.process(
                self._endorse(peer, proposal, out_hop, back_hop, collected, gate, needed, len(live), finished)
            )
        endorsements = yield gate
        if endorsements is None:
            # Quorum unreachable: the client's watchdog reports a timeout.
            return

        rejection = self._check_endorsements(endorsements)
        if rejection is not None:
            self._note("endorsement_rejected", tx_id=proposal.tx_id, reason=rejection)
            self._finish(done, trace, TxOutcome(
                tx_id=proposal.tx_id, verdict=Verdict.REJECTED, reason=rejection
            ))
            return

        result = endorsements[0].result
        if proposal.read_only:
            verdict = Verdict.SUCCESS if result.status is TxStatus.SUCCESS else Verdict.REJECTED
            self._finish(done, trace, TxOutcome(
                tx_id=proposal.tx_id, verdict=verdict, status=result.status,
                response=result.response, reason=_reason(result.response),
            ))
            return

        yield from self._order(_Pending(proposal, result, done, trace))

    def _endorse(self, peer: Peer, proposal: Proposal, out_hop: float, back_hop: float,
                 collected: List[Endorsement], gate: simpy.Event, needed: int, fanout: int,
                 finished: List[int]):
        yield self.env.timeout(out_hop)
        endorsement = None
        if peer.alive:
            epoch = peer.epoch
            with peer.resource.request() as request:
                yield request
                yield self.env.timeout(self.config.endorsement_service_ms)
            if peer.alive and peer.epoch == epoch:
                endorsement = self._execute(peer, proposal)
                self._note("endorsement_done", tx_id=proposal.tx_id, peer=peer.node_id)
        if endorsement is not None:
            yield self.env.timeout(back_hop)
            collected.append(endorsement)
        finished[0] += 1
        if not gate.triggered:
            if len(collected) >= needed:
                gate.succeed(list(collected))
            elif finished[0] == fanout:
                gate.succeed(None)

    def _execute(self, peer: Peer, proposal: Proposal) -> Endorsement:
        if not verify(proposal.client_pk, proposal.signing_bytes(), proposal.signature):
            return Endorsement(peer_id=peer.node_id, peer_pk=peer.keypair.public_hex, refused=True)
        result = self.registry.execute(peer.ledger, proposal)
        digest = result.digest()
        if peer.corrupt:
            digest = sha256_hex(digest + peer.node_id)
        signature = sign(peer.keypair, digest).hex if self.config.sign_endorsements else ""
        return Endorsement(
            peer_id=peer.node_id, peer_pk=peer.keypair.public_hex,
            digest=digest, signature=signature, result=result,
        )

    def _check_endorsements(self, endorsements: List[Endorsement]) -> Optional[str]:
        if any(e.refused for e in endorsements):
            return "client_signature"
        if len({e.digest for e in endorsements}) != 1:
            return "endorsement_mismatch"
        if self.config.sign_endorsements:
            for e in endorsements:
                if not verify(e.peer_pk, e.digest, e.signature):
                    return "endorsement_signature"
        if endorsements[0].result.digest() != endorsements[0].digest:
            return "endorsement_mismatch"
        return None

    # -- ordering ------------------------------------------------------------

    def leader(self) -> Optional[OrderingNode]:
        """Lowest-index live OSN, provided a majority of OSNs is up."""
        live = [osn for osn in self.osns if osn.alive]
        if len(live) * 2 <= len(self.osns):
            return None
        return live[0]

    def _order(self, pending: _Pending):
        yield self.env.timeout(self._hop(self._osn_rng))
        while True:
            leader = self.leader()
            if leader is None:
                self._note("ordering_stalled", tx_id=pending.proposal.tx_id)
                return
            with leader.resource.request() as request:
                yield request
                yield self.env.timeout(self.config.osn_service_ms)
            if leader.alive:
                break
            # Leader crashed mid-service: resend to its successor.
            yield self.env.timeout(self._hop(self._osn_rng))

        channel = pending.proposal.channel
        batch = self._batches[channel]
        batch.append(pending)
        if len(batch) >= self.config.batch_size:
            self._cut(channel)
        elif len(batch) == 1:
            self.env.process(self._batch_timer(channel, self._batch_epoch[channel]))

    def _batch_timer(self, channel: str, epoch: int):
        yield self.env.timeout(self.config.batch_timeout_ms)
        if self._batch_epoch[channel] == epoch and self._batches[channel]:
            self._cut(channel)

    def _cut(self, channel: str) -> None:
        pending, self._batches[channel] = self._batches[channel], []
        self._batch_epoch[channel] += 1

        overlay: Dict[str, Optional[str]] = {}
        txs: List[Transaction] = []
        included: List[_Pending] = []
        for item in pending:
            proposal, result = item.proposal, item.result
            if proposal.tx_id in self._ordered_ids:
                self._finish(item.done, item.trace, TxOutcome(
                    tx_id=proposal.tx_id, verdict=Verdict.REJECTED, reason="duplicate_tx"
                ))
                continue
            self._ordered_ids.add(proposal.tx_id)

            status, response, writes = result.status, result.response, result.writes
            if status is TxStatus.SUCCESS and not self._reads_current(channel, result.reads, overlay):
                status = TxStatus.REJECTED
                response = _conflict_response(response)
            if status is TxStatus.SUCCESS:
                for write in writes:
                    overlay[write.key] = write.value
            else:
                writes = ()

            txs.append(Transaction(
                tx_id=proposal.tx_id,
                channel=channel,
                contract=proposal.contract,
                function=proposal.function,
                args=proposal.args,
                reads=result.reads,
                writes=writes,
                submitter=proposal.client_pk,
                submitted_at=proposal.submitted_at,
                status=status,
                response=response,
            ))
            included.append(item)

        if not txs:
            return
        block = self.sequencer.append_block(channel, txs)
        self._note("batch_cut", channel=channel, height=block.height, size=len(txs))

        tracker = _BlockTracker(
            channel=channel,
            block=block,
            required={peer.node_id for peer in self.live_peers()},
            waiters=included,
        )
        self._trackers[(channel, block.height)] = tracker
        for peer in self.peers:
            self.env.process(self._deliver(peer, channel, block, self._hop(peer.delivery_rng)))

    def _reads_current(self, channel: str, reads: Iterable[ReadEntry], overlay: Dict[str, Optional[str]]) -> bool:
        for read in reads:
            if read.channel == channel and read.key in overlay:
                value = overlay[read.key]
            else:
                value = self.sequencer.get_state(read.channel, read.key)
            digest = sha256_hex(value) if value is not None else ""
            if digest != read.digest:
                return False
        return True

    # -- delivery and commit -------------------------------------------------

    def _deliver(self, peer: Peer, channel: str, block: Block, hop: float):
        yield self.env.timeout(hop)
        yield peer.deliveries.put((channel, block))

    def _commit_loop(self, peer: Peer):
        while True:
            channel, block = yield peer.deliveries.get()
            if not peer.alive:
                continue
            local = peer.ledger.channel(channel)
            if block.height >= local.height:
                peer.buffer[channel][block.height] = block
            self._note("block_delivered", channel=channel, height=block.height, peer=peer.node_id)

            while local.height in peer.buffer[channel]:
                next_block = peer.buffer[channel].pop(local.height)
                epoch = peer.epoch
                with peer.resource.request() as request:
                    yield request
                    yield self.env.timeout(self.config.peer_commit_ms * len(next_block.txs))
                if not peer.alive or peer.epoch != epoch or next_block.height != local.height:
                    continue
                local.commit_block(next_block)
                self._mark_committed(peer, channel, next_block.height)

    def _mark_committed(self, peer: Peer, channel: str, height: int) -> None:
        tracker = self._trackers.get((channel, height))
        if tracker is not None:
            tracker.committed.add(peer.node_id)
            self._check_tracker(tracker)

    def _check_tracker(self, tracker: _BlockTracker) -> None:
        if tracker.finished or not tracker.committed or not tracker.required <= tracker.committed:
            return
        tracker.finished = True
        del self._trackers[(tracker.channel, tracker.block.height)]
        for item, tx in zip(tracker.waiters, tracker.block.txs):
            verdict = Verdict.SUCCESS if tx.status is TxStatus.SUCCESS else Verdict.REJECTED
            self._finish(item.done, item.trace, TxOutcome(
                tx_id=tx.tx_id, verdict=verdict, status=tx.status, response=tx.response,
                reason=_reason(tx.response), height=tracker.block.height,
            ))

    # -- faults --------------------------------------------------------------

    def inject_fault(self, node_id: str, at_ms: Optional[float] = None, kind: FaultKind = FaultKind.CRASH) -> None:
        """Schedule a crash, recovery or digest corruption at simulated ``at_ms``."""
        node = self.node(node_id)
        kind = FaultKind(kind)
        if at_ms is None or at_ms <= self.env.now:
            self._apply_fault(node, kind)
        else:
            self.env.process(self._fault_at(node, at_ms, kind))

    def _fault_at(self, node, at_ms: float, kind: FaultKind):
        yield self.env.timeout(at_ms - self.env.now)
        self._apply_fault(node, kind)

    def _apply_fault(self, node, kind: FaultKind) -> None:
        logger.info("Fault %s on %s at %.1f ms", kind.value, node.node_id, self.env.now)
        if isinstance(node, OrderingNode):
            node.alive = kind is not FaultKind.CRASH
            self._note(f"osn_{kind.value}", node=node.node_id)
            return

        if kind is FaultKind.CORRUPT:
            node.corrupt = True
        elif kind is FaultKind.CRASH:
            node.alive = False
            node.epoch += 1
            for pending in node.buffer.values():
                pending.clear()
            for tracker in list(self._trackers.values()):
                tracker.required.discard(node.node_id)
                self._check_tracker(tracker)
        elif not node.alive:
            node.alive = True
            node.corrupt = False
            self._catch_up(node)
        self._note(f"peer_{kind.value}", node=node.node_id)

    def _catch_up(self, peer: Peer) -> None:
        """Replay every block the ordering service has cut since the peer's tip."""
        for channel in peer.ledger.channel_names:
            local = peer.ledger.channel(channel)
            source = self.sequencer.channel(channel)
            for height in range(local.height, source.height):
                local.commit_block(source.block(height))
                self._mark_committed(peer, channel, height)

    # -- batch runs ----------------------------------------------------------

    def run_until_quiescent(self, traffic: Iterable[ScriptedTx]) -> SimReport:
        """Play a traffic script and run until no events remain."""
        for item in traffic:
            self.env.process(self._scripted(item))
        self.env.run()
        return SimReport(
            traces=list(self.traces),
            events=list(self.events),
            block_counts={name: self.sequencer.channel(name).height for name in self.sequencer.channel_names},
        )

    def _scripted(self, item: ScriptedTx):
        if item.at_ms > self.env.now:
            yield self.env.timeout(item.at_ms - self.env.now)
        proposal = self.propose(item.signer, item.contract, item.function, item.args, item.read_only)
        yield self.submit(proposal).process

    def exports(self, ledger: Optional[Ledger] = None) -> Dict[str, str]:
        ledger = ledger or self.sequencer
        return {name: ledger.export_chain(name) for name in ledger.channel_names}

    def queue_occupancy(self) -> Dict[str, float]:
        return {node.node_id: node.resource.mean_occupancy() for node in [*self.peers, *self.osns]}

    def reset_monitors(self) -> None:
        for node in [*self.peers, *self.osns]:
            node.resource.reset()


def _reason(response: str) -> Optional[str]:
    if '"reason"' not in response:
        return None
    try:
        return json.loads(response).get("reason")
    except ValueError:
        return None


def run_until_quiescent(
    config: NetworkConfig,
    traffic: Iterable[ScriptedTx],
    registry: Optional[ContractRegistry] = None,
) -> Tuple[SimReport, Network]:
    """Build a fresh network, play ``traffic`` and return the report with the network."""
    if registry is None:
        from consent_ledger.contracts import build_registry
        registry = build_registry()
    network = Network(config, registry)
    return network.run_until_quiescent(traffic), network


def _conflict_response(response: str) -> str:
    """Mark an endorsed response as rejected by read-set validation, keeping its event."""
    try:
        body = json.loads(response) if response else {}
    except ValueError:
        body = {}
    if not isinstance(body, dict):
        body = {}
    body.update(verdict="rejected", reason="mvcc_conflict")
    if isinstance(body.get("event"), dict):
        body["event"] = {**body["event"], "verdict": "rejected", "reason": "mvcc_conflict"}
    return canonical_json(body)
