"""Open-loop benchmark harness over the simulated network.

A run registers a pool of datasets, then replays a Poisson arrival stream
of READ (PolicyCheck) or WRITE (GrantConsent/RevokeConsent) proposals for
``duration_s`` simulated seconds and drains until every transaction has
either committed, been rejected or timed out at its client.
"""

import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, Optional, Sequence

import numpy as np
import simpy

from consent_ledger.contracts import build_registry
from consent_ledger.contracts.payloads import encode_ops, grant_payload, registration_payload, revoke_payload
from consent_ledger.core.config import NetworkConfig
from consent_ledger.core.crypto import generate_keypair, sign
from consent_ledger.core.errors import InfeasibleWorkloadError
from consent_ledger.models.bench import BenchReport, LatencySummary, SweepPoint, SweepResult, WorkloadSpec
from consent_ledger.models.identity import KeyPair, KeyPurpose
from consent_ledger.models.network import Proposal, TxKind, TxTrace, Verdict
from consent_ledger.models.records import ALL_OPERATIONS, THREE_A_CONTRACT, DatasetRef, Operation
from consent_ledger.network.simulator import Network

logger = logging.getLogger(__name__)

# Fixed clock origin: every run sees the same contract timestamps.
BENCH_ORIGIN_MS = 1_700_000_000_000
PROCESSOR_COUNT = 4
ARRIVAL_STREAM = 1


@dataclass
class _Dataset:
    owner: KeyPair
    ref: DatasetRef


@dataclass
class _Fixture:
    """Registered datasets plus the parties that act on them."""

    controller: KeyPair
    processors: List[KeyPair]
    datasets: List[_Dataset]
    client: KeyPair


@dataclass
class _Completion:
    arrival: float
    trace: Optional[TxTrace]
    verdict: Verdict


def check_workload(spec: WorkloadSpec) -> None:
    """Raise InfeasibleWorkloadError when ``spec`` cannot produce a single arrival."""
    if spec.offered_load <= 0:
        raise InfeasibleWorkloadError("offered_load must be positive", offered_load=spec.offered_load)
    if spec.duration_s <= 0:
        raise InfeasibleWorkloadError("duration_s must be positive", duration_s=spec.duration_s)
    if spec.clients < 1:
        raise InfeasibleWorkloadError("client_count must be at least 1", client_count=spec.clients)
    if arrival_count(spec) == 0:
        raise InfeasibleWorkloadError(
            "offered_load * duration_s yields no proposals",
            offered_load=spec.offered_load, duration_s=spec.duration_s,
        )


def arrival_count(spec: WorkloadSpec) -> int:
    return int(math.floor(spec.offered_load * spec.duration_s))


def arrival_times(spec: WorkloadSpec) -> np.ndarray:
    """Arrival offsets in ms: a Poisson stream conditioned on its count."""
    rng = np.random.default_rng([spec.effective_seed, ARRIVAL_STREAM])
    return np.sort(rng.uniform(0.0, spec.duration_s * 1000.0, arrival_count(spec)))


# -- fixtures ------------------------------------------------------------------

def _registration(network: Network, fixture: _Fixture, dataset: _Dataset) -> Proposal:
    dc_ops = encode_ops(ALL_OPERATIONS)
    nonce = f"reg-{dataset.ref.pk_enc[:16]}"
    payload = registration_payload(dataset.ref, dc_ops, nonce)
    args = (
        dataset.ref.pk_ds, dataset.ref.pk_dc, dataset.ref.pk_enc, dc_ops, nonce,
        sign(dataset.owner, payload).hex, sign(fixture.controller, payload).hex,
    )
    return network.propose(fixture.client, THREE_A_CONTRACT, "Registration", args)


def _warm_up(network: Network, spec: WorkloadSpec) -> _Fixture:
    """Register ``dataset_count`` datasets and wait for all of them to commit."""
    controller = generate_keypair()
    fixture = _Fixture(
        controller=controller,
        processors=[generate_keypair() for _ in range(PROCESSOR_COUNT)],
        datasets=[],
        client=generate_keypair(),
    )
    for _ in range(spec.dataset_count):
        owner = generate_keypair()
        enc = generate_keypair(KeyPurpose.ENC)
        ref = DatasetRef(pk_ds=owner.public_hex, pk_dc=controller.public_hex, pk_enc=enc.public_hex)
        fixture.datasets.append(_Dataset(owner=owner, ref=ref))

    handles = [network.submit(_registration(network, fixture, ds), deadline_ms=math.inf) for ds in fixture.datasets]
    network.env.run(until=network.env.all_of([handle.process for handle in handles]))
    failed = sum(1 for handle in handles if handle.trace.verdict is not Verdict.SUCCESS)
    if failed:
        raise InfeasibleWorkloadError("warm-up registrations failed", failed=failed)
    logger.debug("Registered %d benchmark datasets by t=%.1f ms", len(handles), network.env.now)
    return fixture


# -- proposals -----------------------------------------------------------------

def _read_proposal(network: Network, fixture: _Fixture, index: int) -> Proposal:
    dataset = fixture.datasets[index % len(fixture.datasets)]
    processor = fixture.processors[index % len(fixture.processors)]
    ref = dataset.ref
    args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, processor.public_hex, Operation.READ.value)
    return network.propose(fixture.client, THREE_A_CONTRACT, "PolicyCheck", args, read_only=True)


def _write_proposal(network: Network, fixture: _Fixture, index: int) -> Proposal:
    """Round ``index // M`` on dataset ``index % M``: even rounds grant, odd rounds revoke the same right."""
    datasets = fixture.datasets
    round_no, slot = divmod(index, len(datasets))
    dataset = datasets[slot]
    pair = round_no // 2
    processor = fixture.processors[pair % len(fixture.processors)]
    operation = ALL_OPERATIONS[pair % len(ALL_OPERATIONS)]
    ref = dataset.ref
    nonce = f"{index:08x}"

    if round_no % 2 == 0:
        payload = grant_payload(ref, processor.public_hex, operation, nonce)
        args = (
            ref.pk_ds, ref.pk_dc, ref.pk_enc, processor.public_hex, operation.value, nonce,
            sign(dataset.owner, payload).hex, sign(fixture.controller, payload).hex,
            sign(processor, payload).hex,
        )
        return network.propose(fixture.client, THREE_A_CONTRACT, "GrantConsent", args)

    payload = revoke_payload(ref, processor.public_hex, operation, nonce)
    args = (
        ref.pk_ds, ref.pk_dc, ref.pk_enc, processor.public_hex, operation.value, nonce,
        ref.pk_ds, sign(dataset.owner, payload).hex,
    )
    return network.propose(fixture.client, THREE_A_CONTRACT, "RevokeConsent", args)


# -- clients -------------------------------------------------------------------

def _client(network: Network, fixture: _Fixture, spec: WorkloadSpec, index: int, at: float,
            slots: simpy.Resource, completions: List[_Completion]):
    env = network.env
    yield env.timeout(at - env.now)
    arrival = env.now
    deadline = arrival + network.config.client_timeout_ms

    with slots.request() as request:
        acquired = yield request | env.timeout(network.config.client_timeout_ms)
        if request not in acquired:
            completions.append(_Completion(arrival=arrival, trace=None, verdict=Verdict.TIMEOUT))
            return
        build = _read_proposal if spec.kind is TxKind.READ else _write_proposal
        handle = network.submit(build(network, fixture, index), deadline_ms=deadline)
        outcome = yield handle.process
    completions.append(_Completion(arrival=arrival, trace=handle.trace, verdict=outcome.verdict))


def _latency_summary(completions: Sequence[_Completion]) -> LatencySummary:
    # Late completions count too: the client gave up, the network did not.
    samples = [
        (c.trace.completed_at - c.arrival) / 1000.0
        for c in completions
        if c.trace is not None and c.trace.completed_at is not None
    ]
    if not samples:
        return LatencySummary()
    values = np.asarray(samples)
    p50, p95 = np.percentile(values, [50, 95])
    return LatencySummary(mean=float(values.mean()), p50=float(p50), p95=float(p95))


def run_benchmark(spec: WorkloadSpec) -> BenchReport:
    """Drive one workload through a fresh network and summarise it."""
    check_workload(spec)
    config = spec.network.model_copy(update={"seed": spec.effective_seed})
    network = Network(config, build_registry(), origin_ms=BENCH_ORIGIN_MS)
    fixture = _warm_up(network, spec)
    network.reset_monitors()

    start = network.env.now
    offsets = arrival_times(spec)
    slots = simpy.Resource(network.env, capacity=spec.clients)
    completions: List[_Completion] = []
    for index, offset in enumerate(offsets):
        network.env.process(
            _client(network, fixture, spec, index, start + float(offset), slots, completions)
        )
    network.env.run()

    submitted = len(offsets)
    committed = sum(1 for c in completions if c.verdict is Verdict.SUCCESS)
    rejected = sum(1 for c in completions if c.verdict is Verdict.REJECTED)
    timed_out = submitted - committed - rejected

    last_arrival = start + float(offsets[-1])
    finished = [c.trace.completed_at for c in completions if c.trace is not None and c.trace.completed_at is not None]
    drain_ms = max(0.0, max(finished, default=last_arrival) - last_arrival)
    throughput = committed / (spec.duration_s + drain_ms / 1000.0)

    report = BenchReport(
        kind=spec.kind,
        offered_load=spec.offered_load,
        peer_count=config.peer_count,
        submitted=submitted,
        committed=committed,
        rejected=rejected,
        timed_out=timed_out,
        success_rate=committed / submitted,
        throughput=throughput,
        latency=_latency_summary(completions),
        queue_occupancy=network.queue_occupancy(),
    )
    logger.info(
        "%s @ %g tps on %d peers: %.1f tps, success %.3f, p95 %.3f s",
        spec.kind.value, spec.offered_load, config.peer_count, report.throughput,
        report.success_rate, report.latency.p95,
    )
    return report


def _point_spec(base: WorkloadSpec, axis: str, value: float) -> WorkloadSpec:
    if axis == "offered_load":
        return base.model_copy(update={"offered_load": float(value)})
    network = NetworkConfig(**{**base.network.model_dump(), "peer_count": int(value)})
    return base.model_copy(update={"network": network})


def sweep(axis: str, values: Sequence[float], base: WorkloadSpec, workers: int = 1) -> SweepResult:
    """One report per axis value; ``workers > 1`` runs points in separate processes."""
    if axis not in ("offered_load", "peer_count"):
        raise InfeasibleWorkloadError("unknown sweep axis", axis=axis)
    if not values:
        raise InfeasibleWorkloadError("sweep axis has no values", axis=axis)

    specs = [_point_spec(base, axis, value) for value in values]
    for spec in specs:
        check_workload(spec)

    if workers > 1 and len(specs) > 1:
        with Pool(min(workers, len(specs))) as pool:
            reports = pool.map(run_benchmark, specs)
    else:
        reports = [run_benchmark(spec) for spec in specs]

    return SweepResult(
        axis=axis,
        points=[SweepPoint(axis_value=float(value), report=report) for value, report in zip(values, reports)],
    )
