"""Shared fixtures: wallets, a deployment on a fixed clock and a resource server."""

import json
from itertools import count
from typing import Any, Dict, Optional

import pytest

from consent_ledger.contracts import build_registry
from consent_ledger.contracts.payloads import validation_payload
from consent_ledger.contracts.runtime import ContractStub
from consent_ledger.core.config import NetworkConfig, settings
from consent_ledger.ledger.chain import Ledger
from consent_ledger.models.identity import Role
from consent_ledger.models.ledger import Transaction
from consent_ledger.models.network import ExecutionResult
from consent_ledger.models.profile import ApiRequest
from consent_ledger.models.records import DatasetRef, Operation
from consent_ledger.services.platform import ConsentPlatform
from consent_ledger.services.resource_server import ResourceServer
from consent_ledger.services.wallets import Wallet
from consent_ledger.services.workflows import Deployment, set_deployment

ORIGIN_MS = 1_700_000_000_000


def make_request(party: Wallet, token: str, operation: Operation, profile_id: str,
                 payload: Optional[Dict[str, Any]] = None) -> ApiRequest:
    """A profile management call signed by ``party``."""
    return ApiRequest(
        api_endpoint=f"{settings.rs_api_endpoint}/{profile_id}",
        params={
            "pubkey": party.pk,
            "signature": party.sign(validation_payload(token, operation.value)),
            "token": token,
            "operation": operation.value,
        },
        payload=payload,
    )


class ContractHarness:
    """Runs contract functions against one ledger, committing each call as its own block."""

    def __init__(self, token_lifetime_s: int = 3600):
        self.ledger = Ledger()
        self.registry = build_registry(token_lifetime_s)
        self.now = ORIGIN_MS
        self._tx = count()

    def invoke(self, contract_name: str, function: str, *args: str, submitter: str = "ab" * 32) -> ExecutionResult:
        contract = self.registry.get(contract_name)
        read_only = contract.is_read_only(function)
        tx_id = f"{next(self._tx):064x}"
        stub = ContractStub(self.ledger, contract.channel, tx_id, self.now, submitter, read_only=read_only)
        result = contract.invoke(stub, function, tuple(args))
        if not read_only:
            self.ledger.append_block(contract.channel, [Transaction(
                tx_id=tx_id, channel=contract.channel, contract=contract.name, function=function,
                args=tuple(args), reads=result.reads, writes=result.writes, submitter=submitter,
                submitted_at=self.now, status=result.status, response=result.response,
            )])
        return result

    @staticmethod
    def body(result: ExecutionResult) -> Dict[str, Any]:
        return json.loads(result.response)

    def state(self, channel: str) -> Dict[str, str]:
        return dict(self.ledger.channel(channel).world_state)


@pytest.fixture
def harness():
    return ContractHarness()


@pytest.fixture
def network_config():
    return NetworkConfig()


@pytest.fixture
def fast_config():
    """Single peer and OSN, unsigned endorsements."""
    return NetworkConfig(peer_count=1, osn_count=1, sign_endorsements=False)


@pytest.fixture
def platform(network_config):
    return ConsentPlatform(config=network_config, token_lifetime_s=3600, origin_ms=ORIGIN_MS)


@pytest.fixture
def ds():
    return Wallet("alice", Role.DS)


@pytest.fixture
def dc():
    return Wallet("acme", Role.DC)


@pytest.fixture
def dp():
    return Wallet("analytics", Role.DP)


@pytest.fixture
def dataset(platform, ds, dc) -> DatasetRef:
    """A dataset registered by ``ds`` with ``dc`` holding the default operations."""
    receipt = platform.register(ds, dc)
    assert receipt.accepted
    return receipt.dataset


@pytest.fixture
def resource_server(platform):
    return ResourceServer(platform)


@pytest.fixture
async def stored_profile(platform, resource_server, ds, dataset):
    """Profile ``profile-alice`` created on the RS and uploaded on-chain."""
    grant = platform.data_access(dataset, ds, Operation.CREATE)
    response = await resource_server.handle(
        make_request(ds, grant.access_token, Operation.CREATE, "profile-alice", {"name": "Alice"})
    )
    assert response.ok
    receipt = platform.upload(dataset, ds, "profile-alice", response.body["content_hash"])
    assert receipt.accepted
    return "profile-alice"


@pytest.fixture
def deployment(tmp_path, fast_config):
    """A file-backed deployment installed as the process-wide one."""
    deployment = Deployment(tmp_path / "data", config=fast_config, token_lifetime_s=3600, origin_ms=ORIGIN_MS)
    set_deployment(deployment)
    yield deployment
    set_deployment(None)
