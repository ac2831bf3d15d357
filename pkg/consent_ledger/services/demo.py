"""Scripted end-to-end scenario: consent management followed by data access.

A DS registers a dataset with its DC and uploads a profile to the resource
server. The DS and DC grant a DP read access, the DP fetches and reads the
profile, the DC revokes the grant and the DP's next access is rejected.
"""

from typing import Any, Dict, List, Optional

from consent_ledger.contracts.payloads import validation_payload
from consent_ledger.core.config import NetworkConfig, settings
from consent_ledger.models.identity import Role
from consent_ledger.models.profile import ApiRequest
from consent_ledger.models.records import DatasetRef, Operation
from consent_ledger.services.platform import ConsentPlatform
from consent_ledger.services.resource_server import ResourceServer
from consent_ledger.services.wallets import Wallet

DEMO_ORIGIN_MS = 1_700_000_000_000

DEMO_PROFILE = {
    "name": "Alice Example",
    "mbox": "mailto:alice@example.org",
    "homepage": "https://alice.example.org",
    "knows": [],
}


def _request(party: Wallet, token: str, operation: Operation, profile_id: str,
             payload: Optional[Dict[str, Any]] = None) -> ApiRequest:
    return ApiRequest(
        api_endpoint=f"{settings.rs_api_endpoint}/{profile_id}",
        rest_endpoint=f"{settings.rs_host}:{settings.rs_port}",
        params={
            "pubkey": party.pk,
            "signature": party.sign(validation_payload(token, operation.value)),
            "token": token,
            "operation": operation.value,
        },
        payload=payload,
    )


async def run_demo(config: Optional[NetworkConfig] = None, profile_id: str = "profile-alice") -> Dict[str, Any]:
    """Play the scenario on a fresh in-memory deployment; returns the steps and the audit trail."""
    platform = ConsentPlatform(config=config, origin_ms=DEMO_ORIGIN_MS)
    server = ResourceServer(platform)
    ds, dc, dp = Wallet("alice", Role.DS), Wallet("acme", Role.DC), Wallet("analytics", Role.DP)
    steps: List[Dict[str, Any]] = []

    def step(name: str, accepted: bool, **detail: Any) -> None:
        steps.append({"step": name, "accepted": accepted, **detail})

    registration = platform.register(ds, dc)
    dataset: DatasetRef = registration.dataset
    step("register", registration.accepted, dataset_key=dataset.key)

    owner_access = platform.data_access(dataset, ds, Operation.CREATE)
    created = await server.handle(
        _request(ds, owner_access.access_token or "", Operation.CREATE, profile_id, DEMO_PROFILE)
    )
    step("store_profile", created.ok, audit_ref=created.audit_ref)
    upload = platform.upload(dataset, ds, profile_id, created.body["content_hash"])
    step("upload", upload.accepted)

    grant = platform.grant(dataset, ds, dc, dp, Operation.READ)
    step("grant_read", grant.accepted, access_token=grant.access_token)

    access = platform.data_access(dataset, dp, Operation.READ)
    step("access_read", access.accepted, reason=access.reason)
    pointer = dp.decrypt_pointer(dataset.pk_enc, access.en_pointer)
    read = await server.handle(_request(dp, access.access_token or "", Operation.READ, pointer))
    step("read_profile", read.ok, audit_ref=read.audit_ref)

    revoke = platform.revoke(dataset, dc, dp, Operation.READ)
    step("revoke_read", revoke.accepted)
    denied = platform.data_access(dataset, dp, Operation.READ)
    step("access_after_revoke", denied.accepted, reason=denied.reason)
    stale = await server.handle(_request(dp, access.access_token or "", Operation.READ, pointer))
    step("read_with_revoked_token", stale.ok, reason=(stale.body or {}).get("reason"))

    entries = platform.audit_query()
    return {
        "dataset_key": dataset.key,
        "steps": steps,
        "audit": [entry.model_dump() for entry in entries],
        "integrity": server.integrity_check(pointer, dataset),
    }
