"""Tests for the profile management API of the resource server."""

import asyncio

import pytest

from consent_ledger.core.errors import DocumentNotFoundError
from consent_ledger.models.identity import Role
from consent_ledger.models.profile import ApiRequest, ApiStatus
from consent_ledger.models.records import Operation
from consent_ledger.services.platform import ConsentPlatform
from consent_ledger.services.resource_server import ResourceServer
from consent_ledger.services.wallets import Wallet

from .conftest import ORIGIN_MS, make_request


async def _call(server, platform, dataset, party, operation, profile_id, payload=None):
    grant = platform.data_access(dataset, party, operation)
    assert grant.accepted, grant.reason
    return await server.handle(make_request(party, grant.access_token, operation, profile_id, payload))


class TestCrud:
    """Test token-gated CRUD on stored profiles."""

    async def test_created_profile_matches_chain(self, resource_server, dataset, stored_profile):
        """Test the stored document hashes to the uploaded value."""
        document = resource_server.get_document(stored_profile)
        assert document.attributes == {"name": "Alice"}
        assert resource_server.integrity_check(stored_profile, dataset) == "match"

    async def test_processor_reads(self, platform, resource_server, ds, dc, dp, dataset, stored_profile):
        """Test a DP with READ consent gets the profile and an audit reference."""
        platform.grant(dataset, ds, dc, dp, Operation.READ)
        response = await _call(resource_server, platform, dataset, dp, Operation.READ, stored_profile)
        assert response.ok
        assert response.http_status == 200
        assert response.body["attributes"] == {"name": "Alice"}
        entries = [e for e in platform.audit_query() if e.tx_id == response.audit_ref]
        assert len(entries) == 1
        assert entries[0].what == "read"
        assert entries[0].processor == dp.pk

    async def test_processor_out_of_scope(self, platform, resource_server, ds, dc, dp, dataset, stored_profile):
        """Test an UPDATE with a READ-only token is denied and nothing changes."""
        platform.grant(dataset, ds, dc, dp, Operation.READ)
        token = platform.data_access(dataset, dp, Operation.READ).access_token
        before = resource_server.mutation_count
        response = await resource_server.handle(
            make_request(dp, token, Operation.UPDATE, stored_profile, {"name": "Eve"})
        )
        assert response.status is ApiStatus.DENIED
        assert response.body == {"reason": "scope_miss"}
        assert response.http_status == 403
        assert resource_server.mutation_count == before
        assert resource_server.get_document(stored_profile).attributes == {"name": "Alice"}

    async def test_update_then_reupload(self, platform, resource_server, ds, dc, dataset, stored_profile):
        """Test an update bumps the version and integrity holds once the new hash is uploaded."""
        response = await _call(resource_server, platform, dataset, dc, Operation.UPDATE, stored_profile,
                               {"email": "alice@example.org"})
        assert response.ok
        assert response.body["version"] == 2
        assert response.body["attributes"] == {"name": "Alice", "email": "alice@example.org"}
        assert resource_server.integrity_check(stored_profile, dataset) == "mismatch"

        platform.upload(dataset, dc, stored_profile, response.body["content_hash"])
        assert resource_server.integrity_check(stored_profile, dataset) == "match"

    async def test_create_twice(self, platform, resource_server, ds, dataset, stored_profile):
        """Test creating an existing profile is a conflict."""
        response = await _call(resource_server, platform, dataset, ds, Operation.CREATE, stored_profile, {})
        assert response.body["reason"] == "conflict"
        assert response.http_status == 409

    async def test_read_missing(self, platform, resource_server, ds, dataset):
        """Test reading an absent profile is not_found."""
        response = await _call(resource_server, platform, dataset, ds, Operation.READ, "profile-nobody")
        assert response.http_status == 404

    async def test_other_dataset(self, platform, resource_server, ds, dc, dataset, stored_profile):
        """Test a token for one dataset cannot reach another dataset's profile."""
        bob = Wallet("bob", Role.DS)
        other = platform.register(bob, dc).dataset
        response = await _call(resource_server, platform, other, bob, Operation.READ, stored_profile)
        assert response.status is ApiStatus.DENIED
        assert response.body["reason"] == "wrong_dataset"

    async def test_owner_deletes(self, platform, resource_server, ds, dataset, stored_profile):
        """Test the DS may delete its profile."""
        response = await _call(resource_server, platform, dataset, ds, Operation.DELETE, stored_profile)
        assert response.ok
        with pytest.raises(DocumentNotFoundError):
            resource_server.get_document(stored_profile)

    async def test_update_missing_spends_no_validation(self, platform, resource_server, dc, dataset, stored_profile):
        """Test an update of an absent profile is refused before its token is validated."""
        token = platform.data_access(dataset, dc, Operation.UPDATE).access_token
        trail, mutations = len(platform.audit_query()), resource_server.mutation_count
        response = await resource_server.handle(
            make_request(dc, token, Operation.UPDATE, "profile-nobody", {"name": "Bob"})
        )
        assert response.http_status == 404
        assert response.audit_ref is None
        assert len(platform.audit_query()) == trail
        assert resource_server.mutation_count == mutations

    async def test_accepted_writes_match_mutations(self, platform, resource_server, ds, dataset, stored_profile):
        """Test every write validation the chain accepted changed the store."""
        calls = [
            (Operation.CREATE, stored_profile),
            (Operation.UPDATE, "profile-nobody"),
            (Operation.DELETE, "profile-nobody"),
            (Operation.UPDATE, stored_profile),
            (Operation.DELETE, stored_profile),
            (Operation.DELETE, stored_profile),
        ]
        for operation, profile_id in calls:
            token = platform.data_access(dataset, ds, operation).access_token
            payload = {"step": 1} if operation is Operation.UPDATE else None
            await resource_server.handle(make_request(ds, token, operation, profile_id, payload))

        writes = [e for e in platform.audit_query()
                  if e.what in {"create", "update", "delete"} and e.verdict == "accepted"]
        assert len(writes) == resource_server.mutation_count == 3


class TestRequests:
    """Test malformed requests."""

    async def test_missing_params(self, resource_server, stored_profile):
        """Test a request without credentials is a bad request."""
        request = ApiRequest(api_endpoint=f"/ProfileManagement/{stored_profile}", params={"operation": "read"})
        response = await resource_server.handle(request)
        assert response.http_status == 400
        assert response.body["missing"] == ["pubkey", "signature", "token"]

    async def test_unknown_endpoint(self, platform, resource_server, ds, dataset, stored_profile):
        """Test calls outside the profile API are refused."""
        token = platform.data_access(dataset, ds, Operation.READ).access_token
        request = make_request(ds, token, Operation.READ, stored_profile)
        request = request.model_copy(update={"api_endpoint": f"/Elsewhere/{stored_profile}"})
        response = await resource_server.handle(request)
        assert response.body["reason"] == "bad_request"

    async def test_chain_unavailable(self, fast_config, ds, dc):
        """Test the server denies every call when the chain cannot answer."""
        platform = ConsentPlatform(fast_config, 3600, ORIGIN_MS)
        dataset = platform.register(ds, dc).dataset
        token = platform.data_access(dataset, ds, Operation.READ).access_token
        server = ResourceServer(platform)
        platform.network.inject_fault("peer0")
        response = await server.handle(make_request(ds, token, Operation.READ, "profile-alice"))
        assert response.status is ApiStatus.DENIED
        assert response.body["reason"] == "chain_unavailable"


class TestErasure:
    """Test the right to be forgotten."""

    async def test_owner_erases(self, platform, resource_server, ds, dc, dp, dataset, stored_profile):
        """Test erasure deletes the profile, destroys sk_enc and kills every token."""
        platform.grant(dataset, ds, dc, dp, Operation.READ)
        token = platform.data_access(dataset, dp, Operation.READ).access_token

        response = await platform.erase(resource_server, dataset, ds, stored_profile, key_holders=[dc, dp])
        assert response.ok
        with pytest.raises(DocumentNotFoundError):
            resource_server.get_document(stored_profile)
        for wallet in (ds, dc, dp):
            assert not wallet.holds_enc_key(dataset.pk_enc)
            assert dataset.pk_enc in wallet.destroyed_keys

        denied = await resource_server.handle(make_request(dp, token, Operation.READ, stored_profile))
        assert denied.body["reason"] == "unknown_token"

    async def test_controller_cannot_erase(self, platform, resource_server, dc, dataset, stored_profile):
        """Test an erasure signed by the DC is denied and the profile survives."""
        request = platform.sign_erasure(dataset, dc, stored_profile)
        response = await resource_server.erase(stored_profile, dataset, **request)
        assert response.body["reason"] == "not_owner"
        assert resource_server.get_document(stored_profile).profile_id == stored_profile


class TestStore:
    """Test the SQLite-backed document store."""

    async def test_file_store_survives_restart(self, tmp_path, platform, ds, dataset):
        """Test a second server on the same file sees stored profiles."""
        path = tmp_path / "profiles.db"
        server = ResourceServer(platform, store_path=path)
        response = await _call(server, platform, dataset, ds, Operation.CREATE, "profile-x", {"a": 1})
        assert response.ok
        assert ResourceServer(platform, store_path=path).get_document("profile-x").attributes == {"a": 1}


class TestProfileLocks:
    """Test the per-profile locks do not outlive their requests."""

    async def test_concurrent_updates_apply_in_turn(self, platform, resource_server, dc, dataset, stored_profile):
        """Test two concurrent updates both land and leave no lock behind."""
        token = platform.data_access(dataset, dc, Operation.UPDATE).access_token
        responses = await asyncio.gather(*(
            resource_server.handle(make_request(dc, token, Operation.UPDATE, stored_profile, {"n": n}))
            for n in range(2)
        ))
        assert all(response.ok for response in responses)
        assert resource_server.get_document(stored_profile).version == 3
        assert resource_server._locks == {}

    async def test_erased_profile_leaves_no_lock(self, platform, resource_server, ds, dc, dataset, stored_profile):
        """Test erasing a profile releases its lock entry."""
        response = await platform.erase(resource_server, dataset, ds, stored_profile, key_holders=[dc])
        assert response.ok
        assert resource_server._locks == {}
        assert not resource_server._lock_users
