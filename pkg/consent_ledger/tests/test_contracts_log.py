"""Tests for the log contract: tokens, validation, refresh and erasure."""

from types import SimpleNamespace

import pytest

from consent_ledger.contracts.log import derive_token
from consent_ledger.contracts.payloads import (
    encode_ops, erase_payload, grant_payload, refresh_payload, registration_payload,
    revoke_payload, upload_payload, validation_payload
)
from consent_ledger.core.crypto import generate_keypair, sign
from consent_ledger.core.encoding import sha256_hex
from consent_ledger.models.identity import KeyPurpose
from consent_ledger.models.ledger import TxStatus
from consent_ledger.models.records import (
    LOG_CHANNEL, LOG_CONTRACT, THREE_A_CONTRACT, DatasetRef, LogRecord, Operation, RecordStatus, token_key
)
from consent_ledger.services.audit import audit_entries

DC_OPS = encode_ops([Operation.CREATE, Operation.READ, Operation.UPDATE])


@pytest.fixture
def world(harness):
    """A registered dataset with READ granted to one DP, on both channels."""
    ds, dc, dp, other = (generate_keypair() for _ in range(4))
    enc = generate_keypair(KeyPurpose.ENC)
    ref = DatasetRef(pk_ds=ds.public_hex, pk_dc=dc.public_hex, pk_enc=enc.public_hex)

    payload = registration_payload(ref, DC_OPS, "n-reg")
    reg_args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, DC_OPS, "n-reg", sign(ds, payload).hex, sign(dc, payload).hex)
    harness.invoke(THREE_A_CONTRACT, "Registration", *reg_args)
    registration = harness.invoke(LOG_CONTRACT, "RecordRegistration", *reg_args)

    payload = grant_payload(ref, dp.public_hex, Operation.READ, "n-grant")
    grant_args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, dp.public_hex, "read", "n-grant",
                  sign(ds, payload).hex, sign(dc, payload).hex, sign(dp, payload).hex)
    harness.invoke(THREE_A_CONTRACT, "GrantConsent", *grant_args)
    grant = harness.invoke(LOG_CONTRACT, "RecordGrant", *grant_args)

    return SimpleNamespace(
        ds=ds, dc=dc, dp=dp, other=other, ref=ref,
        grant_args=grant_args,
        controller_token=harness.body(registration)["access_token"],
        dp_token=harness.body(grant)["access_token"],
    )


def _validate(harness, token, party, op):
    signature = sign(party, validation_payload(token, op)).hex
    return harness.invoke(LOG_CONTRACT, "TokenValidation", token, party.public_hex, signature, op)


def _reason(harness, result):
    return harness.body(result).get("reason")


def _log_record(harness, ref, pk) -> LogRecord:
    return LogRecord.from_state(harness.ledger.get_state(LOG_CHANNEL, ref.log_key(pk)))


class TestCompanionRecords:
    """Test log entries written alongside 3A operations."""

    def test_registration_creates_controller_record(self, harness, world):
        """Test registration issues the controller's token with the DC scope."""
        record = _log_record(harness, world.ref, world.ref.pk_dc)
        assert record.access_token == world.controller_token
        assert record.scope == [Operation.CREATE, Operation.READ, Operation.UPDATE]
        assert record.expires_in == 3600.0
        assert record.refresh_count == 1
        assert harness.ledger.get_state(LOG_CHANNEL, token_key(world.controller_token)) == record.key

    def test_tokens_derive_from_transaction(self, harness, world):
        """Test the grant token is bound to the issuing transaction id."""
        grant_tx = harness.ledger.channel(LOG_CHANNEL).blocks[-1].txs[0]
        assert world.dp_token == derive_token(grant_tx.tx_id, "grant")
        assert world.dp_token != world.controller_token

    def test_registration_needs_committed_dataset(self, harness):
        """Test the companion refuses a dataset the 3A ledger does not hold."""
        ds, dc = generate_keypair(), generate_keypair()
        ref = DatasetRef(pk_ds=ds.public_hex, pk_dc=dc.public_hex,
                         pk_enc=generate_keypair(KeyPurpose.ENC).public_hex)
        payload = registration_payload(ref, DC_OPS, "n")
        result = harness.invoke(LOG_CONTRACT, "RecordRegistration", ref.pk_ds, ref.pk_dc, ref.pk_enc,
                                DC_OPS, "n", sign(ds, payload).hex, sign(dc, payload).hex)
        assert _reason(harness, result) == "unknown"

    def test_upload_hash_must_be_committed(self, harness, world):
        """Test an upload record whose hash is not on the 3A ledger is refused."""
        data_hash = sha256_hex("never uploaded")
        payload = upload_payload(world.ref, world.ref.pk_ds, "ab", data_hash, "n-up")
        result = harness.invoke(LOG_CONTRACT, "RecordUpload", world.ref.pk_ds, world.ref.pk_dc,
                                world.ref.pk_enc, world.ref.pk_ds, "ab", data_hash, "n-up",
                                sign(world.ds, payload).hex)
        assert _reason(harness, result) == "not_committed"

    def test_grant_widens_scope(self, harness, world):
        """Test a second grant adds to the DP's scope and reissues its token."""
        ref = world.ref
        payload = grant_payload(ref, world.dp.public_hex, Operation.UPDATE, "n-2")
        args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, world.dp.public_hex, "update", "n-2",
                sign(world.ds, payload).hex, sign(world.dc, payload).hex, sign(world.dp, payload).hex)
        harness.invoke(THREE_A_CONTRACT, "GrantConsent", *args)
        result = harness.invoke(LOG_CONTRACT, "RecordGrant", *args)
        record = _log_record(harness, ref, world.dp.public_hex)
        assert record.scope == [Operation.READ, Operation.UPDATE]
        assert record.access_token == harness.body(result)["access_token"] != world.dp_token
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "read")) == "unknown_token"

    def test_grant_without_policy(self, harness, world):
        """Test the companion refuses a grant the 3A ledger never committed."""
        ref = world.ref
        payload = grant_payload(ref, world.other.public_hex, Operation.READ, "n-3")
        result = harness.invoke(LOG_CONTRACT, "RecordGrant", ref.pk_ds, ref.pk_dc, ref.pk_enc,
                                world.other.public_hex, "read", "n-3", sign(world.ds, payload).hex,
                                sign(world.dc, payload).hex, sign(world.other, payload).hex)
        assert _reason(harness, result) == "policy"

    def test_revoke_narrows_scope(self, harness, world):
        """Test revocation drops the operation and retires the old token."""
        ref = world.ref
        payload = revoke_payload(ref, world.dp.public_hex, Operation.READ, "n-rev")
        args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, world.dp.public_hex, "read", "n-rev",
                ref.pk_dc, sign(world.dc, payload).hex)
        harness.invoke(THREE_A_CONTRACT, "RevokeConsent", *args)
        result = harness.invoke(LOG_CONTRACT, "RecordRevoke", *args)
        assert result.status is TxStatus.SUCCESS
        record = _log_record(harness, ref, world.dp.public_hex)
        assert record.scope == []
        assert record.access_token != world.dp_token
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "read")) == "unknown_token"

    def test_grant_replayed_after_revoke(self, harness, world):
        """Test resubmitting the original grant after revocation is refused on both channels."""
        ref = world.ref
        payload = revoke_payload(ref, world.dp.public_hex, Operation.READ, "n-rev")
        args = (ref.pk_ds, ref.pk_dc, ref.pk_enc, world.dp.public_hex, "read", "n-rev",
                ref.pk_dc, sign(world.dc, payload).hex)
        harness.invoke(THREE_A_CONTRACT, "RevokeConsent", *args)
        harness.invoke(LOG_CONTRACT, "RecordRevoke", *args)

        replayed = harness.invoke(THREE_A_CONTRACT, "GrantConsent", *world.grant_args)
        assert _reason(harness, replayed) == "replayed_nonce"
        replayed = harness.invoke(LOG_CONTRACT, "RecordGrant", *world.grant_args)
        assert _reason(harness, replayed) == "replayed_nonce"
        assert _log_record(harness, ref, world.dp.public_hex).scope == []
        policy = harness.invoke(THREE_A_CONTRACT, "PolicyCheck", ref.pk_ds, ref.pk_dc, ref.pk_enc,
                                world.dp.public_hex, "read")
        assert harness.body(policy)["decision"] == "denied"


class TestTokenValidation:
    """Test the validation decision and its rejection reasons."""

    def test_processor_in_scope(self, harness, world):
        """Test a DP validating within scope is accepted and its lifetime decremented."""
        harness.now += 1500
        result = _validate(harness, world.dp_token, world.dp, "read")
        assert result.status is TxStatus.SUCCESS
        assert harness.body(result)["dataset_key"] == world.ref.key
        record = _log_record(harness, world.ref, world.dp.public_hex)
        assert record.expires_in == pytest.approx(3598.5)
        assert record.issued_at == harness.now
        assert record.operation is Operation.READ

    def test_owner_accepted_regardless_of_scope(self, harness, world):
        """Test the DS is accepted for an operation outside the controller's scope."""
        harness.now += 10_000
        result = _validate(harness, world.controller_token, world.ds, "delete")
        assert result.status is TxStatus.SUCCESS
        record = _log_record(harness, world.ref, world.ref.pk_dc)
        assert record.expires_in == 3600.0
        assert record.operation is Operation.DELETE

    def test_scope_miss(self, harness, world):
        """Test an operation outside the DP's scope is refused."""
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "update")) == "scope_miss"

    def test_not_holder(self, harness, world):
        """Test a stranger presenting the DP's token is refused."""
        assert _reason(harness, _validate(harness, world.dp_token, world.other, "read")) == "not_holder"

    def test_not_holder_precedes_scope(self, harness, world):
        """Test a stranger asking for an unscoped operation is refused as not_holder."""
        assert _reason(harness, _validate(harness, world.dp_token, world.other, "delete")) == "not_holder"

    def test_expired(self, harness, world):
        """Test a token is refused once its lifetime has run out."""
        harness.now += 3_601_000
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "read")) == "expired"

    def test_bad_signature(self, harness, world):
        """Test a signature over another operation is refused."""
        signature = sign(world.dp, validation_payload(world.dp_token, "update")).hex
        result = harness.invoke(LOG_CONTRACT, "TokenValidation", world.dp_token,
                                world.dp.public_hex, signature, "read")
        assert _reason(harness, result) == "signature"

    @pytest.mark.parametrize("token", ["00" * 32, "not-a-token"])
    def test_unknown_token(self, harness, world, token):
        """Test tokens without a record are refused."""
        assert _reason(harness, _validate(harness, token, world.dp, "read")) == "unknown_token"

    def test_rejections_are_audited(self, harness, world):
        """Test a refused validation still lands on the log chain with its reason."""
        _validate(harness, world.dp_token, world.dp, "update")
        entry = list(audit_entries(harness.ledger))[-1]
        assert entry.what == "update"
        assert entry.verdict == "rejected"
        assert entry.reason == "scope_miss"
        assert entry.which == world.ref.key
        assert entry.processor == world.dp.public_hex


class TestTokenRefresh:
    """Test token re-issue."""

    def _refresh(self, harness, record_key, party, nonce="n-ref"):
        signature = sign(party, refresh_payload(record_key, nonce)).hex
        return harness.invoke(LOG_CONTRACT, "TokenRefresh", record_key, party.public_hex, nonce, signature)

    def test_refresh_restores_validation(self, harness, world):
        """Test an expired token's holder gets a fresh token and a higher refresh count."""
        harness.now += 3_601_000
        result = self._refresh(harness, world.ref.log_key(world.dp.public_hex), world.dp)
        body = harness.body(result)
        assert body["refresh_count"] == 2
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "read")) == "unknown_token"
        assert _validate(harness, body["access_token"], world.dp, "read").status is TxStatus.SUCCESS

    def test_stranger_cannot_refresh(self, harness, world):
        """Test only the record's holders may refresh."""
        result = self._refresh(harness, world.ref.log_key(world.dp.public_hex), world.other)
        assert _reason(harness, result) == "not_holder"

    def test_refresh_needs_log_key(self, harness, world):
        """Test a key outside the log namespace is unknown."""
        assert _reason(harness, self._refresh(harness, world.ref.key, world.ds)) == "unknown"

    def test_refresh_nonce_is_single_use(self, harness, world):
        """Test a refresh resubmitted with the same nonce is refused."""
        key = world.ref.log_key(world.dp.public_hex)
        assert self._refresh(harness, key, world.dp).status is TxStatus.SUCCESS
        assert _reason(harness, self._refresh(harness, key, world.dp)) == "replayed_nonce"
        assert _log_record(harness, world.ref, world.dp.public_hex).refresh_count == 2


class TestAuthorizeErasure:
    """Test erasure authorisation on the log ledger."""

    def _erase(self, harness, world, party):
        digest = sha256_hex("profile-alice")
        signature = sign(party, erase_payload(world.ref, digest, "n-erase")).hex
        ref = world.ref
        return harness.invoke(LOG_CONTRACT, "AuthorizeErasure", ref.pk_ds, ref.pk_dc, ref.pk_enc,
                              digest, "n-erase", party.public_hex, signature)

    def test_owner_closes_every_token(self, harness, world):
        """Test the DS's erasure closes the controller and DP records."""
        result = self._erase(harness, world, world.ds)
        assert harness.body(result)["closed_records"] == 2
        for pk in (world.ref.pk_dc, world.dp.public_hex):
            assert _log_record(harness, world.ref, pk).status is RecordStatus.REJECTED
        assert _reason(harness, _validate(harness, world.dp_token, world.dp, "read")) == "unknown_token"
        assert _reason(harness, _validate(harness, world.controller_token, world.ds, "read")) == "unknown_token"

    def test_controller_cannot_erase(self, harness, world):
        """Test erasure is the DS's right alone."""
        assert _reason(harness, self._erase(harness, world, world.dc)) == "not_owner"

    def test_refresh_after_erasure(self, harness, world):
        """Test a closed record cannot be refreshed back to life."""
        self._erase(harness, world, world.ds)
        key = world.ref.log_key(world.dp.public_hex)
        signature = sign(world.dp, refresh_payload(key, "n")).hex
        result = harness.invoke(LOG_CONTRACT, "TokenRefresh", key, world.dp.public_hex, "n", signature)
        assert _reason(harness, result) == "not_approved"


class TestGetRecord:
    """Test the read-only record lookup."""

    def test_get_record(self, harness, world):
        """Test a record is returned without writing."""
        result = harness.invoke(LOG_CONTRACT, "GetRecord", world.ref.log_key(world.dp.public_hex))
        assert result.writes == ()
        assert harness.body(result)["record"]["processor"] == world.dp.public_hex

    def test_get_missing_record(self, harness, world):
        """Test a missing record is rejected as unknown."""
        result = harness.invoke(LOG_CONTRACT, "GetRecord", world.ref.log_key(world.other.public_hex))
        assert _reason(harness, result) == "unknown"
