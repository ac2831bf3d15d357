"""The log contract: access tokens, their validation, and the activity log.

Every client-level consent operation lands here as one transaction, so the
log channel's chain is the audit trail. Records are keyed by
(owner, controller, processor, pk_enc); a secondary ``tok~`` index maps each
live token back to its record.
"""

import logging
from typing import Any, Dict, List, Optional

from consent_ledger.contracts.payloads import (
    decode_ops, erase_payload, grant_payload, refresh_payload, registration_payload,
    revoke_payload, upload_payload, validation_payload
)
from consent_ledger.contracts.runtime import Contract, ContractStub, contract_function
from consent_ledger.core.crypto import verify
from consent_ledger.core.encoding import length_prefixed, sha256_hex
from consent_ledger.core.errors import ContractRejectedError
from consent_ledger.models.records import (
    ALL_OPERATIONS, LOG_CHANNEL, LOG_CONTRACT, LOG_PREFIX, KEY_SEPARATOR, THREE_A_CHANNEL,
    DatasetRef, LogRecord, Operation, ReasonCode, RecordStatus, ThreeARecord, token_key
)

logger = logging.getLogger(__name__)


def derive_token(tx_id: str, label: str) -> str:
    """64-hex token bound to the issuing transaction, identical on every peer."""
    return sha256_hex(length_prefixed([tx_id, label]))


def _sorted_scope(ops) -> List[Operation]:
    present = {Operation(op) for op in ops}
    return [op for op in ALL_OPERATIONS if op in present]


def _event(
    who: str,
    what: str,
    which: str,
    verdict: str,
    scope: Optional[List[Operation]] = None,
    reason: Optional[str] = None,
    owner: Optional[str] = None,
    controller: Optional[str] = None,
    processor: Optional[str] = None,
) -> Dict[str, Any]:
    return {
        "who": who,
        "what": what,
        "which": which,
        "verdict": verdict,
        "scope": [Operation(op).value for op in scope or []],
        "reason": reason,
        "owner": owner,
        "controller": controller,
        "processor": processor,
    }


class LogContract(Contract):
    """Token lifecycle and audit events on the log ledger."""

    name = LOG_CONTRACT
    channel = LOG_CHANNEL

    def __init__(self, token_lifetime_s: int = 3600):
        self.token_lifetime_s = token_lifetime_s

    # -- helpers -----------------------------------------------------------

    def _reject(self, reason: str, event: Dict[str, Any]) -> ContractRejectedError:
        event = {**event, "verdict": "rejected", "reason": reason}
        logger.warning("%s rejected: %s", event["what"], reason)
        return ContractRejectedError(reason, event=event)

    def _dataset_record(self, stub: ContractStub, dataset: DatasetRef) -> Optional[ThreeARecord]:
        value = stub.get_cross_channel_state(THREE_A_CHANNEL, dataset.key)
        return ThreeARecord.from_state(value) if value is not None else None

    def _load(self, stub: ContractStub, key: str) -> Optional[LogRecord]:
        value = stub.get_state(key)
        return LogRecord.from_state(value) if value is not None else None

    def _store(self, stub: ContractStub, record: LogRecord, previous_token: Optional[str] = None) -> None:
        if previous_token and previous_token != record.access_token:
            stub.del_state(token_key(previous_token))
        stub.put_state(record.key, record.to_state())
        stub.put_state(token_key(record.access_token), record.key)

    # -- companions of 3A operations ----------------------------------------

    @contract_function("RecordRegistration")
    def record_registration(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str,
                            dc_ops: str, nonce: str, t_ds: str, t_dc: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        base = _event(pk_ds, "registration", dataset.key, "rejected", owner=pk_ds, controller=pk_dc)
        payload = registration_payload(dataset, dc_ops, nonce)
        if not (verify(pk_ds, payload, t_ds) and verify(pk_dc, payload, t_dc)):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(pk_ds, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        if self._dataset_record(stub, dataset) is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)
        key = dataset.log_key(pk_dc)
        if stub.get_state(key) is not None:
            raise self._reject("already_registered", base)

        record = LogRecord(
            owner=pk_ds,
            controller=pk_dc,
            processor=pk_dc,
            pk_enc=pk_enc,
            access_token=derive_token(stub.tx_id, "registration"),
            issued_at=stub.tx_timestamp,
            scope=_sorted_scope(decode_ops(dc_ops)),
            expires_in=float(self.token_lifetime_s),
            refresh_count=1,
        )
        self._store(stub, record)
        event = _event(pk_ds, "registration", dataset.key, "accepted", record.scope,
                       owner=pk_ds, controller=pk_dc, processor=pk_dc)
        return {"verdict": "accepted", "access_token": record.access_token, "record_key": record.key, "event": event}

    @contract_function("RecordUpload")
    def record_upload(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, uploader: str,
                      en_pointer: str, data_hash: str, nonce: str, t_uploader: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        base = _event(uploader, "data_upload", dataset.key, "rejected", owner=pk_ds, controller=pk_dc)
        if uploader not in (pk_ds, pk_dc):
            raise self._reject(ReasonCode.NOT_HOLDER.value, base)
        if not verify(uploader, upload_payload(dataset, uploader, en_pointer, data_hash, nonce), t_uploader):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(uploader, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        record = self._dataset_record(stub, dataset)
        if record is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)
        if record.hash != data_hash:
            raise self._reject("not_committed", base)
        event = _event(uploader, "data_upload", dataset.key, "accepted", owner=pk_ds, controller=pk_dc)
        return {"verdict": "accepted", "event": event}

    @contract_function("RecordGrant")
    def record_grant(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, pk_dp: str,
                     op: str, nonce: str, t_ds: str, t_dc: str, t_dp: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        operation = Operation.parse(op)
        base = _event(pk_ds, "grant_consent", dataset.key, "rejected", [operation],
                      owner=pk_ds, controller=pk_dc, processor=pk_dp)
        payload = grant_payload(dataset, pk_dp, operation, nonce)
        if not (verify(pk_ds, payload, t_ds) and verify(pk_dc, payload, t_dc) and verify(pk_dp, payload, t_dp)):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(pk_ds, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        dataset_record = self._dataset_record(stub, dataset)
        if dataset_record is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)
        if not dataset_record.policy.allows(pk_dp, operation):
            raise self._reject(ReasonCode.POLICY.value, base)

        key = dataset.log_key(pk_dp)
        existing = self._load(stub, key)
        token = derive_token(stub.tx_id, "grant")
        if existing is None:
            record = LogRecord(
                owner=pk_ds, controller=pk_dc, processor=pk_dp, pk_enc=pk_enc,
                access_token=token, issued_at=stub.tx_timestamp, scope=[operation],
                expires_in=float(self.token_lifetime_s), refresh_count=1,
            )
        else:
            record = existing.model_copy(update={
                "access_token": token,
                "issued_at": stub.tx_timestamp,
                "status": RecordStatus.APPROVED,
                "scope": _sorted_scope(list(existing.scope) + [operation]),
                "expires_in": float(self.token_lifetime_s),
            })
        self._store(stub, record, existing.access_token if existing else None)
        event = _event(pk_ds, "grant_consent", dataset.key, "accepted", record.scope,
                       owner=pk_ds, controller=pk_dc, processor=pk_dp)
        return {"verdict": "accepted", "access_token": token, "record_key": key, "event": event}

    @contract_function("RecordRevoke")
    def record_revoke(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, pk_dp: str,
                      op: str, nonce: str, signer: str, t: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        operation = Operation.parse(op)
        base = _event(signer, "revoke_consent", dataset.key, "rejected", [operation],
                      owner=pk_ds, controller=pk_dc, processor=pk_dp)
        if signer not in (pk_ds, pk_dc):
            raise self._reject(ReasonCode.NOT_HOLDER.value, base)
        if not verify(signer, revoke_payload(dataset, pk_dp, operation, nonce), t):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(signer, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        if self._dataset_record(stub, dataset) is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)

        key = dataset.log_key(pk_dp)
        existing = self._load(stub, key)
        token = None
        scope: List[Operation] = []
        if existing is not None and pk_dp != pk_ds:
            token = derive_token(stub.tx_id, "revoke")
            record = existing.model_copy(update={
                "access_token": token,
                "issued_at": stub.tx_timestamp,
                "scope": [s for s in existing.scope if s != operation],
                "expires_in": float(self.token_lifetime_s),
            })
            self._store(stub, record, existing.access_token)
            scope = record.scope
        event = _event(signer, "revoke_consent", dataset.key, "accepted", scope,
                       owner=pk_ds, controller=pk_dc, processor=pk_dp)
        return {"verdict": "accepted", "access_token": token, "event": event}

    # -- token lifecycle -----------------------------------------------------

    @contract_function("TokenValidation")
    def token_validation(self, stub: ContractStub, access_token: str, pk: str,
                         signature: str, op: str) -> Dict[str, Any]:
        what = str(op).lower()
        base = _event(pk, what, "", "rejected")
        if not verify(pk, validation_payload(access_token, what), signature):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        try:
            record_key = stub.get_state(token_key(access_token))
        except ValueError:
            record_key = None
        record = self._load(stub, record_key) if record_key else None
        if record is None:
            raise self._reject(ReasonCode.UNKNOWN_TOKEN.value, base)

        operation = Operation.parse(op)
        base = _event(pk, what, record.dataset_key, "rejected", record.scope,
                      owner=record.owner, controller=record.controller, processor=record.processor)
        now = stub.tx_timestamp
        remaining = record.expires_in - (now - record.issued_at) / 1000.0

        if pk in (record.owner, record.controller):
            updated = record.model_copy(update={
                "issued_at": now, "operation": operation, "expires_in": float(self.token_lifetime_s),
            })
        else:
            if pk != record.processor:
                raise self._reject(ReasonCode.NOT_HOLDER.value, base)
            if record.status is not RecordStatus.APPROVED:
                raise self._reject(ReasonCode.NOT_APPROVED.value, base)
            if operation not in record.scope:
                raise self._reject(ReasonCode.SCOPE_MISS.value, base)
            if remaining <= 0:
                raise self._reject(ReasonCode.EXPIRED.value, base)
            updated = record.model_copy(update={
                "issued_at": now, "operation": operation, "expires_in": round(remaining, 3),
            })

        stub.put_state(updated.key, updated.to_state())
        event = {**base, "verdict": "accepted"}
        return {"verdict": "accepted", "dataset_key": record.dataset_key, "event": event}

    @contract_function("TokenRefresh")
    def token_refresh(self, stub: ContractStub, record_key: str, pk: str,
                      nonce: str, signature: str) -> Dict[str, Any]:
        base = _event(pk, "token_refresh", "", "rejected")
        if not verify(pk, refresh_payload(record_key, nonce), signature):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(pk, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        if not record_key.startswith(LOG_PREFIX + KEY_SEPARATOR):
            raise self._reject(ReasonCode.UNKNOWN.value, base)
        record = self._load(stub, record_key)
        if record is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)
        base = _event(pk, "token_refresh", record.dataset_key, "rejected", record.scope,
                      owner=record.owner, controller=record.controller, processor=record.processor)
        if pk not in record.holders():
            raise self._reject(ReasonCode.NOT_HOLDER.value, base)
        if record.status is not RecordStatus.APPROVED:
            raise self._reject(ReasonCode.NOT_APPROVED.value, base)

        refreshed = record.model_copy(update={
            "access_token": derive_token(stub.tx_id, "refresh"),
            "issued_at": stub.tx_timestamp,
            "expires_in": float(self.token_lifetime_s),
            "refresh_count": record.refresh_count + 1,
        })
        self._store(stub, refreshed, record.access_token)
        event = {**base, "verdict": "accepted"}
        return {"verdict": "accepted", "access_token": refreshed.access_token,
                "refresh_count": refreshed.refresh_count, "event": event}

    @contract_function("AuthorizeErasure")
    def authorize_erasure(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str,
                          pointer_digest: str, nonce: str, pk: str, signature: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        base = _event(pk, "erase", dataset.key, "rejected", owner=pk_ds, controller=pk_dc)
        if not verify(pk, erase_payload(dataset, pointer_digest, nonce), signature):
            raise self._reject(ReasonCode.SIGNATURE.value, base)
        if not stub.spend_nonce(pk, nonce):
            raise self._reject(ReasonCode.REPLAYED_NONCE.value, base)
        if pk != pk_ds:
            raise self._reject(ReasonCode.NOT_OWNER.value, base)
        if self._dataset_record(stub, dataset) is None:
            raise self._reject(ReasonCode.UNKNOWN.value, base)

        prefix = KEY_SEPARATOR.join((LOG_PREFIX, pk_ds, pk_dc)) + KEY_SEPARATOR
        closed = 0
        for key, value in stub.get_state_by_prefix(prefix):
            record = LogRecord.from_state(value)
            if record.pk_enc != pk_enc:
                continue
            stub.del_state(token_key(record.access_token))
            stub.put_state(key, record.model_copy(update={"status": RecordStatus.REJECTED}).to_state())
            closed += 1
        logger.info("Erasure authorised for %s, %d token records closed", dataset.key[:24], closed)
        event = _event(pk, "erase", dataset.key, "accepted", owner=pk_ds, controller=pk_dc)
        return {"verdict": "accepted", "dataset_key": dataset.key, "pointer_digest": pointer_digest,
                "closed_records": closed, "event": event}

    @contract_function("GetRecord", read_only=True)
    def get_record(self, stub: ContractStub, record_key: str) -> Dict[str, Any]:
        record = self._load(stub, record_key)
        if record is None:
            raise ContractRejectedError(ReasonCode.UNKNOWN.value)
        return {"verdict": "success", "record": record.model_dump(mode="json")}
