"""The 3A contract: authentication, authorization and access control per dataset."""

import logging
from typing import Any, Dict, Optional

from consent_ledger.contracts.payloads import (
    access_payload, decode_ops, grant_payload, registration_payload, revoke_payload, upload_payload
)
from consent_ledger.contracts.runtime import Contract, ContractStub, contract_function
from consent_ledger.core.crypto import verify
from consent_ledger.core.errors import ContractRejectedError
from consent_ledger.models.records import (
    ALL_OPERATIONS, LOG_CHANNEL, THREE_A_CHANNEL, THREE_A_CONTRACT,
    AccessPolicy, DatasetRef, LogRecord, Operation, ReasonCode, ThreeARecord, log_key
)

logger = logging.getLogger(__name__)

_HEX = set("0123456789abcdef")


def _require_hex(value: str, length: Optional[int] = None) -> str:
    if set(value) - _HEX or (length is not None and len(value) != length):
        raise ValueError("expected lowercase hex")
    return value


class ThreeAContract(Contract):
    """Registration, upload bookkeeping, consent grant/revoke and access checks."""

    name = THREE_A_CONTRACT
    channel = THREE_A_CHANNEL

    def _load(self, stub: ContractStub, dataset: DatasetRef) -> ThreeARecord:
        value = stub.get_state(dataset.key)
        if value is None:
            raise ContractRejectedError(ReasonCode.UNKNOWN.value, f"no dataset {dataset.key}")
        return ThreeARecord.from_state(value)

    @staticmethod
    def _reply(record: ThreeARecord, **extra: Any) -> Dict[str, Any]:
        return {"verdict": "success", "dataset_key": record.dataset.key, "record": record.model_dump(mode="json"), **extra}

    @contract_function("Registration")
    def registration(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str,
                     dc_ops: str, nonce: str, t_ds: str, t_dc: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        payload = registration_payload(dataset, dc_ops, nonce)
        if not (verify(pk_ds, payload, t_ds) and verify(pk_dc, payload, t_dc)):
            raise ContractRejectedError(ReasonCode.SIGNATURE.value)
        if stub.get_state(dataset.key) is not None:
            raise ContractRejectedError("already_registered")
        if not stub.spend_nonce(pk_ds, nonce):
            raise ContractRejectedError(ReasonCode.REPLAYED_NONCE.value)

        policy = AccessPolicy()
        for op in ALL_OPERATIONS:
            policy = policy.with_member(op, pk_ds)
        for op in decode_ops(dc_ops):
            policy = policy.with_member(op, pk_dc)

        record = ThreeARecord(
            owner=pk_ds, controller=pk_dc, pk_enc=pk_enc, policy=policy, timestamp=stub.tx_timestamp
        )
        stub.put_state(dataset.key, record.to_state())
        logger.info("Registered dataset %s", dataset.key[:24])
        return self._reply(record)

    @contract_function("DataUpload")
    def data_upload(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, uploader: str,
                    en_pointer: str, data_hash: str, nonce: str, t_uploader: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        record = self._load(stub, dataset)
        if uploader not in (record.owner, record.controller):
            raise ContractRejectedError(ReasonCode.NOT_HOLDER.value, "only the DS or DC may upload")
        if not verify(uploader, upload_payload(dataset, uploader, en_pointer, data_hash, nonce), t_uploader):
            raise ContractRejectedError(ReasonCode.SIGNATURE.value)
        if not stub.spend_nonce(uploader, nonce):
            raise ContractRejectedError(ReasonCode.REPLAYED_NONCE.value)

        record = record.model_copy(update={
            "en_pointer": _require_hex(en_pointer),
            "hash": _require_hex(data_hash, 64),
            "timestamp": stub.tx_timestamp,
        })
        stub.put_state(dataset.key, record.to_state())
        return self._reply(record)

    @contract_function("GrantConsent")
    def grant_consent(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, pk_dp: str,
                      op: str, nonce: str, t_ds: str, t_dc: str, t_dp: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        operation = Operation.parse(op)
        payload = grant_payload(dataset, pk_dp, operation, nonce)
        s1 = verify(pk_ds, payload, t_ds)
        s2 = verify(pk_dc, payload, t_dc)
        s3 = verify(pk_dp, payload, t_dp)
        if not (s1 and s2 and s3):
            raise ContractRejectedError(ReasonCode.SIGNATURE.value)

        record = self._load(stub, dataset)
        if not stub.spend_nonce(pk_ds, nonce):
            raise ContractRejectedError(ReasonCode.REPLAYED_NONCE.value)
        record = record.model_copy(update={
            "policy": record.policy.with_member(operation, pk_dp),
            "timestamp": stub.tx_timestamp,
        })
        stub.put_state(dataset.key, record.to_state())
        return self._reply(record)

    @contract_function("RevokeConsent")
    def revoke_consent(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, pk_dp: str,
                       op: str, nonce: str, signer: str, t: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        operation = Operation.parse(op)
        if signer not in (pk_ds, pk_dc):
            raise ContractRejectedError(ReasonCode.NOT_HOLDER.value, "only the DS or DC may revoke")
        if not verify(signer, revoke_payload(dataset, pk_dp, operation, nonce), t):
            raise ContractRejectedError(ReasonCode.SIGNATURE.value)

        record = self._load(stub, dataset)
        if not stub.spend_nonce(signer, nonce):
            raise ContractRejectedError(ReasonCode.REPLAYED_NONCE.value)
        policy = record.policy
        # The DS keeps every right on its own dataset.
        if pk_dp != record.owner:
            policy = policy.without_member(operation, pk_dp)
        record = record.model_copy(update={"policy": policy, "timestamp": stub.tx_timestamp})
        stub.put_state(dataset.key, record.to_state())
        return self._reply(record)

    @contract_function("DataAccess", read_only=True)
    def data_access(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str, pk_dp: str,
                    op: str, nonce: str, t_dp: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        operation = Operation.parse(op)
        if not verify(pk_dp, access_payload(dataset, pk_dp, operation, nonce), t_dp):
            raise ContractRejectedError(ReasonCode.SIGNATURE.value)
        record = self._load(stub, dataset)
        if not record.policy.allows(pk_dp, operation):
            raise ContractRejectedError(ReasonCode.POLICY.value)

        token = self._token_for(stub, record, pk_dp)
        return {"verdict": "success", "en_pointer": record.en_pointer, "access_token": token}

    def _token_for(self, stub: ContractStub, record: ThreeARecord, pk: str) -> str:
        value = stub.get_cross_channel_state(
            LOG_CHANNEL, log_key(record.owner, record.controller, pk, record.pk_enc)
        )
        if value is None and pk in (record.owner, record.controller):
            value = stub.get_cross_channel_state(
                LOG_CHANNEL, log_key(record.owner, record.controller, record.controller, record.pk_enc)
            )
        return LogRecord.from_state(value).access_token if value is not None else ""

    @contract_function("PolicyCheck", read_only=True)
    def policy_check(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str,
                     pk: str, op: str) -> Dict[str, Any]:
        dataset = DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc)
        value = stub.get_state(dataset.key)
        if value is None:
            return {"verdict": "success", "decision": "denied", "reason": ReasonCode.UNKNOWN.value}
        allowed = ThreeARecord.from_state(value).policy.allows(pk, Operation.parse(op))
        return {"verdict": "success", "decision": "allowed" if allowed else "denied"}

    @contract_function("GetRecord", read_only=True)
    def get_record(self, stub: ContractStub, pk_ds: str, pk_dc: str, pk_enc: str) -> Dict[str, Any]:
        record = self._load(stub, DatasetRef(pk_ds=pk_ds, pk_dc=pk_dc, pk_enc=pk_enc))
        return self._reply(record)
