"""Canonical payloads that parties sign for each contract operation."""

from typing import Iterable, Optional

from pydantic import BaseModel

from consent_ledger.core.encoding import length_prefixed
from consent_ledger.models.records import DatasetRef, Operation


def signing_payload(operation: str, *parts: str) -> bytes:
    """Length-prefixed [operation, *parts]; callers pass the nonce last."""
    return length_prefixed((operation,) + tuple(parts))


def encode_ops(ops: Iterable[Operation]) -> str:
    return ",".join(sorted({Operation(op).value for op in ops}))


def decode_ops(text: str) -> list:
    return [Operation.parse(op) for op in text.split(",") if op.strip()]


def registration_payload(ds: DatasetRef, dc_ops: str, nonce: str) -> bytes:
    return signing_payload("registration", ds.pk_ds, ds.pk_dc, ds.pk_enc, dc_ops, nonce)


def upload_payload(ds: DatasetRef, uploader: str, en_pointer: str, data_hash: str, nonce: str) -> bytes:
    return signing_payload("data_upload", ds.pk_ds, ds.pk_dc, ds.pk_enc, uploader, en_pointer, data_hash, nonce)


def grant_payload(ds: DatasetRef, pk_dp: str, op: Operation, nonce: str) -> bytes:
    return signing_payload("grant_consent", ds.pk_ds, ds.pk_dc, ds.pk_enc, pk_dp, Operation(op).value, nonce)


def revoke_payload(ds: DatasetRef, pk_dp: str, op: Operation, nonce: str) -> bytes:
    return signing_payload("revoke_consent", ds.pk_ds, ds.pk_dc, ds.pk_enc, pk_dp, Operation(op).value, nonce)


def access_payload(ds: DatasetRef, pk_dp: str, op: Operation, nonce: str) -> bytes:
    return signing_payload("data_access", ds.pk_ds, ds.pk_dc, ds.pk_enc, pk_dp, Operation(op).value, nonce)


def validation_payload(access_token: str, op: str) -> bytes:
    """What the ``signature`` parameter of a resource server call covers."""
    return signing_payload("token_validation", access_token, str(op).lower())


def refresh_payload(record_key: str, nonce: str) -> bytes:
    return signing_payload("token_refresh", record_key, nonce)


def erase_payload(ds: DatasetRef, pointer_digest: str, nonce: str) -> bytes:
    return signing_payload("erase", ds.pk_ds, ds.pk_dc, ds.pk_enc, pointer_digest, nonce)


class ConsentRequest(BaseModel):
    """A grant request co-signed by the DS, DC and the requesting DP."""

    dataset: DatasetRef
    pk_dp: str
    op: Operation
    nonce: str
    t_ds: Optional[str] = None
    t_dc: Optional[str] = None
    t_dp: Optional[str] = None

    def payload(self) -> bytes:
        return grant_payload(self.dataset, self.pk_dp, self.op, self.nonce)

    def args(self) -> tuple:
        return (
            self.dataset.pk_ds, self.dataset.pk_dc, self.dataset.pk_enc, self.pk_dp,
            self.op.value, self.nonce, self.t_ds or "", self.t_dc or "", self.t_dp or "",
        )
