"""Off-chain profile store gated by on-chain token validation.

The server is honest but curious: it executes a CRUD call only after the
log contract accepts the caller's token for that operation, and it never
holds any party's private key or sk_enc. Clients decrypt the on-chain
pointer themselves and send the profile id in the request path.
"""

import asyncio
import logging
from collections import Counter
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any, AsyncIterator, Dict, Optional

from sqlalchemy.engine import Engine

from consent_ledger.core.config import settings
from consent_ledger.core.database import create_store_engine, get_session
from consent_ledger.core.encoding import sha256_hex
from consent_ledger.core.errors import ChainUnavailableError, DocumentNotFoundError, RecordNotFoundError
from consent_ledger.models.profile import ApiRequest, ApiResponse, ApiStatus, ProfileDocument, ProfileRow
from consent_ledger.models.identity import Role
from consent_ledger.models.records import WRITE_OPERATIONS, DatasetRef, Operation
from consent_ledger.services.wallets import Wallet

logger = logging.getLogger(__name__)


class ResourceServer:
    """The ``/ProfileManagement`` API over a SQLite document store."""

    def __init__(self, platform, engine: Optional[Engine] = None, store_path: Optional[Path] = None):
        self.platform = platform
        self.engine = engine or create_store_engine(store_path)
        self.identity = Wallet("resource-server", Role.EXTERNAL)
        self.api_endpoint = settings.rs_api_endpoint
        self.mutation_count = 0
        self._locks: Dict[str, asyncio.Lock] = {}
        self._lock_users: Counter = Counter()
        self._chain_lock = asyncio.Lock()

    # -- chain ---------------------------------------------------------------

    async def _validate(self, req: ApiRequest):
        params = req.params
        async with self._chain_lock:
            return self.platform.validate_token(
                params.get("token", ""),
                params.get("pubkey", ""),
                params.get("operation", ""),
                signature=params.get("signature", ""),
                submitter=self.identity,
            )

    # -- store ---------------------------------------------------------------

    def _load_row(self, profile_id: str) -> Optional[ProfileRow]:
        with get_session(self.engine) as session:
            row = session.get(ProfileRow, profile_id)
            if row is not None:
                session.expunge(row)
            return row

    def get_document(self, profile_id: str) -> ProfileDocument:
        row = self._load_row(profile_id)
        if row is None:
            raise DocumentNotFoundError(profile_id)
        return row.to_document()

    def _save(self, document: ProfileDocument, dataset_key: str) -> None:
        with get_session(self.engine) as session:
            session.merge(ProfileRow.from_document(document, dataset_key))
        self.mutation_count += 1

    def _delete(self, profile_id: str) -> bool:
        with get_session(self.engine) as session:
            row = session.get(ProfileRow, profile_id)
            if row is None:
                return False
            session.delete(row)
        self.mutation_count += 1
        return True

    # -- locks ---------------------------------------------------------------

    @asynccontextmanager
    async def _profile_lock(self, profile_id: str) -> AsyncIterator[None]:
        """Serialise work on one profile; the lock is dropped once nobody holds or awaits it."""
        lock = self._locks.setdefault(profile_id, asyncio.Lock())
        self._lock_users[profile_id] += 1
        try:
            async with lock:
                yield
        finally:
            self._lock_users[profile_id] -= 1
            if not self._lock_users[profile_id]:
                del self._lock_users[profile_id]
                del self._locks[profile_id]

    # -- API -----------------------------------------------------------------

    def _precondition(self, req: ApiRequest) -> Optional[ApiResponse]:
        """Refuse a write that cannot apply before a token validation is spent on it."""
        if req.missing_params() or not req.api_endpoint.startswith(self.api_endpoint):
            return None
        try:
            operation = Operation.parse(req.params["operation"])
        except ValueError:
            return None
        if operation not in WRITE_OPERATIONS:
            return None
        exists = self._load_row(req.profile_id) is not None
        if operation is Operation.CREATE and exists:
            return ApiResponse.error("conflict")
        if operation is not Operation.CREATE and not exists:
            return ApiResponse.error("not_found")
        return None

    async def handle(self, req: ApiRequest) -> ApiResponse:
        """Validate the caller's token on-chain, then run the CRUD operation."""
        async with self._profile_lock(req.profile_id):
            refused = self._precondition(req)
            if refused is not None:
                logger.info("Refused %s on %s before validation: %s",
                            req.params.get("operation"), req.profile_id, refused.body["reason"])
                return refused
            return await self._validate_and_execute(req)

    async def _validate_and_execute(self, req: ApiRequest) -> ApiResponse:
        try:
            verdict = await self._validate(req)
        except ChainUnavailableError as e:
            logger.warning("Chain unreachable, denying %s: %s", req.api_endpoint, e)
            return ApiResponse.denied("chain_unavailable")

        audit_ref = verdict.tx_id
        missing = req.missing_params()
        if missing:
            return ApiResponse.error("bad_request", audit_ref, missing=missing)
        if not req.api_endpoint.startswith(self.api_endpoint):
            return ApiResponse.error("bad_request", audit_ref, detail="unknown endpoint")
        if not verdict.accepted:
            logger.warning("Denied %s on %s: %s", req.params.get("operation"), req.profile_id, verdict.reason)
            return ApiResponse.denied(verdict.reason, audit_ref)

        operation = Operation.parse(req.params["operation"])
        return self._execute(operation, req.profile_id, verdict.dataset_key, req.payload, audit_ref)

    def _execute(self, operation: Operation, profile_id: str, dataset_key: str,
                 payload: Optional[Dict[str, Any]], audit_ref: str) -> ApiResponse:
        row = self._load_row(profile_id)

        if operation is Operation.CREATE:
            if row is not None:
                return ApiResponse.error("conflict", audit_ref)
            document = ProfileDocument(profile_id=profile_id, attributes=payload or {})
            self._save(document, dataset_key)
            logger.info("Created profile %s", profile_id)
            return ApiResponse(status=ApiStatus.OK, body=document.model_dump(), audit_ref=audit_ref)

        if row is None:
            return ApiResponse.error("not_found", audit_ref)
        if row.dataset_key != dataset_key:
            return ApiResponse.denied("wrong_dataset", audit_ref)
        document = row.to_document()

        if operation is Operation.READ:
            return ApiResponse(status=ApiStatus.OK, body=document.model_dump(), audit_ref=audit_ref)

        if operation is Operation.UPDATE:
            updated = ProfileDocument(
                profile_id=profile_id,
                attributes={**document.attributes, **(payload or {})},
                version=document.version + 1,
            )
            self._save(updated, dataset_key)
            logger.info("Updated profile %s to version %d", profile_id, updated.version)
            return ApiResponse(status=ApiStatus.OK, body=updated.model_dump(), audit_ref=audit_ref)

        self._delete(profile_id)
        logger.info("Deleted profile %s", profile_id)
        return ApiResponse(status=ApiStatus.OK, body={"deleted": profile_id}, audit_ref=audit_ref)

    async def erase(self, profile_id: str, dataset: DatasetRef, pk: str, signature: str, nonce: str) -> ApiResponse:
        """Hard-delete a profile once the DS's erasure request commits on-chain."""
        pointer_digest = sha256_hex(profile_id)
        try:
            async with self._chain_lock:
                receipt = self.platform.authorize_erasure(
                    dataset, pointer_digest, pk, signature, nonce, submitter=self.identity
                )
        except ChainUnavailableError:
            return ApiResponse.denied("chain_unavailable")

        if not receipt.accepted:
            logger.warning("Erasure of %s denied: %s", profile_id, receipt.reason)
            return ApiResponse.denied(receipt.reason or "rejected", receipt.log_tx_id)

        async with self._profile_lock(profile_id):
            row = self._load_row(profile_id)
            if row is None:
                return ApiResponse.error("not_found", receipt.log_tx_id)
            if row.dataset_key != dataset.key:
                return ApiResponse.denied("wrong_dataset", receipt.log_tx_id)
            self._delete(profile_id)
        logger.info("Erased profile %s", profile_id)
        return ApiResponse(status=ApiStatus.OK, body={"erased": profile_id}, audit_ref=receipt.log_tx_id)

    def integrity_check(self, profile_id: str, dataset: DatasetRef) -> str:
        """'match' when the stored document hashes to the on-chain value."""
        document = self.get_document(profile_id)
        record = self.platform.get_record(dataset)
        if record is None:
            raise RecordNotFoundError(dataset.key)
        return "match" if document.content_hash == record.hash else "mismatch"
