"""Client-side facade over the simulated deployment.

Each consent operation is submitted to ``3A_cc`` and then recorded on the
log channel by its ``log_cc`` companion, which re-checks the same
signatures against the committed 3A state. Token validation, refresh and
erasure authorisation are log transactions on their own.
"""

import json
import logging
import secrets
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from consent_ledger.contracts import build_registry
from consent_ledger.contracts.payloads import (
    access_payload, encode_ops, erase_payload, grant_payload, refresh_payload,
    registration_payload, revoke_payload, upload_payload, validation_payload
)
from consent_ledger.core.config import NetworkConfig, settings
from consent_ledger.core.crypto import encrypt, generate_keypair
from consent_ledger.core.encoding import sha256_hex
from consent_ledger.core.errors import (
    AlreadyRegisteredError, ChainUnavailableError, ContractRejectedError, PartialCommitError, RecordNotFoundError
)
from consent_ledger.ledger.chain import Ledger
from consent_ledger.models.identity import KeyPair, KeyPurpose, Role
from consent_ledger.models.ledger import ChainVerdict, TxStatus
from consent_ledger.models.network import TxOutcome, Verdict
from consent_ledger.models.records import (
    CHANNELS, DEFAULT_DC_OPERATIONS, LOG_CHANNEL, LOG_CONTRACT, THREE_A_CHANNEL, THREE_A_CONTRACT,
    THREE_A_PREFIX, KEY_SEPARATOR, AccessGrant, AuditEntry, ConsentReceipt, DatasetRef, LogRecord,
    Operation, ThreeARecord, ValidationVerdict
)
from consent_ledger.network.simulator import Network
from consent_ledger.services.audit import audit_query
from consent_ledger.services.wallets import Wallet

logger = logging.getLogger(__name__)

Signer = Union[Wallet, str]

COMPANION_ATTEMPTS = 3


def _body(outcome: TxOutcome) -> Dict[str, Any]:
    try:
        body = json.loads(outcome.response) if outcome.response else {}
    except ValueError:
        body = {}
    return body if isinstance(body, dict) else {}


def _new_nonce() -> str:
    return secrets.token_hex(16)


class ConsentPlatform:
    """One deployment: network, contracts and the clock the parties share."""

    def __init__(
        self,
        config: Optional[NetworkConfig] = None,
        token_lifetime_s: Optional[int] = None,
        origin_ms: Optional[int] = None,
    ):
        self.config = config or NetworkConfig(seed=settings.seed)
        self.token_lifetime_s = token_lifetime_s or settings.token_lifetime_s
        self.registry = build_registry(self.token_lifetime_s)
        if origin_ms is None:
            origin_ms = settings.genesis_time_ms or int(time.time() * 1000)
        self.network = Network(self.config, self.registry, origin_ms)
        self.gateway = Wallet("gateway", Role.EXTERNAL)

    # -- clock ---------------------------------------------------------------

    def now_ms(self) -> int:
        return self.network.clock.now_ms()

    def advance(self, seconds: float) -> None:
        """Let simulated time pass."""
        self.network.advance(seconds * 1000.0)

    def advance_to(self, timestamp_ms: int) -> None:
        self.network.advance_to_ms(timestamp_ms)

    # -- submission ----------------------------------------------------------

    def _submit(
        self,
        submitter: Wallet,
        contract: str,
        function: str,
        args: Sequence[str],
        read_only: bool = False,
    ) -> TxOutcome:
        if not read_only:
            self.ledger.require_intact()
        if not submitter.can_sign:
            submitter = self.gateway
        proposal = self.network.propose(submitter.signing, contract, function, args, read_only)
        outcome = self.network.call(proposal)
        if outcome.verdict is Verdict.TIMEOUT:
            raise ChainUnavailableError(f"{contract}.{function} timed out")
        return outcome

    def _find_committed(self, function: str, args: Sequence[str]) -> Optional[TxOutcome]:
        """The committed log transaction carrying exactly these arguments, if any."""
        args = tuple(args)
        for block in reversed(self.ledger.channel(LOG_CHANNEL).blocks):
            for tx in block.txs:
                if (tx.contract == LOG_CONTRACT and tx.function == function and tx.args == args
                        and tx.status is TxStatus.SUCCESS):
                    return TxOutcome(tx_id=tx.tx_id, verdict=Verdict.SUCCESS, status=TxStatus.SUCCESS,
                                     response=tx.response, height=block.height)
        return None

    def _record_companion(
        self,
        submitter: Wallet,
        companion: str,
        args: Sequence[str],
        operation: str,
        outcome: TxOutcome,
    ) -> TxOutcome:
        """Submit the log companion of ``outcome``, resubmitting after a timeout.

        A timed-out companion may still commit later; its resubmission then
        fails on the spent nonce or on read-set validation, and the earlier
        commit is looked up on the chain instead.
        """
        timed_out = False
        for attempt in range(1, COMPANION_ATTEMPTS + 1):
            try:
                log_outcome = self._submit(submitter, LOG_CONTRACT, companion, args)
            except ChainUnavailableError:
                timed_out = True
                logger.warning("%s timed out (attempt %d of %d)", companion, attempt, COMPANION_ATTEMPTS)
                continue
            if timed_out and not log_outcome.ok:
                committed = self._find_committed(companion, args)
                if committed is not None:
                    logger.info("%s found committed as tx %s", companion, committed.tx_id[:16])
                    return committed
            return log_outcome

        if outcome.ok:
            raise PartialCommitError(operation, outcome.tx_id)
        raise ChainUnavailableError(f"{LOG_CONTRACT}.{companion} timed out")

    def _consent_operation(
        self,
        operation: str,
        submitter: Wallet,
        function: str,
        companion: str,
        args: Sequence[str],
    ) -> ConsentReceipt:
        """Run a 3A operation followed by its log companion."""
        outcome = self._submit(submitter, THREE_A_CONTRACT, function, args)
        log_outcome = self._record_companion(submitter, companion, args, operation, outcome)
        body, log_body = _body(outcome), _body(log_outcome)

        reason = None
        if not outcome.ok:
            reason = outcome.reason or body.get("reason")
        elif not log_outcome.ok:
            reason = log_outcome.reason or log_body.get("reason")

        record = ThreeARecord.model_validate(body["record"]) if outcome.ok and "record" in body else None
        receipt = ConsentReceipt(
            operation=operation,
            accepted=outcome.ok and log_outcome.ok,
            reason=reason,
            dataset_key=body.get("dataset_key"),
            access_token=log_body.get("access_token"),
            record=record,
            tx_id=outcome.tx_id,
            log_tx_id=log_outcome.tx_id,
        )
        if receipt.accepted:
            logger.info("%s committed (tx %s)", operation, outcome.tx_id[:16])
        else:
            logger.warning("%s rejected: %s", operation, reason)
        return receipt

    @staticmethod
    def _signature(party: Signer, payload: bytes, override: Optional[str]) -> str:
        if override is not None:
            return override
        if isinstance(party, Wallet):
            return party.sign(payload)
        return ""

    @staticmethod
    def _pk(party: Signer) -> str:
        return party.pk if isinstance(party, Wallet) else party

    # -- 3A operations -------------------------------------------------------

    def register(
        self,
        ds: Wallet,
        dc: Wallet,
        dc_ops: Iterable[Operation] = DEFAULT_DC_OPERATIONS,
        enc: Optional[KeyPair] = None,
        nonce: Optional[str] = None,
        t_ds: Optional[str] = None,
        t_dc: Optional[str] = None,
    ) -> ConsentReceipt:
        """Register a dataset; the DS creates its data-pointer keypair and shares it with the DC."""
        enc = enc or generate_keypair(KeyPurpose.ENC)
        dataset = DatasetRef(pk_ds=ds.pk, pk_dc=dc.pk, pk_enc=enc.public_hex)
        ops = encode_ops(dc_ops)
        nonce = nonce or _new_nonce()
        payload = registration_payload(dataset, ops, nonce)
        args = (
            dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, ops, nonce,
            self._signature(ds, payload, t_ds), self._signature(dc, payload, t_dc),
        )
        receipt = self._consent_operation("registration", ds, "Registration", "RecordRegistration", args)
        if receipt.reason == "already_registered":
            raise AlreadyRegisteredError(dataset.key)
        if receipt.accepted:
            if enc.has_private:
                ds.receive_enc_key(enc)
                ds.share_enc_key(dataset.pk_enc, dc)
        return receipt

    def upload(
        self,
        dataset: DatasetRef,
        uploader: Wallet,
        profile_id: str,
        data_hash: str,
        nonce: Optional[str] = None,
        signature: Optional[str] = None,
    ) -> ConsentReceipt:
        """Record the encrypted pointer and content hash of an uploaded dataset."""
        if self.get_record(dataset) is None:
            raise RecordNotFoundError(dataset.key)
        en_pointer = encrypt(dataset.pk_enc, profile_id).hex
        nonce = nonce or _new_nonce()
        payload = upload_payload(dataset, uploader.pk, en_pointer, data_hash, nonce)
        args = (
            dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, uploader.pk, en_pointer, data_hash, nonce,
            self._signature(uploader, payload, signature),
        )
        return self._consent_operation("data_upload", uploader, "DataUpload", "RecordUpload", args)

    def grant(
        self,
        dataset: DatasetRef,
        ds: Signer,
        dc: Signer,
        dp: Signer,
        op: Union[Operation, str],
        nonce: Optional[str] = None,
        t_ds: Optional[str] = None,
        t_dc: Optional[str] = None,
        t_dp: Optional[str] = None,
    ) -> ConsentReceipt:
        """Grant ``op`` to a DP; all three parties sign the same request."""
        if self.get_record(dataset) is None:
            raise RecordNotFoundError(dataset.key)
        operation = Operation.parse(op)
        nonce = nonce or _new_nonce()
        pk_dp = self._pk(dp)
        payload = grant_payload(dataset, pk_dp, operation, nonce)
        args = (
            dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, pk_dp, operation.value, nonce,
            self._signature(ds, payload, t_ds),
            self._signature(dc, payload, t_dc),
            self._signature(dp, payload, t_dp),
        )
        submitter = next((p for p in (ds, dc, dp) if isinstance(p, Wallet) and p.can_sign), self.gateway)
        receipt = self._consent_operation("grant_consent", submitter, "GrantConsent", "RecordGrant", args)
        if receipt.accepted and isinstance(ds, Wallet) and isinstance(dp, Wallet):
            if ds.holds_enc_key(dataset.pk_enc) and not dp.holds_enc_key(dataset.pk_enc):
                ds.share_enc_key(dataset.pk_enc, dp)
        return receipt

    def revoke(
        self,
        dataset: DatasetRef,
        signer: Signer,
        dp: Signer,
        op: Union[Operation, str],
        nonce: Optional[str] = None,
        signature: Optional[str] = None,
    ) -> ConsentReceipt:
        """Withdraw ``op`` from a DP; either the DS or the DC may sign."""
        if self.get_record(dataset) is None:
            raise RecordNotFoundError(dataset.key)
        operation = Operation.parse(op)
        nonce = nonce or _new_nonce()
        pk_dp = self._pk(dp)
        payload = revoke_payload(dataset, pk_dp, operation, nonce)
        args = (
            dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, pk_dp, operation.value, nonce,
            self._pk(signer), self._signature(signer, payload, signature),
        )
        submitter = signer if isinstance(signer, Wallet) else self.gateway
        return self._consent_operation("revoke_consent", submitter, "RevokeConsent", "RecordRevoke", args)

    def data_access(
        self,
        dataset: DatasetRef,
        dp: Signer,
        op: Union[Operation, str],
        nonce: Optional[str] = None,
        signature: Optional[str] = None,
    ) -> AccessGrant:
        """Ask 3A_cc for the encrypted pointer and the caller's current token."""
        operation = Operation.parse(op)
        nonce = nonce or _new_nonce()
        pk_dp = self._pk(dp)
        payload = access_payload(dataset, pk_dp, operation, nonce)
        args = (
            dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, pk_dp, operation.value, nonce,
            self._signature(dp, payload, signature),
        )
        submitter = dp if isinstance(dp, Wallet) else self.gateway
        outcome = self._submit(submitter, THREE_A_CONTRACT, "DataAccess", args, read_only=True)
        body = _body(outcome)
        if not outcome.ok:
            return AccessGrant(accepted=False, reason=outcome.reason or body.get("reason"), tx_id=outcome.tx_id)
        return AccessGrant(
            accepted=True,
            en_pointer=body.get("en_pointer") or None,
            access_token=body.get("access_token") or None,
            tx_id=outcome.tx_id,
        )

    def policy_check(self, dataset: DatasetRef, pk: str, op: Union[Operation, str]) -> str:
        """'allowed' or 'denied'."""
        outcome = self._submit(
            self.gateway, THREE_A_CONTRACT, "PolicyCheck",
            (dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, pk, Operation.parse(op).value),
            read_only=True,
        )
        return _body(outcome).get("decision", "denied")

    # -- log operations ------------------------------------------------------

    def validate_token(
        self,
        access_token: str,
        holder: Signer,
        op: Union[Operation, str],
        signature: Optional[str] = None,
        submitter: Optional[Wallet] = None,
    ) -> ValidationVerdict:
        """Submit a token validation; accepted and rejected calls are both logged."""
        op_text = op.value if isinstance(op, Operation) else str(op).lower()
        signature = self._signature(holder, validation_payload(access_token, op_text), signature)
        outcome = self._submit(
            submitter or self.gateway, LOG_CONTRACT, "TokenValidation",
            (access_token, self._pk(holder), signature, op_text),
        )
        body = _body(outcome)
        if outcome.ok:
            return ValidationVerdict.accept(dataset_key=body.get("dataset_key"), tx_id=outcome.tx_id)
        return ValidationVerdict.reject(outcome.reason or body.get("reason") or "unknown", tx_id=outcome.tx_id)

    def refresh_token(
        self,
        record_key: str,
        holder: Wallet,
        nonce: Optional[str] = None,
        signature: Optional[str] = None,
    ) -> str:
        """Re-issue the token of a log record; returns the new token."""
        nonce = nonce or _new_nonce()
        signature = self._signature(holder, refresh_payload(record_key, nonce), signature)
        outcome = self._submit(holder, LOG_CONTRACT, "TokenRefresh", (record_key, holder.pk, nonce, signature))
        body = _body(outcome)
        if not outcome.ok:
            raise ContractRejectedError(outcome.reason or body.get("reason") or "unknown")
        return body["access_token"]

    def authorize_erasure(
        self,
        dataset: DatasetRef,
        pointer_digest: str,
        pk: str,
        signature: str,
        nonce: str,
        submitter: Optional[Wallet] = None,
    ) -> ConsentReceipt:
        """Record the DS's erasure request; closes every token of the dataset."""
        outcome = self._submit(
            submitter or self.gateway, LOG_CONTRACT, "AuthorizeErasure",
            (dataset.pk_ds, dataset.pk_dc, dataset.pk_enc, pointer_digest, nonce, pk, signature),
        )
        body = _body(outcome)
        return ConsentReceipt(
            operation="erase",
            accepted=outcome.ok,
            reason=None if outcome.ok else outcome.reason or body.get("reason"),
            dataset_key=dataset.key,
            log_tx_id=outcome.tx_id,
        )

    def sign_erasure(self, dataset: DatasetRef, ds: Wallet, profile_id: str) -> Dict[str, str]:
        """The DS side of an erase request: digest, nonce and signature."""
        pointer_digest = sha256_hex(profile_id)
        nonce = _new_nonce()
        return {
            "pk": ds.pk,
            "nonce": nonce,
            "signature": ds.sign(erase_payload(dataset, pointer_digest, nonce)),
        }

    async def erase(self, server, dataset: DatasetRef, ds: Wallet, profile_id: str,
                    key_holders: Iterable[Wallet] = ()):
        """Right to be forgotten: the RS deletes the profile, then every party throws away sk_enc."""
        request = self.sign_erasure(dataset, ds, profile_id)
        response = await server.erase(profile_id, dataset, **request)
        if response.ok:
            for wallet in {id(w): w for w in (ds, *key_holders)}.values():
                wallet.destroy_enc_key(dataset.pk_enc)
        return response

    # -- reads ---------------------------------------------------------------

    @property
    def ledger(self) -> Ledger:
        return self.network.reference_ledger()

    def get_record(self, dataset: DatasetRef) -> Optional[ThreeARecord]:
        value = self.ledger.get_state(THREE_A_CHANNEL, dataset.key)
        return ThreeARecord.from_state(value) if value is not None else None

    def log_record(self, dataset: DatasetRef, pk: str) -> Optional[LogRecord]:
        value = self.ledger.get_state(LOG_CHANNEL, dataset.log_key(pk))
        return LogRecord.from_state(value) if value is not None else None

    def datasets(self) -> List[DatasetRef]:
        prefix = THREE_A_PREFIX + KEY_SEPARATOR
        state = self.ledger.channel(THREE_A_CHANNEL).world_state
        return [DatasetRef.from_key(key) for key in sorted(state) if key.startswith(prefix)]

    def audit_query(self, **filters: Any) -> List[AuditEntry]:
        return audit_query(self.ledger, **filters)

    def verify_chain(self, channel: Optional[str] = None) -> Dict[str, ChainVerdict]:
        names = [channel] if channel else list(CHANNELS)
        return {name: self.ledger.verify_chain(name) for name in names}

    # -- persistence ---------------------------------------------------------

    def save(self, data_dir: Path) -> None:
        """Write each channel's chain as NDJSON under ``data_dir/chain``."""
        chain_dir = Path(data_dir) / "chain"
        chain_dir.mkdir(parents=True, exist_ok=True)
        for channel, text in self.network.exports(self.ledger).items():
            (chain_dir / f"{channel}.ndjson").write_text(text, encoding="utf-8")

    @classmethod
    def open(
        cls,
        data_dir: Path,
        config: Optional[NetworkConfig] = None,
        token_lifetime_s: Optional[int] = None,
        origin_ms: Optional[int] = None,
    ) -> "ConsentPlatform":
        """Load a deployment saved by ``save``; the clock resumes after the last transaction."""
        chain_dir = Path(data_dir) / "chain"
        exports = {
            channel: (chain_dir / f"{channel}.ndjson").read_text(encoding="utf-8")
            for channel in CHANNELS
            if (chain_dir / f"{channel}.ndjson").is_file()
        }
        scratch = Ledger()
        for channel, text in exports.items():
            scratch.import_chain(channel, text)
        last = max(
            (tx.submitted_at for name in scratch.channel_names
             for block in scratch.channel(name).blocks for tx in block.txs),
            default=None,
        )
        if origin_ms is None:
            origin_ms = settings.genesis_time_ms or int(time.time() * 1000)
        if last is not None:
            origin_ms = max(origin_ms, last + 1)

        platform = cls(config=config, token_lifetime_s=token_lifetime_s, origin_ms=origin_ms)
        platform.network.load_chains(exports)
        return platform

