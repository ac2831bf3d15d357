"""Actor workflows over a deployment persisted in one data directory.

The CLI and the MCP tools are thin adapters over ``Deployment``: every
method loads the parties from key fixtures, runs one platform operation
and persists the chains and key holdings it changed.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from consent_ledger.contracts.payloads import decode_ops, grant_payload, validation_payload
from consent_ledger.core.config import NetworkConfig, settings
from consent_ledger.core.errors import MalformedKeyError, RecordNotFoundError, ValidationError
from consent_ledger.models.profile import ApiRequest, ProfileDocument
from consent_ledger.models.records import DEFAULT_DC_OPERATIONS, DatasetRef, Operation
from consent_ledger.services.audit import export_ndjson
from consent_ledger.services.fixtures import Keyring, load_key, load_wallet
from consent_ledger.services.platform import ConsentPlatform
from consent_ledger.services.resource_server import ResourceServer
from consent_ledger.services.wallets import Wallet

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class Deployment:
    """Platform, resource server and keyring sharing ``data_dir``."""

    def __init__(
        self,
        data_dir: Optional[PathLike] = None,
        config: Optional[NetworkConfig] = None,
        token_lifetime_s: Optional[int] = None,
        origin_ms: Optional[int] = None,
    ):
        self.data_dir = Path(data_dir or settings.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.platform = ConsentPlatform.open(self.data_dir, config, token_lifetime_s, origin_ms)
        self.server = ResourceServer(self.platform, store_path=self.data_dir / "rs.sqlite")
        self.keyring = Keyring(self.data_dir / "keyring")

    def save(self) -> None:
        self.platform.save(self.data_dir)

    # -- parties -------------------------------------------------------------

    def wallet(self, path: PathLike, role: Optional[str] = None) -> Wallet:
        return self.keyring.load_into(load_wallet(path, role))

    def _processor(self, path: PathLike) -> Wallet:
        """A DP wallet; a ``.pub`` file resolves to the ``.key`` beside it."""
        path = Path(path)
        fixture = load_key(path)
        if fixture.private_key is None:
            sibling = path.with_suffix(".key")
            if not sibling.is_file():
                raise MalformedKeyError(f"{path} holds no private key and {sibling.name} is missing")
            path = sibling
        return self.wallet(path, "dp")

    def _persist(self, *wallets: Wallet) -> None:
        for wallet in wallets:
            self.keyring.persist(wallet)

    def dataset(self, dataset_key: Optional[str] = None, party: Optional[str] = None) -> DatasetRef:
        """The dataset named by ``dataset_key``, or the only one ``party`` appears in."""
        if dataset_key:
            dataset = DatasetRef.from_key(dataset_key)
            if self.platform.get_record(dataset) is None:
                raise RecordNotFoundError(dataset_key)
            return dataset

        every = self.platform.datasets()
        candidates = [d for d in every if party is None or self._involves(d, party)]
        if not candidates:
            candidates = every
        if len(candidates) != 1:
            raise ValidationError("dataset", f"{len(candidates)} datasets match; pass the dataset key")
        return candidates[0]

    def _involves(self, dataset: DatasetRef, pk: str) -> bool:
        record = self.platform.get_record(dataset)
        if record is None:
            return False
        return pk in (record.owner, record.controller) or any(
            record.policy.allows(pk, op) for op in Operation
        )

    # -- workflows -----------------------------------------------------------

    def register(self, ds_path: PathLike, dc_path: PathLike, dc_ops: Optional[str] = None,
                 enc_path: Optional[PathLike] = None) -> Dict[str, Any]:
        ds, dc = self.wallet(ds_path, "ds"), self.wallet(dc_path, "dc")
        ops = decode_ops(dc_ops) if dc_ops else DEFAULT_DC_OPERATIONS
        enc = load_key(enc_path, require_private=True).to_keypair() if enc_path else None
        receipt = self.platform.register(ds, dc, ops, enc=enc)
        self._persist(ds, dc)
        self.save()
        return {
            **receipt.model_dump(exclude={"record"}),
            "pk_enc": receipt.dataset.pk_enc if receipt.dataset else None,
        }

    async def upload(self, uploader_path: PathLike, profile_id: str, attributes: Dict[str, Any],
                     dataset_key: Optional[str] = None) -> Dict[str, Any]:
        """Store the profile on the resource server, then record its pointer and hash on-chain."""
        uploader = self.wallet(uploader_path)
        dataset = self.dataset(dataset_key, uploader.pk)
        response = await self._call_rs(uploader, dataset, Operation.CREATE, profile_id, attributes)
        if not response.get("accepted"):
            self.save()
            return response

        document = ProfileDocument.model_validate(response["body"])
        receipt = self.platform.upload(dataset, uploader, profile_id, document.content_hash)
        self.save()
        return {
            **receipt.model_dump(exclude={"record"}),
            "profile_id": profile_id,
            "content_hash": document.content_hash,
            "audit_ref": response["audit_ref"],
        }

    def grant(self, ds_path: PathLike, dc_path: PathLike, dp_path: PathLike, op: str,
              dataset_key: Optional[str] = None, dp_signature: Optional[str] = None,
              nonce: Optional[str] = None) -> Dict[str, Any]:
        """Grant ``op``; the DP signs with its own key, or supplies ``dp_signature`` over ``nonce``."""
        ds, dc = self.wallet(ds_path, "ds"), self.wallet(dc_path, "dc")
        dataset = self.dataset(dataset_key, ds.pk)
        if dp_signature is not None:
            if not nonce:
                raise ValidationError("nonce", "a detached DP signature needs the nonce it covers")
            dp: Union[Wallet, str] = load_key(dp_path).public_key
        else:
            dp = self._processor(dp_path)
        receipt = self.platform.grant(dataset, ds, dc, dp, op, nonce=nonce, t_dp=dp_signature)
        self._persist(ds, dc, *([dp] if isinstance(dp, Wallet) else []))
        self.save()
        return receipt.model_dump(exclude={"record"})

    @staticmethod
    def grant_request(dataset: DatasetRef, dp: Wallet, op: str, nonce: str) -> str:
        """The DP's detached signature over a grant request."""
        return dp.sign(grant_payload(dataset, dp.pk, Operation.parse(op), nonce))

    def revoke(self, signer_path: PathLike, dp_path: PathLike, op: str,
               dataset_key: Optional[str] = None) -> Dict[str, Any]:
        signer = self.wallet(signer_path)
        dataset = self.dataset(dataset_key, signer.pk)
        pk_dp = load_key(dp_path).public_key
        receipt = self.platform.revoke(dataset, signer, pk_dp, op)
        self.save()
        return receipt.model_dump(exclude={"record"})

    async def access(self, dp_path: PathLike, op: str, dataset_key: Optional[str] = None,
                     payload: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Obtain pointer and token, then call the resource server when sk_enc is held."""
        dp = self.wallet(dp_path)
        dataset = self.dataset(dataset_key, dp.pk)
        return await self._call_rs(dp, dataset, Operation.parse(op), None, payload)

    async def _call_rs(self, party: Wallet, dataset: DatasetRef, operation: Operation,
                       profile_id: Optional[str], payload: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        grant = self.platform.data_access(dataset, party, operation)
        result: Dict[str, Any] = {"dataset_key": dataset.key, "operation": operation.value, **grant.model_dump()}
        if not grant.accepted:
            self.save()
            return result

        if profile_id is None:
            if not (grant.en_pointer and party.holds_enc_key(dataset.pk_enc)):
                self.save()
                return result
            profile_id = party.decrypt_pointer(dataset.pk_enc, grant.en_pointer)

        token = grant.access_token or ""
        request = ApiRequest(
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
        response = await self.server.handle(request)
        self.save()
        return {
            **result,
            "accepted": response.ok,
            "reason": None if response.ok else (response.body or {}).get("reason"),
            "status": response.status.value,
            "body": response.body,
            "audit_ref": response.audit_ref,
        }

    def validate(self, holder_path: PathLike, token: str, op: str) -> Dict[str, Any]:
        holder = self.wallet(holder_path)
        verdict = self.platform.validate_token(token, holder, op, submitter=holder)
        self.save()
        return {**verdict.model_dump(), "accepted": verdict.accepted}

    def refresh(self, holder_path: PathLike, dataset_key: Optional[str] = None) -> Dict[str, Any]:
        holder = self.wallet(holder_path)
        dataset = self.dataset(dataset_key, holder.pk)
        # Owner and controller share the controller record.
        subject = dataset.pk_dc if holder.pk in (dataset.pk_ds, dataset.pk_dc) else holder.pk
        token = self.platform.refresh_token(dataset.log_key(subject), holder)
        self.save()
        return {"accepted": True, "dataset_key": dataset.key, "access_token": token}

    def audit(self, **filters: Any) -> Dict[str, Any]:
        entries = self.platform.audit_query(**{k: v for k, v in filters.items() if v is not None})
        return {
            "count": len(entries),
            "entries": [entry.model_dump() for entry in entries],
            "ndjson": export_ndjson(entries),
        }

    def verify_chain(self, channel: Optional[str] = None) -> Dict[str, Any]:
        verdicts = self.platform.verify_chain(channel)
        return {
            "ok": all(v.ok for v in verdicts.values()),
            "channels": {name: v.model_dump() for name, v in verdicts.items()},
        }

    async def erase(self, ds_path: PathLike, profile_id: str, dataset_key: Optional[str] = None,
                    holders: Iterable[PathLike] = ()) -> Dict[str, Any]:
        """Right to be forgotten: RS deletion, then every stored copy of sk_enc is destroyed."""
        ds = self.wallet(ds_path, "ds")
        dataset = self.dataset(dataset_key, ds.pk)
        others = [self.wallet(path) for path in holders]
        response = await self.platform.erase(self.server, dataset, ds, profile_id, others)
        destroyed = 0
        if response.ok:
            self._persist(ds, *others)
            destroyed = self.keyring.destroy(dataset.pk_enc)
        self.save()
        return {
            "accepted": response.ok,
            "reason": None if response.ok else (response.body or {}).get("reason"),
            "dataset_key": dataset.key,
            "profile_id": profile_id,
            "audit_ref": response.audit_ref,
            "destroyed_key_copies": destroyed,
        }

    def stats(self) -> Dict[str, Any]:
        ledger = self.platform.ledger
        return {
            "heights": ledger.heights(),
            "datasets": len(self.platform.datasets()),
            "rs_mutations": self.server.mutation_count,
            "now_ms": self.platform.now_ms(),
        }


_deployment: Optional[Deployment] = None


def get_deployment() -> Deployment:
    """Process-wide deployment behind the MCP server."""
    global _deployment
    if _deployment is None:
        _deployment = Deployment()
    return _deployment


def set_deployment(deployment: Optional[Deployment]) -> None:
    global _deployment
    _deployment = deployment
