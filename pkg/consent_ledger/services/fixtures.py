"""Key fixture files and the wallets built from them."""

import json
import logging
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError as PydanticValidationError

from consent_ledger.core.crypto import generate_keypair
from consent_ledger.core.errors import MalformedKeyError
from consent_ledger.models.identity import KeyFixture, KeyPair, KeyPurpose, Role
from consent_ledger.services.wallets import Wallet

logger = logging.getLogger(__name__)

ROLE_NAMES = {"ds": Role.DS, "dc": Role.DC, "dp": Role.DP, "rs": Role.EXTERNAL}


def save_key(path: Union[str, Path], keypair: KeyPair, role: str, include_private: bool = True) -> Path:
    """Write ``keypair`` as a JSON fixture; private files are created 0600."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fixture = KeyFixture.from_keypair(keypair, role, include_private=include_private)
    path.write_text(fixture.model_dump_json(indent=2, exclude_none=True) + "\n", encoding="utf-8")
    if include_private and keypair.has_private:
        path.chmod(0o600)
    return path


def load_key(path: Union[str, Path], require_private: bool = False) -> KeyFixture:
    """Read a JSON fixture, or a bare 64-character hex public key."""
    path = Path(path)
    if not path.is_file():
        raise MalformedKeyError(f"key file not found: {path}")

    text = path.read_text(encoding="utf-8").strip()
    try:
        if text.startswith("{"):
            fixture = KeyFixture.model_validate(json.loads(text))
        else:
            fixture = KeyFixture(public_key=text, role=path.stem)
    except (ValueError, PydanticValidationError) as e:
        raise MalformedKeyError(f"{path}: {e}")

    if require_private and fixture.private_key is None:
        raise MalformedKeyError(f"{path} holds no private key")
    return fixture


def keygen(out_dir: Union[str, Path], name: str, role: str = "dp") -> dict:
    """Create ``<name>.key`` (private) and ``<name>.pub`` (public) in ``out_dir``."""
    out_dir = Path(out_dir)
    purpose = KeyPurpose.ENC if role == "enc" else KeyPurpose.SIGN
    keypair = generate_keypair(purpose)
    private_path = save_key(out_dir / f"{name}.key", keypair, role)
    public_path = save_key(out_dir / f"{name}.pub", keypair, role, include_private=False)
    logger.info("Generated %s key %s", role, name)
    return {"role": role, "public_key": keypair.public_hex, "key": str(private_path), "pub": str(public_path)}


def load_wallet(path: Union[str, Path], role: Optional[str] = None, require_private: bool = True) -> Wallet:
    """A wallet around the signing key in ``path``."""
    fixture = load_key(path, require_private=require_private)
    if fixture.purpose is not KeyPurpose.SIGN:
        raise MalformedKeyError(f"{path} is not a signing key")
    role_name = (role or fixture.role).lower()
    return Wallet(Path(path).stem, ROLE_NAMES.get(role_name, Role.EXTERNAL), fixture.to_keypair())


def load_public(path: Union[str, Path]) -> str:
    return load_key(path).public_key


class Keyring:
    """Data-pointer keys each party holds, kept between CLI invocations.

    Layout: ``<root>/<holder pk>/<pk_enc>.key``.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def _holder_dir(self, holder_pk: str) -> Path:
        return self.root / holder_pk

    def load_into(self, wallet: Wallet) -> Wallet:
        holder_dir = self._holder_dir(wallet.pk)
        if holder_dir.is_dir():
            for path in sorted(holder_dir.glob("*.key")):
                wallet.receive_enc_key(load_key(path, require_private=True).to_keypair())
        return wallet

    def persist(self, wallet: Wallet) -> None:
        """Write the wallet's current data-pointer keys; drop the ones it destroyed."""
        holder_dir = self._holder_dir(wallet.pk)
        for enc in wallet.enc_keys:
            path = holder_dir / f"{enc.public_hex}.key"
            if not path.exists():
                save_key(path, enc, "enc")
        for pk_enc in wallet.destroyed_keys:
            (holder_dir / f"{pk_enc}.key").unlink(missing_ok=True)

    def holders(self, pk_enc: str) -> list:
        return sorted(path.parent.name for path in self.root.glob(f"*/{pk_enc}.key"))

    def destroy(self, pk_enc: str) -> int:
        """Delete every party's copy of sk_enc; returns how many were removed."""
        removed = 0
        for path in self.root.glob(f"*/{pk_enc}.key"):
            path.unlink()
            removed += 1
        if removed:
            logger.info("Destroyed %d copies of data-pointer key %s", removed, pk_enc[:12])
        return removed
