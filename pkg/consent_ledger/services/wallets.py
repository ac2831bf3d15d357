"""Party wallets: a signing keypair plus the data-pointer keys shared with the party."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

from consent_ledger.core.crypto import decrypt, generate_keypair, sign
from consent_ledger.core.errors import DecryptionError, MalformedKeyError
from consent_ledger.models.identity import CipherText, KeyPair, KeyPurpose, Role

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KeyHandoff:
    """One out-of-band transfer of an sk_enc between parties."""

    pk_enc: str
    sender: str
    recipient: str


class Wallet:
    """Keys one party (DS, DC, DP or RS) holds."""

    def __init__(self, name: str, role: Role, signing: Optional[KeyPair] = None):
        self.name = name
        self.role = Role(role)
        self.signing = signing or generate_keypair(KeyPurpose.SIGN)
        self._enc_keys: Dict[str, KeyPair] = {}
        self._destroyed: List[str] = []
        self.handoffs: List[KeyHandoff] = []

    def __repr__(self) -> str:
        return f"Wallet({self.name!r}, {self.role.value}, pk={self.pk[:12]}...)"

    @property
    def pk(self) -> str:
        return self.signing.public_hex

    @property
    def can_sign(self) -> bool:
        return self.signing.has_private

    def sign(self, message: Union[bytes, str]) -> str:
        if not self.signing.has_private:
            raise MalformedKeyError(f"{self.name} holds no signing private key")
        return sign(self.signing, message).hex

    # -- data-pointer keys -------------------------------------------------

    def holds_enc_key(self, pk_enc: str) -> bool:
        return pk_enc in self._enc_keys

    def enc_key(self, pk_enc: str) -> KeyPair:
        try:
            return self._enc_keys[pk_enc]
        except KeyError:
            raise DecryptionError(f"{self.name} holds no key for {pk_enc[:12]}")

    def receive_enc_key(self, enc: KeyPair, sender: Optional["Wallet"] = None) -> None:
        if not enc.has_private:
            raise MalformedKeyError("a shared data-pointer key must include sk_enc")
        self._enc_keys[enc.public_hex] = enc
        if sender is not None:
            handoff = KeyHandoff(pk_enc=enc.public_hex, sender=sender.pk, recipient=self.pk)
            self.handoffs.append(handoff)
            sender.handoffs.append(handoff)

    def share_enc_key(self, pk_enc: str, recipient: "Wallet") -> None:
        """Hand sk_enc to another party over the secure side channel."""
        recipient.receive_enc_key(self.enc_key(pk_enc), sender=self)
        logger.info("%s shared data-pointer key %s with %s", self.name, pk_enc[:12], recipient.name)

    def destroy_enc_key(self, pk_enc: str) -> bool:
        """Throw away sk_enc; returns whether the wallet held it."""
        removed = self._enc_keys.pop(pk_enc, None) is not None
        if removed:
            self._destroyed.append(pk_enc)
            logger.info("%s destroyed data-pointer key %s", self.name, pk_enc[:12])
        return removed

    @property
    def enc_keys(self) -> List[KeyPair]:
        return list(self._enc_keys.values())

    @property
    def destroyed_keys(self) -> List[str]:
        return list(self._destroyed)

    def decrypt(self, pk_enc: str, ciphertext: Union[CipherText, bytes, str]) -> bytes:
        return decrypt(self.enc_key(pk_enc), ciphertext)

    def decrypt_pointer(self, pk_enc: str, en_pointer: str) -> str:
        return self.decrypt(pk_enc, en_pointer).decode("utf-8")

    def private_material(self) -> List[bytes]:
        """Every private key this wallet holds."""
        keys = [key.private_key for key in self._enc_keys.values()]
        if self.signing.has_private:
            keys.append(self.signing.private_key)
        return keys
