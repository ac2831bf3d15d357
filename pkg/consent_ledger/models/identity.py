"""Key material, signatures, ciphertexts and composite identities."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, Field, field_validator


class KeyPurpose(str, Enum):
    """What a keypair may be used for."""
    SIGN = "sign"
    ENC = "enc"

    def __str__(self):
        return self.value


class Role(str, Enum):
    """Vantage points from which a composite identity is observed."""
    EXTERNAL = "external"
    DS = "ds"
    DC = "dc"
    DP = "dp"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class KeyPair:
    """Raw 32-byte public key plus optional private key."""

    public_key: bytes
    private_key: Optional[bytes] = field(default=None, repr=False)
    purpose: KeyPurpose = KeyPurpose.SIGN

    @property
    def public_hex(self) -> str:
        return self.public_key.hex()

    @property
    def private_hex(self) -> Optional[str]:
        return self.private_key.hex() if self.private_key is not None else None

    @property
    def has_private(self) -> bool:
        return self.private_key is not None

    def public_only(self) -> "KeyPair":
        return KeyPair(public_key=self.public_key, purpose=self.purpose)


@dataclass(frozen=True)
class Signature:
    """Signature bytes and the public key expected to verify them."""

    data: bytes
    signer: bytes

    @property
    def hex(self) -> str:
        return self.data.hex()


@dataclass(frozen=True)
class CipherText:
    """Envelope ciphertext addressed to one encryption public key."""

    data: bytes
    recipient: bytes

    @property
    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, value: str, recipient: bytes = b"") -> "CipherText":
        return cls(data=bytes.fromhex(value), recipient=recipient)


@dataclass(frozen=True)
class ComplexIdentity:
    """The per-dataset 6-tuple of DS, DC and data-pointer keypairs."""

    ds: KeyPair
    dc: KeyPair
    enc: KeyPair

    @property
    def dataset_key(self) -> str:
        from consent_ledger.models.records import three_a_key
        return three_a_key(self.ds.public_hex, self.dc.public_hex, self.enc.public_hex)

    def external(self) -> "ComplexIdentity":
        return ComplexIdentity(self.ds.public_only(), self.dc.public_only(), self.enc.public_only())

    def complete_form(self) -> Tuple[Optional[str], ...]:
        return (
            self.ds.public_hex, self.ds.private_hex,
            self.dc.public_hex, self.dc.private_hex,
            self.enc.public_hex, self.enc.private_hex,
        )


# Ordered element names visible from each role.
VIEW_ELEMENTS: Dict[Role, Tuple[str, ...]] = {
    Role.EXTERNAL: ("pk_ds", "pk_dc", "pk_enc"),
    Role.DS: ("pk_ds", "sk_ds", "pk_dc", "pk_enc", "sk_enc"),
    Role.DC: ("pk_ds", "pk_dc", "sk_dc", "pk_enc", "sk_enc"),
    Role.DP: ("pk_ds", "pk_dc", "pk_enc", "sk_enc"),
}


@dataclass(frozen=True)
class IdentityView:
    """A composite identity projected to one role."""

    role: Role
    keys: Tuple[Tuple[str, str], ...]

    def get(self, name: str) -> Optional[str]:
        return dict(self.keys).get(name)

    def private_elements(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.keys if name.startswith("sk_"))

    def to_dict(self) -> Dict[str, str]:
        return {"role": self.role.value, **dict(self.keys)}


def project_view(ci: ComplexIdentity, role: Role) -> IdentityView:
    """Project a composite identity to the tuple observed by ``role``.

    Elements whose private key is absent from ``ci`` are left out rather
    than filled in.
    """
    available = {
        "pk_ds": ci.ds.public_hex,
        "sk_ds": ci.ds.private_hex,
        "pk_dc": ci.dc.public_hex,
        "sk_dc": ci.dc.private_hex,
        "pk_enc": ci.enc.public_hex,
        "sk_enc": ci.enc.private_hex,
    }
    keys = tuple(
        (name, available[name])
        for name in VIEW_ELEMENTS[Role(role)]
        if available[name] is not None
    )
    return IdentityView(role=Role(role), keys=keys)


class KeyFixture(BaseModel):
    """On-disk key fixture: one keypair per JSON file."""

    public_key: str = Field(..., description="Lowercase hex public key")
    private_key: Optional[str] = Field(None, description="Lowercase hex private key")
    role: str = Field(..., description="Actor role, e.g. ds, dc, dp, enc, rs")
    purpose: KeyPurpose = KeyPurpose.SIGN

    @field_validator("public_key", "private_key")
    @classmethod
    def _hex_key(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return value
        value = value.strip().lower()
        if len(value) != 64:
            raise ValueError("keys are 32 bytes (64 hex characters)")
        bytes.fromhex(value)
        return value

    def to_keypair(self) -> KeyPair:
        return KeyPair(
            public_key=bytes.fromhex(self.public_key),
            private_key=bytes.fromhex(self.private_key) if self.private_key else None,
            purpose=self.purpose,
        )

    @classmethod
    def from_keypair(cls, keypair: KeyPair, role: str, include_private: bool = True) -> "KeyFixture":
        return cls(
            public_key=keypair.public_hex,
            private_key=keypair.private_hex if include_private else None,
            role=role,
            purpose=keypair.purpose,
        )
