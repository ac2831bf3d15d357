"""Signing, verification and envelope encryption primitives.

Signing keys are Ed25519. Data-pointer keys are X25519 and only ever
used for encryption: an ephemeral key agreement derives a key-encryption
key with HKDF-SHA256, which wraps a fresh AES-256 data key, which seals
the payload with AES-GCM. Ciphertext layout::

    version(1) | ephemeral_pub(32) | wrapped_dek(40) | nonce(12) | aead_ct
"""

import logging
import os
from functools import lru_cache
from typing import Union

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.keywrap import InvalidUnwrap, aes_key_unwrap, aes_key_wrap

from consent_ledger.core.errors import DecryptionError, KeyGenerationError, MalformedKeyError
from consent_ledger.models.identity import CipherText, KeyPair, KeyPurpose, Signature

logger = logging.getLogger(__name__)

SUPPORTED_KEY_SIZE = 256
ENVELOPE_VERSION = 1
_HKDF_INFO = b"consent-ledger/envelope/v1"
_EPH_LEN = 32
_WRAPPED_LEN = 40
_NONCE_LEN = 12
_HEADER_LEN = 1 + _EPH_LEN + _WRAPPED_LEN + _NONCE_LEN

KeyLike = Union[bytes, str, KeyPair]
MessageLike = Union[bytes, str]


def _key_bytes(key: KeyLike, private: bool = False) -> bytes:
    if isinstance(key, KeyPair):
        raw = key.private_key if private else key.public_key
        if raw is None:
            raise MalformedKeyError("keypair carries no private key")
        return raw
    if isinstance(key, str):
        try:
            return bytes.fromhex(key)
        except ValueError:
            raise MalformedKeyError("key is not valid hex")
    return bytes(key)


def _message_bytes(message: MessageLike) -> bytes:
    return message.encode("utf-8") if isinstance(message, str) else bytes(message)


def _raw_public(public_key) -> bytes:
    return public_key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def _raw_private(private_key) -> bytes:
    return private_key.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


def generate_keypair(purpose: KeyPurpose = KeyPurpose.SIGN, key_size: int = SUPPORTED_KEY_SIZE) -> KeyPair:
    """Create a fresh keypair for signing or for data-pointer encryption."""
    if key_size != SUPPORTED_KEY_SIZE:
        raise KeyGenerationError(f"unsupported key size {key_size}, expected {SUPPORTED_KEY_SIZE}")
    try:
        if KeyPurpose(purpose) is KeyPurpose.SIGN:
            private_key = Ed25519PrivateKey.generate()
        else:
            private_key = X25519PrivateKey.generate()
    except Exception as e:
        raise KeyGenerationError(str(e))

    return KeyPair(
        public_key=_raw_public(private_key.public_key()),
        private_key=_raw_private(private_key),
        purpose=KeyPurpose(purpose),
    )


def public_key_for(private_key: KeyLike, purpose: KeyPurpose = KeyPurpose.SIGN) -> bytes:
    """Derive the public key matching a raw private key."""
    raw = _key_bytes(private_key, private=True)
    try:
        if KeyPurpose(purpose) is KeyPurpose.SIGN:
            return _raw_public(Ed25519PrivateKey.from_private_bytes(raw).public_key())
        return _raw_public(X25519PrivateKey.from_private_bytes(raw).public_key())
    except ValueError:
        raise MalformedKeyError("private key must be 32 bytes")


def sign(private_key: KeyLike, message: MessageLike) -> Signature:
    """Sign ``message``; the signer field holds the derived public key."""
    raw = _key_bytes(private_key, private=True)
    try:
        key = Ed25519PrivateKey.from_private_bytes(raw)
    except ValueError:
        raise MalformedKeyError("signing key must be 32 bytes")
    return Signature(data=key.sign(_message_bytes(message)), signer=_raw_public(key.public_key()))


@lru_cache(maxsize=65536)
def _verify_raw(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def verify(public_key: KeyLike, message: MessageLike, signature: Union[Signature, bytes, str, None]) -> bool:
    """Return True (accept) or False (reject); malformed input rejects."""
    if signature is None:
        return False
    try:
        pk = _key_bytes(public_key)
        if isinstance(signature, Signature):
            sig = signature.data
        elif isinstance(signature, str):
            sig = bytes.fromhex(signature)
        else:
            sig = bytes(signature)
    except (MalformedKeyError, ValueError, TypeError):
        return False
    return _verify_raw(pk, _message_bytes(message), sig)


def encrypt(pk_enc: KeyLike, plaintext: MessageLike) -> CipherText:
    """Seal ``plaintext`` of any length under an X25519 public key."""
    recipient = _key_bytes(pk_enc)
    try:
        recipient_key = X25519PublicKey.from_public_bytes(recipient)
    except ValueError:
        raise MalformedKeyError("encryption key must be 32 bytes")

    ephemeral = X25519PrivateKey.generate()
    eph_pub = _raw_public(ephemeral.public_key())
    kek = _derive_kek(ephemeral.exchange(recipient_key), eph_pub, recipient)

    dek = AESGCM.generate_key(bit_length=256)
    nonce = os.urandom(_NONCE_LEN)
    sealed = AESGCM(dek).encrypt(nonce, _message_bytes(plaintext), eph_pub)
    blob = bytes([ENVELOPE_VERSION]) + eph_pub + aes_key_wrap(kek, dek) + nonce + sealed
    return CipherText(data=blob, recipient=recipient)


def decrypt(sk_enc: KeyLike, ciphertext: Union[CipherText, bytes, str]) -> bytes:
    """Open an envelope; a wrong key raises DecryptionError."""
    if isinstance(ciphertext, CipherText):
        blob = ciphertext.data
    elif isinstance(ciphertext, str):
        try:
            blob = bytes.fromhex(ciphertext)
        except ValueError:
            raise DecryptionError("ciphertext is not valid hex")
    else:
        blob = bytes(ciphertext)

    if len(blob) < _HEADER_LEN + 16 or blob[0] != ENVELOPE_VERSION:
        raise DecryptionError("ciphertext is truncated or of an unknown version")

    raw = _key_bytes(sk_enc, private=True)
    try:
        private_key = X25519PrivateKey.from_private_bytes(raw)
    except ValueError:
        raise MalformedKeyError("decryption key must be 32 bytes")

    eph_pub = blob[1:1 + _EPH_LEN]
    wrapped = blob[1 + _EPH_LEN:1 + _EPH_LEN + _WRAPPED_LEN]
    nonce = blob[1 + _EPH_LEN + _WRAPPED_LEN:_HEADER_LEN]
    sealed = blob[_HEADER_LEN:]

    try:
        shared = private_key.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        kek = _derive_kek(shared, eph_pub, _raw_public(private_key.public_key()))
        dek = aes_key_unwrap(kek, wrapped)
        return AESGCM(dek).decrypt(nonce, sealed, eph_pub)
    except (InvalidUnwrap, InvalidTag, ValueError):
        raise DecryptionError()


def _derive_kek(shared: bytes, eph_pub: bytes, recipient: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=_HKDF_INFO + eph_pub + recipient,
    ).derive(shared)
