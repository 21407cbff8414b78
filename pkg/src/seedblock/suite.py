"""Pluggable signature / key-wrap / AEAD suite.

Only behaviour matters to the rest of the package: keypairs that both sign and
receive wrapped keys, an authenticated symmetric cipher, and a fingerprint.
The default realisation is RSA-PSS + RSA-OAEP (SHA-256) with AES-256-GCM.
"""

from __future__ import annotations

import hashlib
import os
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

_NONCE = 12


@lru_cache(maxsize=256)
def _public(der: bytes):
    return serialization.load_der_public_key(der)


@lru_cache(maxsize=256)
def _private(der: bytes):
    return serialization.load_der_private_key(der, password=None)


class RsaSuite:
    name = "rsa-pss-oaep-aesgcm"
    data_key_len = 32

    def __init__(self, key_bits: int = 2048):
        self.key_bits = key_bits
        self._pss = padding.PSS(mgf=padding.MGF1(hashes.SHA256()),
                                salt_length=padding.PSS.DIGEST_LENGTH)
        self._oaep = padding.OAEP(mgf=padding.MGF1(hashes.SHA256()),
                                  algorithm=hashes.SHA256(), label=None)

    def generate_keypair(self) -> tuple[bytes, bytes]:
        """Return ``(public_der, private_der)``."""
        key = rsa.generate_private_key(public_exponent=65537, key_size=self.key_bits)
        pub = key.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo)
        priv = key.private_bytes(
            serialization.Encoding.DER, serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption())
        return pub, priv

    def public_of(self, private_der: bytes) -> bytes:
        return _private(private_der).public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo)

    def is_keypair(self, public_der: bytes, private_der: bytes) -> bool:
        try:
            return self.public_of(private_der) == public_der
        except (ValueError, TypeError):
            return False

    def sign(self, private_der: bytes, message: bytes) -> bytes:
        return _private(private_der).sign(message, self._pss, hashes.SHA256())

    def verify(self, public_der: bytes, signature: bytes, message: bytes) -> bool:
        try:
            key = _public(bytes(public_der))
            if not isinstance(key, rsa.RSAPublicKey):
                return False
            key.verify(signature, message, self._pss, hashes.SHA256())
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True

    def wrap(self, public_der: bytes, data_key: bytes) -> bytes:
        return _public(public_der).encrypt(data_key, self._oaep)

    def unwrap(self, private_der: bytes, wrapped: bytes) -> bytes:
        """Raises ValueError when the blob was not wrapped to this key."""
        return _private(private_der).decrypt(wrapped, self._oaep)

    def new_data_key(self) -> bytes:
        return AESGCM.generate_key(bit_length=8 * self.data_key_len)

    def seal(self, key: bytes, plaintext: bytes, aad: bytes = b"") -> bytes:
        nonce = os.urandom(_NONCE)
        return nonce + AESGCM(key).encrypt(nonce, plaintext, aad)

    def open(self, key: bytes, sealed: bytes, aad: bytes = b"") -> bytes:
        """Raises ValueError on any authentication failure."""
        if len(sealed) < _NONCE + 16:
            raise ValueError("sealed body too short")
        try:
            return AESGCM(key).decrypt(sealed[:_NONCE], sealed[_NONCE:], aad)
        except InvalidTag as exc:
            raise ValueError("authentication tag mismatch") from exc

    @staticmethod
    def fingerprint(public_der: bytes) -> str:
        return hashlib.sha256(public_der).hexdigest()


DEFAULT_SUITE = RsaSuite()
