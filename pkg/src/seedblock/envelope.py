"""Provider-side sign-and-encrypt, seeker-side decrypt-and-verify.

``encrypt_message`` draws a fresh data key, seals the message with it (AEAD,
provider id as associated data), wraps the data key to every recipient's
ledger public key and signs the sealed body with the provider's private key.
Wire form::

    b"SBE1" | u32 len | provider_u | u32 count |
    count * (u32 len | seeker_u | u32 len | wrapped) |
    u64 len | body | u32 len | signature
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import (IntegrityFailure, InvalidArgument, NotFound,
                     ProviderAuthenticityFailure, Unauthorized)

MAGIC = b"SBE1"
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


@dataclass(frozen=True)
class Ciphertext:
    provider_u: str
    wrapped_key: tuple  # ((seeker_u, wrapped_bytes), ...)
    body: bytes
    signature: bytes

    def recipients(self) -> list:
        return [u for u, _ in self.wrapped_key]

    def to_bytes(self) -> bytes:
        out = [MAGIC, _lp(self.provider_u.encode("utf-8")), _U32.pack(len(self.wrapped_key))]
        for u, wrapped in self.wrapped_key:
            out += [_lp(u.encode("utf-8")), _lp(wrapped)]
        out += [_U64.pack(len(self.body)), self.body, _lp(self.signature)]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw) -> "Ciphertext":
        raw = bytes(raw)
        if raw[:4] != MAGIC:
            raise InvalidArgument("not an SBE1 envelope")
        pos = 4

        def take(n):
            nonlocal pos
            if n > len(raw) - pos:
                raise InvalidArgument("truncated envelope")
            chunk = raw[pos:pos + n]
            pos += n
            return chunk

        def lp():
            return take(_U32.unpack(take(4))[0])

        try:
            provider = lp().decode("utf-8")
            count = _U32.unpack(take(4))[0]
            wrapped = []
            for _ in range(count):
                u = lp().decode("utf-8")
                wrapped.append((u, lp()))
            body = take(_U64.unpack(take(8))[0])
            sig = lp()
        except UnicodeDecodeError as exc:
            raise InvalidArgument("bad utf-8 in envelope") from exc
        if pos != len(raw):
            raise InvalidArgument("trailing bytes after envelope")
        return cls(provider, tuple(wrapped), body, sig)


def _lp(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


def is_ciphertext(raw) -> bool:
    try:
        Ciphertext.from_bytes(raw)
    except InvalidArgument:
        return False
    return True


def encrypt_message(msg: bytes, provider_token, recipients, admin) -> Ciphertext:
    """Encrypt ``msg`` for ``recipients`` (ledger user ids) on behalf of the provider.

    Raises Unauthorized for an unverified provider token, NotFound for a
    recipient without an active ledger entry and InvalidArgument for an empty
    recipient list.
    """
    suite = admin.suite
    snap = admin.snapshot()
    if not admin.verify_token(provider_token, snap):
        raise Unauthorized("provider token does not verify")
    recipients = list(dict.fromkeys(recipients))
    if not recipients:
        raise InvalidArgument("at least one recipient is required")
    keys = []
    for u in recipients:
        entry = snap.active(u)
        if entry is None:
            raise NotFound(f"recipient {u!r} has no active ledger entry")
        keys.append((u, entry.public_key))
    data_key = suite.new_data_key()
    body = suite.seal(data_key, bytes(msg), provider_token.u.encode("utf-8"))
    wrapped = tuple((u, suite.wrap(pub, data_key)) for u, pub in keys)
    signature = suite.sign(provider_token.private_key, body)
    return Ciphertext(provider_token.u, wrapped, body, signature)


def decrypt_message(c: Ciphertext, seeker_token, admin) -> bytes:
    suite = admin.suite
    snap = admin.snapshot()
    if not admin.verify_token(seeker_token, snap):
        raise Unauthorized("seeker token does not verify")
    wrapped = dict(c.wrapped_key).get(seeker_token.u)
    if wrapped is None:
        raise Unauthorized(f"{seeker_token.u!r} is not a recipient")
    try:
        data_key = suite.unwrap(seeker_token.private_key, wrapped)
        msg = suite.open(data_key, c.body, c.provider_u.encode("utf-8"))
    except ValueError as exc:
        raise IntegrityFailure(f"envelope failed authentication: {exc}") from exc
    if attribute(c, snap, suite) is None:
        raise ProviderAuthenticityFailure(
            f"signature does not verify under {c.provider_u!r}'s ledger key")
    return msg


def attribute(c: Ciphertext, snapshot, suite) -> str | None:
    """The provider a ciphertext is provably from, or None.

    Pure in (ciphertext, ledger snapshot): any key the ledger ever issued to
    ``provider_u`` counts, so data signed before a revocation stays attributable.
    """
    for pub in snapshot.keys_for(c.provider_u):
        if suite.verify(pub, c.signature, c.body):
            return c.provider_u
    return None
