"""Seed blocks and the XOR encode/decode transform.

A client's seed block is ``A = r XOR C_id`` where ``r`` is a random block drawn
at registration and ``C_id`` is the client label hash-expanded to the same
length.  Files are encoded as ``z' = z XOR A`` with ``A`` tiled cyclically, and
decoding is the same transform.  The XOR encoding is a recovery mechanism, not
encryption.
"""

from __future__ import annotations

import hashlib
import secrets
import struct
from dataclasses import dataclass

from ._kernel import BACKEND, xor_tile
from .errors import InvalidArgument

SEED_LEN = 256
DIGEST_LEN = 32

MAGIC = b"SBA1"
FORMAT_VERSION = 1
# magic, format_version, client_ref, payload_length, source_digest
_HEADER = struct.Struct(">4sB32sQ32s")
HEADER_LEN = _HEADER.size
DIGEST_OFFSET = HEADER_LEN - DIGEST_LEN

__all__ = [
    "SEED_LEN", "SeedBlock", "EncodedFile", "FileObject", "BACKEND",
    "digest", "client_ref", "derive_client_id", "new_seed_random",
    "make_seed_block", "xor_encode", "xor_decode", "xor_bytes",
]


def digest(data) -> bytes:
    return hashlib.sha256(data).digest()


def client_ref(label: str) -> bytes:
    """32-byte reference identifying a client everywhere a label is not wanted."""
    if not label:
        raise InvalidArgument("client label must be non-empty")
    return hashlib.sha256(label.encode("utf-8")).digest()


def derive_client_id(label: str, seed_len: int = SEED_LEN) -> bytes:
    """Hash-expand ``label`` into a ``seed_len``-byte client id (SHAKE-256)."""
    if not label:
        raise InvalidArgument("client label must be non-empty")
    return hashlib.shake_256(b"sba/cid\x00" + label.encode("utf-8")).digest(seed_len)


def new_seed_random(seed_len: int = SEED_LEN) -> bytes:
    return secrets.token_bytes(seed_len)


@dataclass(frozen=True)
class SeedBlock:
    bytes: bytes
    client_ref: bytes = b""

    def __len__(self):
        return len(self.bytes)


@dataclass(frozen=True)
class FileObject:
    file_id: str
    name: str
    bytes: bytes

    @property
    def digest(self) -> bytes:
        return digest(self.bytes)


def xor_bytes(a, b) -> bytes:
    """Bytewise XOR of two equal-length strings."""
    if len(a) != len(b):
        raise InvalidArgument(f"length mismatch: {len(a)} != {len(b)}")
    if not a:
        return b""
    return xor_tile(a, b)


def make_seed_block(r: bytes, cid: bytes, *, seed_len: int = SEED_LEN,
                    ref: bytes = b"") -> SeedBlock:
    if len(r) != seed_len or len(cid) != seed_len:
        raise InvalidArgument(
            f"seed inputs must be {seed_len} bytes (got r={len(r)}, cid={len(cid)})")
    return SeedBlock(xor_tile(r, cid), ref)


def _seed_bytes(seed, seed_len):
    raw = seed.bytes if isinstance(seed, SeedBlock) else seed
    if seed_len is not None and len(raw) != seed_len:
        raise InvalidArgument(f"seed block must be {seed_len} bytes, got {len(raw)}")
    if not raw:
        raise InvalidArgument("seed block must not be empty")
    return raw


def xor_encode(data, seed, *, seed_len: int | None = SEED_LEN) -> bytes:
    """``out[i] = data[i] ^ seed[i % len(seed)]``; output length equals input length."""
    return xor_tile(data, _seed_bytes(seed, seed_len))


def xor_decode(encoded, seed, *, seed_len: int | None = SEED_LEN) -> bytes:
    # XOR is an involution
    return xor_tile(encoded, _seed_bytes(seed, seed_len))


@dataclass(frozen=True)
class EncodedFile:
    """The ``z'`` container held by the remote server.

    Layout (big-endian): ``b"SBA1"``, version u8, client_ref[32],
    payload_length u64, source_digest[32], payload.
    """

    client_ref: bytes
    source_digest: bytes
    payload: bytes
    file_id: str = ""
    format_version: int = FORMAT_VERSION

    @classmethod
    def encode(cls, body, seed, ref: bytes, file_id: str = "",
               *, seed_len: int | None = SEED_LEN) -> "EncodedFile":
        return cls(ref, digest(body), xor_encode(body, seed, seed_len=seed_len), file_id)

    def decode(self, seed, *, seed_len: int | None = SEED_LEN) -> bytes:
        return xor_decode(self.payload, seed, seed_len=seed_len)

    @property
    def payload_length(self) -> int:
        return len(self.payload)

    def to_bytes(self) -> bytes:
        if len(self.client_ref) != 32 or len(self.source_digest) != DIGEST_LEN:
            raise InvalidArgument("client_ref and source_digest must be 32 bytes")
        header = _HEADER.pack(MAGIC, self.format_version, self.client_ref,
                              len(self.payload), self.source_digest)
        return header + self.payload

    @classmethod
    def from_bytes(cls, raw, file_id: str = "") -> "EncodedFile":
        raw = bytes(raw)
        if len(raw) < HEADER_LEN:
            raise InvalidArgument("truncated container header")
        magic, version, ref, length, src = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise InvalidArgument(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise InvalidArgument(f"unsupported format version {version}")
        payload = raw[HEADER_LEN:]
        if len(payload) != length:
            raise InvalidArgument(
                f"payload length {len(payload)} does not match header {length}")
        return cls(ref, src, payload, file_id, version)

    @staticmethod
    def read_header(raw) -> tuple:
        """(magic, version, client_ref, payload_length, source_digest) without the payload."""
        return _HEADER.unpack_from(raw)
