"""Admin side: client registration, token issuance and the member ledger.

The admin keeps an append-only ledger (``ledger.log``) plus a key escrow.  A
token is ``(u, public_key, private_key, rho)`` where ``rho`` is the admin's
signature over ``len(u) || u || public_key``.  As in the original scheme the
admin generates and escrows every private key; treat the admin state
directory as secret material.

Ledger line format (version 1), tab separated, UTF-8::

    #sba-ledger 1
    <kind>\t<name>\t<role>\t<fingerprint>\t<timestamp>\t<signature>

``kind`` is ``client``, ``token`` or ``revoke``.  For clients the fingerprint
field holds the hex client_ref; for tokens the SHA-256 of the public key.
``signature`` is the admin's base64 signature over the preceding five fields
joined by tabs.
"""

from __future__ import annotations

import base64
import enum
import json
import logging
import os
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from types import MappingProxyType

from . import codec
from ._fsutil import atomic_write, fsync_dir, read_bytes
from .errors import (AlreadyIssued, AlreadyRegistered, InvalidArgument,
                     LedgerCorrupt, NotFound, SBAError, Unavailable)
from .suite import DEFAULT_SUITE

log = logging.getLogger(__name__)

LEDGER_HEADER = "#sba-ledger 1"


class Role(str, enum.Enum):
    PROVIDER = "provider"
    SEEKER = "seeker"
    ADMIN = "admin"


def _check_name(name: str, what: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidArgument(f"{what} must be non-empty")
    if any(ord(c) < 0x20 for c in name):
        raise InvalidArgument(f"{what} must not contain control characters")
    return name


def signed_message(u: str, public_key: bytes) -> bytes:
    """Length-prefixed ``u`` so (u, key) boundaries cannot be spliced."""
    ub = u.encode("utf-8")
    return struct.pack(">I", len(ub)) + ub + bytes(public_key)


@dataclass(frozen=True)
class Token:
    u: str
    public_key: bytes
    private_key: bytes
    rho: bytes
    role: Role
    issued_at: float

    def to_json(self) -> str:
        b64 = lambda b: base64.b64encode(b).decode("ascii")  # noqa: E731
        return json.dumps({
            "u": self.u, "role": self.role.value, "issued_at": self.issued_at,
            "public_key": b64(self.public_key), "private_key": b64(self.private_key),
            "rho": b64(self.rho),
        }, indent=1)

    @classmethod
    def from_json(cls, text) -> "Token":
        try:
            d = json.loads(text)
            return cls(
                u=d["u"], role=Role(d["role"]), issued_at=float(d["issued_at"]),
                public_key=base64.b64decode(d["public_key"], validate=True),
                private_key=base64.b64decode(d["private_key"], validate=True),
                rho=base64.b64decode(d["rho"], validate=True),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed token: {exc}") from exc


@dataclass(frozen=True)
class LedgerEntry:
    u: str
    public_key: bytes
    role: Role
    issued_at: float
    revoked: bool = False

    @property
    def fingerprint(self) -> str:
        return DEFAULT_SUITE.fingerprint(self.public_key)


@dataclass(frozen=True)
class ClientRecord:
    label: str
    client_ref: bytes
    cid: bytes
    r: bytes
    registered_at: float
    status: str = "active"

    @property
    def ref_hex(self) -> str:
        return self.client_ref.hex()

    def seed_block(self) -> codec.SeedBlock:
        return codec.make_seed_block(self.r, self.cid, seed_len=len(self.r),
                                     ref=self.client_ref)


@dataclass(frozen=True)
class LedgerSnapshot:
    """Immutable view used by readers (token checks, envelopes)."""

    tokens: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    clients: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    history: tuple = ()  # every LedgerEntry ever issued, for attribution

    def active(self, u: str) -> LedgerEntry | None:
        entry = self.tokens.get(u)
        if entry is None or entry.revoked:
            return None
        return entry

    def keys_for(self, u: str) -> list:
        """Every public key ever issued to ``u`` (revoked included)."""
        return [e.public_key for e in self.history if e.u == u]


class Admin:
    """Registration authority and token ledger.

    Writers (register/issue/revoke) are serialised on one lock; readers take
    :meth:`snapshot`, which is swapped atomically after each write.
    """

    def __init__(self, state_dir, remote=None, suite=None, *,
                 seed_len: int = codec.SEED_LEN, randbytes=None, clock=time.time,
                 fsync: bool = True):
        self.state_dir = os.fspath(state_dir)
        self.remote = remote
        self.suite = suite or DEFAULT_SUITE
        self.seed_len = seed_len
        self._randbytes = randbytes or codec.new_seed_random
        self._clock = clock
        self._fsync = fsync
        self._lock = threading.RLock()
        self._escrow = os.path.join(self.state_dir, "escrow")
        self.ledger_path = os.path.join(self.state_dir, "ledger.log")
        os.makedirs(os.path.join(self._escrow, "clients"), exist_ok=True)
        os.makedirs(os.path.join(self._escrow, "keys"), exist_ok=True)
        self._load_admin_key()
        self._snap = self._replay()

    # -- persistence -------------------------------------------------------

    def _load_admin_key(self):
        path = os.path.join(self.state_dir, "admin.key")
        if os.path.exists(path):
            self._admin_private = read_bytes(path)
            self.public_key = self.suite.public_of(self._admin_private)
        else:
            self.public_key, self._admin_private = self.suite.generate_keypair()
            atomic_write(path, self._admin_private, self._fsync)
            os.chmod(path, 0o600)

    def _key_path(self, fp: str) -> str:
        return os.path.join(self._escrow, "keys", fp + ".json")

    def _r_path(self, ref: bytes) -> str:
        return os.path.join(self._escrow, "clients", ref.hex() + ".r")

    def _line(self, kind, name, role, fp, ts) -> str:
        body = "\t".join([kind, name, role, fp, repr(float(ts))])
        sig = self.suite.sign(self._admin_private, body.encode("utf-8"))
        return body + "\t" + base64.b64encode(sig).decode("ascii")

    def _append(self, line: str) -> None:
        new = not os.path.exists(self.ledger_path)
        with open(self.ledger_path, "a", encoding="utf-8") as fh:
            if new:
                fh.write(LEDGER_HEADER + "\n")
            fh.write(line + "\n")
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())
        if new and self._fsync:
            fsync_dir(self.state_dir)

    def _replay(self) -> LedgerSnapshot:
        tokens, clients, history = {}, {}, []
        if not os.path.exists(self.ledger_path):
            return LedgerSnapshot()
        with open(self.ledger_path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != LEDGER_HEADER:
            raise LedgerCorrupt(f"{self.ledger_path}: missing or unknown header")
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 6:
                raise LedgerCorrupt(f"ledger line {lineno}: expected 6 fields")
            kind, name, role, fp, ts, sig = parts
            body = "\t".join(parts[:5]).encode("utf-8")
            try:
                sig_raw = base64.b64decode(sig, validate=True)
            except ValueError:
                sig_raw = b""
            if not self.suite.verify(self.public_key, sig_raw, body):
                raise LedgerCorrupt(f"ledger line {lineno}: bad admin signature")
            ts = float(ts)
            if kind == "client":
                ref = codec.client_ref(name)
                if ref.hex() != fp:
                    raise LedgerCorrupt(f"ledger line {lineno}: client_ref mismatch")
                r = read_bytes(self._r_path(ref))
                clients[name] = ClientRecord(
                    name, ref, codec.derive_client_id(name, len(r)), r, ts)
            elif kind == "token":
                pub = self._read_escrow(fp)[0]
                if self.suite.fingerprint(pub) != fp:
                    raise LedgerCorrupt(f"ledger line {lineno}: escrowed key missing")
                entry = LedgerEntry(name, pub, Role(role), ts)
                tokens[name] = entry
                history.append(entry)
            elif kind == "revoke":
                cur = tokens.get(name)
                if cur is not None:
                    tokens[name] = replace(cur, revoked=True)
            else:
                raise LedgerCorrupt(f"ledger line {lineno}: unknown kind {kind!r}")
        return LedgerSnapshot(MappingProxyType(tokens), MappingProxyType(clients),
                              tuple(history))

    def _read_escrow(self, fp: str) -> tuple[bytes, bytes]:
        try:
            d = json.loads(read_bytes(self._key_path(fp)))
        except FileNotFoundError:
            return b"", b""
        return base64.b64decode(d["public_key"]), base64.b64decode(d["private_key"])

    def _publish(self, tokens=None, clients=None, history=None):
        s = self._snap
        self._snap = LedgerSnapshot(
            MappingProxyType(tokens if tokens is not None else dict(s.tokens)),
            MappingProxyType(clients if clients is not None else dict(s.clients)),
            history if history is not None else s.history,
        )

    # -- readers -----------------------------------------------------------

    def snapshot(self) -> LedgerSnapshot:
        return self._snap

    def client(self, label: str) -> ClientRecord:
        rec = self._snap.clients.get(label)
        if rec is None:
            raise NotFound(f"client {label!r} is not registered")
        return rec

    def client_by_ref(self, ref: bytes) -> ClientRecord:
        for rec in self._snap.clients.values():
            if rec.client_ref == ref:
                return rec
        raise NotFound(f"no client with ref {ref.hex()[:16]}")

    def clients(self) -> list:
        return sorted(self._snap.clients.values(), key=lambda c: c.label)

    def escrowed_token(self, u: str) -> Token:
        """Re-hand the token to a member who presents their identity (admin escrow)."""
        entry = self._snap.active(u)
        if entry is None:
            raise NotFound(f"no active token for {u!r}")
        pub, priv = self._read_escrow(entry.fingerprint)
        rho = self.suite.sign(self._admin_private, signed_message(u, pub))
        return Token(u, pub, priv, rho, entry.role, entry.issued_at)

    def verify_token(self, t, snapshot: LedgerSnapshot | None = None) -> bool:
        """True iff rho verifies under the admin key and the ledger has a
        matching active entry.  Never raises."""
        try:
            snap = snapshot or self._snap
            if not isinstance(t, Token) or not isinstance(t.u, str):
                return False
            entry = snap.active(t.u)
            if entry is None or entry.public_key != bytes(t.public_key):
                return False
            return self.suite.verify(self.public_key, bytes(t.rho),
                                     signed_message(t.u, t.public_key))
        except Exception:  # malformed tokens of every shape are simply invalid
            return False

    # -- writers -----------------------------------------------------------

    def register_client(self, label: str) -> ClientRecord:
        _check_name(label, "client label")
        with self._lock:
            if label in self._snap.clients:
                raise AlreadyRegistered(f"client {label!r} is already registered")
            ref = codec.client_ref(label)
            r = self._randbytes(self.seed_len)
            cid = codec.derive_client_id(label, self.seed_len)
            rec = ClientRecord(label, ref, cid, r, self._clock())
            seed = rec.seed_block()
            r_path = self._r_path(ref)
            atomic_write(r_path, r, self._fsync)
            pushed = False
            try:
                if self.remote is not None:
                    self.remote.store_seed(ref, seed)
                    pushed = True
                self._append(self._line("client", label, "-", ref.hex(), rec.registered_at))
            except BaseException as exc:
                if pushed:
                    self.remote.drop_seed(ref)
                os.unlink(r_path)
                if isinstance(exc, (OSError, ConnectionError)) and not isinstance(exc, SBAError):
                    raise Unavailable(f"registration aborted: {exc}") from exc
                raise
            clients = dict(self._snap.clients)
            clients[label] = rec
            self._publish(clients=clients)
            log.info("registered client %s (%s)", label, ref.hex()[:12])
            return rec

    def issue_token(self, u: str, role) -> Token:
        _check_name(u, "user id")
        try:
            role = Role(role)
        except ValueError:
            raise InvalidArgument(f"unknown role {role!r}") from None
        with self._lock:
            if self._snap.active(u) is not None:
                raise AlreadyIssued(f"{u!r} already holds an active token")
            pub, priv = self.suite.generate_keypair()
            rho = self.suite.sign(self._admin_private, signed_message(u, pub))
            now = self._clock()
            b64 = lambda b: base64.b64encode(b).decode("ascii")  # noqa: E731
            atomic_write(self._key_path(self.suite.fingerprint(pub)), json.dumps(
                {"u": u, "public_key": b64(pub), "private_key": b64(priv)}).encode(),
                self._fsync)
            self._append(self._line("token", u, role.value, self.suite.fingerprint(pub), now))
            entry = LedgerEntry(u, pub, role, now)
            tokens = dict(self._snap.tokens)
            tokens[u] = entry
            self._publish(tokens=tokens, history=self._snap.history + (entry,))
            return Token(u, pub, priv, rho, role, now)

    def revoke(self, u: str) -> bool:
        with self._lock:
            entry = self._snap.active(u)
            if entry is None:
                raise NotFound(f"no active token for {u!r}")
            self._append(self._line("revoke", u, "-", entry.fingerprint, self._clock()))
            tokens = dict(self._snap.tokens)
            tokens[u] = replace(entry, revoked=True)
            self._publish(tokens=tokens)
            return True
