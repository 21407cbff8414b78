"""The remote backup server: seed blocks, encoded files and recovery.

On-disk catalog::

    seeds/<client_ref>.seed                  raw seed block bytes
    encoded/<client_ref>/<file_id>.sba       EncodedFile container
    encoded/<client_ref>/<file_id>.meta      {"name", "stored_at"}

Every write is fsynced (file and directory) before it is acknowledged.  Only
the latest encoded version of a file is kept and seeds are immutable.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import threading
import time
from dataclasses import dataclass

from . import codec
from ._fsutil import KeyedLocks, atomic_write, read_bytes
from .errors import (AlreadyExists, CorruptedBackup, InvalidArgument, NotFound,
                     SeedMissing, Unauthorized, Unavailable)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Recoverable:
    file_id: str
    payload_length: int
    stored_at: float
    name: str = ""


class RemoteBackup:
    def __init__(self, root, *, seed_len: int = codec.SEED_LEN, fsync: bool = True,
                 clock=time.time):
        self.root = os.fspath(root)
        self.seed_len = seed_len
        self.locks = KeyedLocks()
        self._fsync = fsync
        self._clock = clock
        self._state = threading.Lock()
        self._up = False
        self.restart()

    @property
    def up(self) -> bool:
        return self._up

    def restart(self) -> None:
        with self._state:
            os.makedirs(os.path.join(self.root, "seeds"), exist_ok=True)
            os.makedirs(os.path.join(self.root, "encoded"), exist_ok=True)
            self._up = True

    def crash(self, wipe: bool = False) -> None:
        with self._state:
            self._up = False
            if wipe:
                shutil.rmtree(self.root, ignore_errors=True)

    def _require_up(self):
        if not self._up:
            raise Unavailable("remote backup server is unreachable")

    # -- paths -------------------------------------------------------------

    def seed_path(self, ref: bytes) -> str:
        return os.path.join(self.root, "seeds", ref.hex() + ".seed")

    def encoded_path(self, ref: bytes, file_id: str) -> str:
        return os.path.join(self.root, "encoded", ref.hex(), file_id + ".sba")

    def _meta_path(self, ref: bytes, file_id: str) -> str:
        return os.path.join(self.root, "encoded", ref.hex(), file_id + ".meta")

    # -- seeds -------------------------------------------------------------

    def has_seed(self, ref: bytes) -> bool:
        self._require_up()
        return os.path.exists(self.seed_path(ref))

    def store_seed(self, ref: bytes, seed) -> bool:
        self._require_up()
        raw = seed.bytes if isinstance(seed, codec.SeedBlock) else bytes(seed)
        if len(raw) != self.seed_len:
            raise InvalidArgument(f"seed block must be {self.seed_len} bytes")
        with self.locks.hold(("seed", ref)):
            if os.path.exists(self.seed_path(ref)):
                raise AlreadyExists("seed block already stored for this client")
            atomic_write(self.seed_path(ref), raw, self._fsync)
        return True

    def drop_seed(self, ref: bytes) -> None:
        """Roll back a seed whose registration failed afterwards."""
        with self.locks.hold(("seed", ref)):
            try:
                os.unlink(self.seed_path(ref))
            except FileNotFoundError:
                pass

    def fetch_seed(self, ref: bytes) -> codec.SeedBlock:
        self._require_up()
        try:
            return codec.SeedBlock(read_bytes(self.seed_path(ref)), ref)
        except FileNotFoundError:
            raise SeedMissing("no seed block for this client") from None

    # -- encoded files -----------------------------------------------------

    def store_encoded(self, ref: bytes, file_id: str, enc: codec.EncodedFile,
                      name: str = "") -> bool:
        self._require_up()
        if not os.path.exists(self.seed_path(ref)):
            raise Unauthorized("client has no seed block on the remote server")
        if enc.client_ref != ref:
            raise InvalidArgument("container client_ref does not match")
        if not file_id or "/" in file_id or file_id.startswith("."):
            raise InvalidArgument(f"bad file id {file_id!r}")
        with self.locks.hold((ref, file_id)):
            meta = {"name": name, "stored_at": self._clock()}
            atomic_write(self._meta_path(ref, file_id), json.dumps(meta).encode(), self._fsync)
            atomic_write(self.encoded_path(ref, file_id), enc.to_bytes(), self._fsync)
        return True

    def fetch_encoded_raw(self, ref: bytes, file_id: str) -> bytes:
        self._require_up()
        try:
            return read_bytes(self.encoded_path(ref, file_id))
        except FileNotFoundError:
            raise NotFound(f"no backup of {file_id!r}") from None

    def fetch_encoded(self, ref: bytes, file_id: str) -> codec.EncodedFile:
        raw = self.fetch_encoded_raw(ref, file_id)
        try:
            return codec.EncodedFile.from_bytes(raw, file_id)
        except InvalidArgument as exc:
            raise CorruptedBackup(f"container for {file_id!r} unreadable: {exc}") from exc

    def has_encoded(self, ref: bytes, file_id: str) -> bool:
        self._require_up()
        return os.path.exists(self.encoded_path(ref, file_id))

    def meta(self, ref: bytes, file_id: str) -> dict:
        try:
            return json.loads(read_bytes(self._meta_path(ref, file_id)))
        except (FileNotFoundError, ValueError):
            return {"name": file_id, "stored_at": 0.0}

    def recover_file(self, ref: bytes, file_id: str) -> bytes:
        """``z = z' XOR A``, returned only if it hashes to the recorded source digest."""
        self._require_up()
        with self.locks.hold((ref, file_id)):
            seed = self.fetch_seed(ref)
            enc = self.fetch_encoded(ref, file_id)
            if enc.client_ref != ref:
                raise CorruptedBackup(f"container for {file_id!r} names another client")
            try:
                body = enc.decode(seed, seed_len=self.seed_len)
            except InvalidArgument as exc:
                raise CorruptedBackup(f"seed block unusable: {exc}") from exc
        if codec.digest(body) != enc.source_digest:
            raise CorruptedBackup(f"recovered bytes of {file_id!r} fail digest check")
        return body

    def list_recoverable(self, ref: bytes) -> list:
        self._require_up()
        if not os.path.exists(self.seed_path(ref)):
            raise Unauthorized("client has no seed block on the remote server")
        directory = os.path.join(self.root, "encoded", ref.hex())
        try:
            names = os.listdir(directory)
        except FileNotFoundError:
            return []
        out = []
        for fn in sorted(names):
            if not fn.endswith(".sba") or fn.startswith("."):
                continue
            file_id = fn[:-4]
            size = os.path.getsize(os.path.join(directory, fn))
            meta = self.meta(ref, file_id)
            out.append(Recoverable(file_id, max(size - codec.HEADER_LEN, 0),
                                   meta.get("stored_at", 0.0), meta.get("name", "")))
        return out
