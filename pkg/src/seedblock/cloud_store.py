"""The main cloud: primary file storage and the surface recovery is tested against.

Layout under ``root``::

    manifest.json                 versioned metadata for every live entry
    content/<client_ref>/<file_id>
    seeds/<client_ref>.seed       registration-time copy of the client's seed block

Every read re-verifies the SHA-256 digest recorded at write time.  Writes to
one ``(client_ref, file_id)`` are serialised; distinct files proceed in
parallel.  After each successful write the ``backup`` hook runs before the
call returns; its status is passed back to the caller.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import shutil
import threading
import time
from dataclasses import asdict, dataclass

from . import codec
from ._fsutil import KeyedLocks, atomic_write, read_bytes
from .errors import (CorruptionDetected, InvalidArgument, NotFound,
                     Unauthorized, Unavailable)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
STORAGE_FORMS = ("original", "encrypted")


@dataclass(frozen=True)
class StoredEntry:
    file_id: str
    name: str
    storage_form: str
    digest: str
    size: int
    updated_at: float


@dataclass(frozen=True)
class WriteResult:
    file_id: str
    digest: str
    status: str = "ok"  # or errors.DEGRADED_BACKUP


class MainCloud:
    def __init__(self, root, *, storage_form: str = "encrypted", authorize=None,
                 backup=None, id_factory=None, fsync: bool = True, clock=time.time):
        if storage_form not in STORAGE_FORMS:
            raise InvalidArgument(f"storage_form must be one of {STORAGE_FORMS}")
        self.root = os.fspath(root)
        self.storage_form = storage_form
        self.authorize = authorize or (lambda ref: True)
        self.backup = backup
        self.id_factory = id_factory or (lambda: secrets.token_hex(8))
        self.locks = KeyedLocks()
        self._fsync = fsync
        self._clock = clock
        self._meta_lock = threading.RLock()
        self._up = False
        self.restart()

    # -- lifecycle ---------------------------------------------------------

    @property
    def up(self) -> bool:
        return self._up

    def restart(self) -> None:
        with self._meta_lock:
            os.makedirs(os.path.join(self.root, "content"), exist_ok=True)
            os.makedirs(os.path.join(self.root, "seeds"), exist_ok=True)
            self._manifest = self._load_manifest()
            self._up = True

    def crash(self, wipe: bool = False) -> None:
        """Simulated process death; ``wipe`` also destroys the data directory."""
        with self._meta_lock:
            self._up = False
            self._manifest = None
            if wipe:
                shutil.rmtree(self.root, ignore_errors=True)

    def _require_up(self):
        if not self._up:
            raise Unavailable("main cloud is down")

    # -- manifest ----------------------------------------------------------

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.root, "manifest.json")

    def _load_manifest(self) -> dict:
        try:
            data = json.loads(read_bytes(self.manifest_path))
        except FileNotFoundError:
            return {"format": "sba-manifest", "version": MANIFEST_VERSION, "clients": {}}
        if data.get("version") != MANIFEST_VERSION:
            raise CorruptionDetected(f"unsupported manifest version {data.get('version')}")
        return data

    def _save_manifest(self) -> None:
        atomic_write(self.manifest_path,
                     json.dumps(self._manifest, sort_keys=True).encode(), self._fsync)

    def _client(self, ref: bytes) -> dict:
        return self._manifest["clients"].setdefault(
            ref.hex(), {"files": {}, "tombstones": []})

    def content_path(self, ref: bytes, file_id: str) -> str:
        return os.path.join(self.root, "content", ref.hex(), file_id)

    # -- seed cache --------------------------------------------------------

    def cache_seed(self, ref: bytes, seed: bytes) -> None:
        self._require_up()
        atomic_write(os.path.join(self.root, "seeds", ref.hex() + ".seed"), seed, self._fsync)

    def cached_seed(self, ref: bytes) -> bytes | None:
        self._require_up()
        try:
            return read_bytes(os.path.join(self.root, "seeds", ref.hex() + ".seed"))
        except FileNotFoundError:
            return None

    # -- file operations ---------------------------------------------------

    def _check(self, ref: bytes, file_id: str | None = None):
        self._require_up()
        if not self.authorize(ref):
            raise Unauthorized("client is not registered or not active")
        if file_id is not None and (not file_id or "/" in file_id or file_id.startswith(".")):
            raise InvalidArgument(f"bad file id {file_id!r}")

    def _write(self, ref, file_id, name, body) -> StoredEntry:
        body = bytes(body)
        atomic_write(self.content_path(ref, file_id), body, self._fsync)
        entry = StoredEntry(file_id, name, self.storage_form,
                            codec.digest(body).hex(), len(body), self._clock())
        with self._meta_lock:
            self._require_up()
            client = self._client(ref)
            client["files"][file_id] = asdict(entry)
            if file_id in client["tombstones"]:
                client["tombstones"].remove(file_id)
            self._save_manifest()
        return entry

    def _run_backup(self, ref, file_id, entry, body) -> str:
        if self.backup is None:
            return "ok"
        return self.backup(ref, file_id, entry, body)

    def put_file(self, ref: bytes, name: str, body, *, file_id: str | None = None) -> WriteResult:
        self._check(ref, file_id)
        file_id = file_id or self.id_factory()
        with self.locks.hold((ref, file_id)):
            entry = self._write(ref, file_id, name, body)
            status = self._run_backup(ref, file_id, entry, body)
        return WriteResult(file_id, entry.digest, status)

    def update_file(self, ref: bytes, file_id: str, body) -> WriteResult:
        self._check(ref, file_id)
        with self.locks.hold((ref, file_id)):
            old = self.entry(ref, file_id)
            entry = self._write(ref, file_id, old.name, body)
            status = self._run_backup(ref, file_id, entry, body)
        return WriteResult(file_id, entry.digest, status)

    def restore_entry(self, ref: bytes, file_id: str, name: str, body) -> StoredEntry:
        """Re-create an entry from a recovered copy; no backup round-trip."""
        self._check(ref, file_id)
        with self.locks.hold((ref, file_id)):
            return self._write(ref, file_id, name, body)

    def entry(self, ref: bytes, file_id: str) -> StoredEntry:
        self._require_up()
        with self._meta_lock:
            meta = self._manifest["clients"].get(ref.hex(), {}).get("files", {}).get(file_id)
        if meta is None:
            raise NotFound(f"file {file_id!r} not found on main cloud")
        return StoredEntry(**meta)

    def get_file(self, ref: bytes, file_id: str) -> bytes:
        self._check(ref, file_id)
        with self.locks.hold((ref, file_id)):
            entry = self.entry(ref, file_id)
            try:
                body = read_bytes(self.content_path(ref, file_id))
            except FileNotFoundError:
                raise CorruptionDetected(f"content for {file_id!r} missing on disk") from None
        if codec.digest(body).hex() != entry.digest:
            raise CorruptionDetected(f"digest mismatch for {file_id!r}")
        return body

    def delete_file(self, ref: bytes, file_id: str) -> bool:
        self._check(ref, file_id)
        with self.locks.hold((ref, file_id)):
            self.entry(ref, file_id)
            with self._meta_lock:
                client = self._client(ref)
                del client["files"][file_id]
                client["tombstones"].append(file_id)
                self._save_manifest()
            try:
                os.unlink(self.content_path(ref, file_id))
            except FileNotFoundError:
                pass
        return True

    def has(self, ref: bytes, file_id: str) -> bool:
        try:
            self.entry(ref, file_id)
        except NotFound:
            return False
        return True

    def is_tombstoned(self, ref: bytes, file_id: str) -> bool:
        self._require_up()
        with self._meta_lock:
            return file_id in self._manifest["clients"].get(ref.hex(), {}).get("tombstones", [])

    def list_files(self, ref: bytes) -> list:
        self._require_up()
        with self._meta_lock:
            files = self._manifest["clients"].get(ref.hex(), {}).get("files", {})
            return [StoredEntry(**files[k]) for k in sorted(files)]
