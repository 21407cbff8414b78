"""Orchestration of the two stores, the admin ledger and the envelopes.

Backup: (encrypt, when the policy stores the encrypted form) -> XOR with the
client's seed block -> durable write at the remote.  Restore: remote recovery
(XOR) -> decrypt for an authorised seeker.  Encoding happens on the main-cloud
side with a cached seed block, so plaintext never reaches the remote.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass

from . import codec, envelope
from ._kernel import BACKEND
from .cloud_store import STORAGE_FORMS, MainCloud, WriteResult
from .errors import (DEGRADED_BACKUP, CorruptedBackup, IntegrityError,
                     InvalidArgument, NotFound, SBAError, Unauthorized,
                     Unavailable)
from .identity import Admin
from .remote import RemoteBackup

log = logging.getLogger(__name__)

RESTORE_MODES = ("manual", "automatic")


@dataclass(frozen=True)
class BackupPolicy:
    storage_form: str = "encrypted"
    restore_mode: str = "manual"
    auto_restore_poll_interval: float = 5.0
    retry_queue_size: int = 1024

    def __post_init__(self):
        if self.storage_form not in STORAGE_FORMS:
            raise InvalidArgument(f"storage_form must be one of {STORAGE_FORMS}")
        if self.restore_mode not in RESTORE_MODES:
            raise InvalidArgument(f"restore_mode must be one of {RESTORE_MODES}")
        if self.auto_restore_poll_interval <= 0:
            raise InvalidArgument("poll interval must be > 0")
        if self.retry_queue_size < 1:
            raise InvalidArgument("retry queue size must be >= 1")


class BackupService:
    def __init__(self, main_dir, remote_dir, admin_dir, policy: BackupPolicy | None = None,
                 *, suite=None, seed_len: int = codec.SEED_LEN, fsync: bool = True,
                 randbytes=None, id_factory=None, clock=time.time):
        self.policy = policy or BackupPolicy()
        self.seed_len = seed_len
        self.remote = RemoteBackup(remote_dir, seed_len=seed_len, fsync=fsync, clock=clock)
        self.admin = Admin(admin_dir, remote=self.remote, suite=suite, seed_len=seed_len,
                           randbytes=randbytes, clock=clock, fsync=fsync)
        self.main = MainCloud(main_dir, storage_form=self.policy.storage_form,
                              authorize=self._is_active_ref, backup=self._backup_hook,
                              id_factory=id_factory, fsync=fsync, clock=clock)
        self._retry = deque()
        self._retry_lock = threading.Lock()
        self.dropped_retries = 0
        self._stop = threading.Event()
        self._wake = threading.Event()
        self._thread = None
        self._tick_lock = threading.Lock()
        self.ticks = 0

    @classmethod
    def from_config(cls, cfg, **kwargs) -> "BackupService":
        policy = BackupPolicy(cfg.storage_form, cfg.restore_mode, cfg.poll_interval,
                              cfg.retry_queue_size)
        return cls(cfg.main_dir, cfg.remote_dir, cfg.admin_dir, policy, **kwargs)

    # -- helpers -----------------------------------------------------------

    def _is_active_ref(self, ref: bytes) -> bool:
        return any(c.client_ref == ref and c.status == "active"
                   for c in self.admin.snapshot().clients.values())

    def _ref(self, label: str) -> bytes:
        try:
            rec = self.admin.client(label)
        except NotFound:
            raise Unauthorized(f"client {label!r} is not registered") from None
        if rec.status != "active":
            raise Unauthorized(f"client {label!r} is not active")
        return rec.client_ref

    def _seed_for(self, ref: bytes) -> codec.SeedBlock:
        cached = self.main.cached_seed(ref)
        if cached is not None and len(cached) == self.seed_len:
            return codec.SeedBlock(cached, ref)
        seed = self.admin.client_by_ref(ref).seed_block()
        self.main.cache_seed(ref, seed.bytes)
        return seed

    def _seal(self, body, token, recipients, previous=None) -> bytes:
        if self.policy.storage_form == "original":
            return bytes(body)
        if token is None:
            raise Unauthorized("a provider token is required to store encrypted data")
        if recipients is None:
            recipients = [token.u]
            if previous is not None:
                try:
                    recipients = envelope.Ciphertext.from_bytes(previous).recipients()
                except InvalidArgument:
                    pass
        return envelope.encrypt_message(body, token, recipients, self.admin).to_bytes()

    def _open(self, stored: bytes, token) -> bytes:
        if self.policy.storage_form == "original":
            return stored
        try:
            c = envelope.Ciphertext.from_bytes(stored)
        except InvalidArgument as exc:
            raise CorruptedBackup(f"stored body is not an envelope: {exc}") from exc
        if token is None:
            raise Unauthorized("a seeker token is required to read encrypted data")
        return envelope.decrypt_message(c, token, self.admin)

    # -- admin -------------------------------------------------------------

    def register(self, label: str):
        rec = self.admin.register_client(label)
        try:
            self.main.cache_seed(rec.client_ref, rec.seed_block().bytes)
        except Unavailable:
            log.warning("main cloud down; seed cache for %s filled lazily", label)
        return rec

    def issue_token(self, u: str, role):
        return self.admin.issue_token(u, role)

    def revoke_token(self, u: str) -> bool:
        return self.admin.revoke(u)

    def verify_token(self, token) -> bool:
        return self.admin.verify_token(token)

    # -- backup pipeline ---------------------------------------------------

    def backup_pipeline(self, ref: bytes, file_id: str, body, name: str = "") -> str:
        """XOR-encode the stored body and write it to the remote.

        Returns ``"ok"`` or ``DEGRADED_BACKUP`` (remote unreachable; retry queued).
        """
        try:
            seed = self._seed_for(ref)
            enc = codec.EncodedFile.encode(body, seed, ref, file_id, seed_len=self.seed_len)
            try:
                self.remote.store_encoded(ref, file_id, enc, name)
            except Unauthorized:
                # remote lost its catalog; seeds are re-pushable from the admin escrow
                self._push_seed(ref)
                self.remote.store_encoded(ref, file_id, enc, name)
        except (Unavailable, OSError) as exc:
            log.warning("backup of %s degraded: %s", file_id, exc)
            self._enqueue(ref, file_id)
            return DEGRADED_BACKUP
        return "ok"

    def _backup_hook(self, ref, file_id, entry, body) -> str:
        return self.backup_pipeline(ref, file_id, body, entry.name)

    def _push_seed(self, ref: bytes) -> None:
        if not self.remote.has_seed(ref):
            self.remote.store_seed(ref, self.admin.client_by_ref(ref).seed_block())

    def _enqueue(self, ref, file_id) -> None:
        with self._retry_lock:
            if (ref, file_id) in self._retry:
                return
            if len(self._retry) >= self.policy.retry_queue_size:
                old = self._retry.popleft()
                self.dropped_retries += 1
                log.error("retry queue full; dropped pending backup of %s", old[1])
            self._retry.append((ref, file_id))

    @property
    def pending_retries(self) -> int:
        with self._retry_lock:
            return len(self._retry)

    def flush_retries(self) -> int:
        """Re-run queued backups from the current main-cloud body; returns what is left."""
        while True:
            with self._retry_lock:
                if not self._retry:
                    return 0
                ref, file_id = self._retry[0]
            if not (self.remote.up and self.main.up):
                return self.pending_retries
            status = "ok"
            try:
                with self.main.locks.hold((ref, file_id)):
                    with self._retry_lock:
                        if self._retry and self._retry[0] == (ref, file_id):
                            self._retry.popleft()
                    if self.main.has(ref, file_id):
                        body = self.main.get_file(ref, file_id)
                        status = self.backup_pipeline(ref, file_id, body,
                                                      self.main.entry(ref, file_id).name)
            except IntegrityError as exc:
                log.error("cannot re-backup %s: %s", file_id, exc)
            except Unavailable:
                self._enqueue(ref, file_id)
                return self.pending_retries
            if status != "ok":
                return self.pending_retries

    # -- file API ----------------------------------------------------------

    def put(self, label: str, name: str, body, *, token=None, recipients=None,
            file_id: str | None = None) -> WriteResult:
        ref = self._ref(label)
        stored = self._seal(body, token, recipients)
        return self.main.put_file(ref, name, stored, file_id=file_id)

    def update(self, label: str, file_id: str, body, *, token=None,
               recipients=None) -> WriteResult:
        ref = self._ref(label)
        previous = None
        if self.policy.storage_form == "encrypted" and recipients is None:
            try:
                previous = self.main.get_file(ref, file_id)
            except SBAError:
                previous = None
        else:
            self.main.entry(ref, file_id)
        stored = self._seal(body, token, recipients, previous)
        return self.main.update_file(ref, file_id, stored)

    def get(self, label: str, file_id: str, *, token=None) -> bytes:
        """The stored body, or the plaintext when a seeker token is supplied."""
        stored = self.main.get_file(self._ref(label), file_id)
        if token is None:
            return stored
        return self._open(stored, token)

    def delete(self, label: str, file_id: str) -> bool:
        return self.main.delete_file(self._ref(label), file_id)

    def list(self, label: str) -> list:
        return self.remote.list_recoverable(self._ref(label))

    def restore(self, label: str, file_id: str, token=None) -> bytes:
        """Recover from the remote copy and, for encrypted data, decrypt for ``token``.

        In automatic mode a missing main-cloud entry is re-created from the
        recovered (stored-form) body.
        """
        ref = self._ref(label)
        with self.main.locks.hold((ref, file_id)):
            stored = self.remote.recover_file(ref, file_id)
            plain = self._open(stored, token)
            if self.policy.restore_mode == "automatic":
                self._restore_to_main(ref, file_id, stored)
        return plain

    def _restore_to_main(self, ref, file_id, stored) -> bool:
        if not self.main.up or self.main.has(ref, file_id):
            return False
        name = self.remote.meta(ref, file_id).get("name") or file_id
        self.main.restore_entry(ref, file_id, name, stored)
        return True

    # -- maintenance -------------------------------------------------------

    def reconcile(self) -> dict:
        """One maintenance pass: re-push seeds, drain retries, re-replicate,
        and in automatic mode restore main-cloud entries the remote still has."""
        stats = {"restored": 0, "replicated": 0, "errors": 0}
        with self._tick_lock:
            self.ticks += 1
            if not (self.main.up and self.remote.up):
                return stats
            for rec in self.admin.clients():
                ref = rec.client_ref
                try:
                    self._push_seed(ref)
                    if self.policy.restore_mode == "automatic":
                        for item in self.remote.list_recoverable(ref):
                            if self.main.has(ref, item.file_id) or \
                                    self.main.is_tombstoned(ref, item.file_id):
                                continue
                            try:
                                with self.main.locks.hold((ref, item.file_id)):
                                    stored = self.remote.recover_file(ref, item.file_id)
                                    if self._restore_to_main(ref, item.file_id, stored):
                                        stats["restored"] += 1
                            except IntegrityError as exc:
                                stats["errors"] += 1
                                log.error("auto-restore of %s failed: %s", item.file_id, exc)
                    for entry in self.main.list_files(ref):
                        if not self.remote.has_encoded(ref, entry.file_id):
                            self._enqueue(ref, entry.file_id)
                            stats["replicated"] += 1
                except Unavailable:
                    return stats
            self.flush_retries()
        return stats

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="sba-maintenance", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=10)
            self._thread = None

    def _loop(self):
        while not self._stop.is_set():
            try:
                self.reconcile()
            except Exception:  # keep the poller alive; each failure is logged
                log.exception("maintenance pass failed")
            self._wake.wait(self.policy.auto_restore_poll_interval)
            self._wake.clear()

    # -- operations / faults -----------------------------------------------

    def health(self) -> dict:
        return {
            "main": "up" if self.main.up else "down",
            "remote": "up" if self.remote.up else "down",
            "retry_queue": self.pending_retries,
            "storage_form": self.policy.storage_form,
            "restore_mode": self.policy.restore_mode,
            "kernel": BACKEND,
        }

    def _target(self, target: str):
        if target == "main":
            return self.main
        if target == "remote":
            return self.remote
        raise InvalidArgument(f"unknown target {target!r} (main|remote)")

    def crash(self, target: str, wipe: bool = False) -> None:
        self._target(target).crash(wipe=wipe)

    def restart(self, target: str) -> None:
        self._target(target).restart()
        self._wake.set()

    def close(self) -> None:
        self.stop()


def service_dirs(base) -> tuple:
    base = os.fspath(base)
    return (os.path.join(base, "main"), os.path.join(base, "remote"),
            os.path.join(base, "admin"))
