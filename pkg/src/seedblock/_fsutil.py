import os
import tempfile
import threading
from collections import defaultdict
from contextlib import contextmanager


def atomic_write(path, data: bytes, fsync: bool = True) -> None:
    """Write via temp file + rename so readers never observe a torn file."""
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            if fsync:
                fh.flush()
                os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    if fsync:
        fsync_dir(directory)


def fsync_dir(directory) -> None:
    try:
        fd = os.open(directory, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


class KeyedLocks:
    """One re-entrant lock per key; operations on distinct keys never contend."""

    def __init__(self):
        self._guard = threading.Lock()
        self._locks = defaultdict(threading.RLock)

    @contextmanager
    def hold(self, key):
        with self._guard:
            lock = self._locks[key]
        with lock:
            yield
