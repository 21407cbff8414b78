"""Text-framed request/response protocol over TCP.

Grammar (one request, one response, connections may carry many)::

    frame  = "SBA/1" SP word SP count LF *field
    field  = key SP length LF <length bytes> LF
    word   = VERB in requests, 3-digit status in responses
    key    = 1*(a-z / "_"), length = decimal byte count

Verbs: REGISTER, PUT, GET, DELETE, UPDATE, RECOVER, LIST, TOKEN-ISSUE,
TOKEN-REVOKE, HEALTH, plus CRASH and RESTART when fault endpoints are enabled.
Error responses carry ``error`` (a stable code) and ``message``.  Status 202
marks a write whose remote backup was degraded.
"""

from __future__ import annotations

import logging
import re
import socket
import socketserver
import threading
from dataclasses import dataclass

from .cloud_store import WriteResult
from .errors import (DEGRADED_BACKUP, MalformedRequest, SBAError,
                     StartupFailure, Unavailable, from_code)
from .identity import Token
from .remote import Recoverable

log = logging.getLogger(__name__)

PROTOCOL = b"SBA/1"
MAX_HEAD = 256
MAX_FIELDS = 64
MAX_FIELD_LEN = 1 << 30
_KEY = re.compile(rb"^[a-z_]{1,32}$")

VERBS = ("REGISTER", "PUT", "GET", "DELETE", "UPDATE", "RECOVER", "LIST",
         "TOKEN-ISSUE", "TOKEN-REVOKE", "HEALTH")
FAULT_VERBS = ("CRASH", "RESTART")


def encode_frame(word: str, fields: dict) -> bytes:
    parts = [PROTOCOL + b" " + word.encode("ascii") + b" %d\n" % len(fields)]
    for key, value in fields.items():
        if isinstance(value, str):
            value = value.encode("utf-8")
        parts.append(b"%s %d\n" % (key.encode("ascii"), len(value)))
        parts.append(bytes(value) + b"\n")
    return b"".join(parts)


def _readline(rfile, limit: int) -> bytes:
    line = rfile.readline(limit + 1)
    if not line:
        raise EOFError
    if not line.endswith(b"\n"):
        raise MalformedRequest("line too long or truncated")
    return line[:-1]


def read_frame(rfile) -> tuple[str, dict]:
    """Parse one frame; EOFError on a clean end of stream."""
    head = _readline(rfile, MAX_HEAD)
    parts = head.split(b" ")
    if len(parts) != 3 or parts[0] != PROTOCOL or not parts[2].isdigit():
        raise MalformedRequest(f"bad frame head {head[:40]!r}")
    count = int(parts[2])
    if count > MAX_FIELDS:
        raise MalformedRequest("too many fields")
    fields = {}
    for _ in range(count):
        try:
            line = _readline(rfile, MAX_HEAD)
        except EOFError:
            raise MalformedRequest("stream ended inside frame") from None
        key, _, length = line.partition(b" ")
        if not _KEY.match(key) or not length.isdigit():
            raise MalformedRequest(f"bad field header {line[:40]!r}")
        n = int(length)
        if n > MAX_FIELD_LEN:
            raise MalformedRequest("field too large")
        value = rfile.read(n + 1)
        if len(value) != n + 1 or value[-1:] != b"\n":
            raise MalformedRequest("field body truncated")
        fields[key.decode("ascii")] = value[:-1]
    return parts[1].decode("ascii", "replace"), fields


def _text(fields, key, default=None) -> str:
    if key not in fields:
        if default is not None:
            return default
        raise MalformedRequest(f"missing field {key!r}")
    try:
        return fields[key].decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedRequest(f"field {key!r} is not utf-8") from None


def _token(fields):
    if "token" not in fields:
        return None
    return Token.from_json(fields["token"].decode("utf-8", "replace"))


def _recipients(fields):
    if "recipients" not in fields:
        return None
    text = _text(fields, "recipients")
    return [u for u in text.split("\n") if u] if text else []


def _write_fields(result: WriteResult) -> tuple[int, dict]:
    status = 202 if result.status == DEGRADED_BACKUP else 200
    return status, {"file_id": result.file_id, "digest": result.digest,
                    "backup": result.status}


def dispatch(service, verb: str, f: dict, *, faults: bool = False) -> tuple[int, dict]:
    if verb == "HEALTH":
        return 200, {k: str(v) for k, v in service.health().items()}
    if verb == "REGISTER":
        rec = service.register(_text(f, "label"))
        return 200, {"label": rec.label, "client_ref": rec.client_ref.hex(),
                     "registered_at": repr(rec.registered_at)}
    if verb == "PUT":
        res = service.put(_text(f, "label"), _text(f, "name", ""), f.get("body", b""),
                          token=_token(f), recipients=_recipients(f))
        return _write_fields(res)
    if verb == "UPDATE":
        res = service.update(_text(f, "label"), _text(f, "file_id"), f.get("body", b""),
                             token=_token(f), recipients=_recipients(f))
        return _write_fields(res)
    if verb == "GET":
        return 200, {"body": service.get(_text(f, "label"), _text(f, "file_id"),
                                         token=_token(f))}
    if verb == "DELETE":
        service.delete(_text(f, "label"), _text(f, "file_id"))
        return 200, {"deleted": "1"}
    if verb == "RECOVER":
        return 200, {"body": service.restore(_text(f, "label"), _text(f, "file_id"),
                                             _token(f))}
    if verb == "LIST":
        rows = [f"{r.file_id}\t{r.payload_length}\t{r.stored_at!r}\t{r.name}"
                for r in service.list(_text(f, "label"))]
        return 200, {"entries": "\n".join(rows)}
    if verb == "TOKEN-ISSUE":
        tok = service.issue_token(_text(f, "u"), _text(f, "role"))
        return 200, {"token": tok.to_json()}
    if verb == "TOKEN-REVOKE":
        service.revoke_token(_text(f, "u"))
        return 200, {"revoked": "1"}
    if faults and verb == "CRASH":
        service.crash(_text(f, "target"), _text(f, "wipe", "0") == "1")
        return 200, {"crashed": _text(f, "target")}
    if faults and verb == "RESTART":
        service.restart(_text(f, "target"))
        return 200, {"restarted": _text(f, "target")}
    raise MalformedRequest(f"unknown verb {verb!r}")


def _error_fields(exc: SBAError) -> tuple[int, dict]:
    return exc.status, {"error": exc.code, "message": exc.message}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                verb, fields = read_frame(self.rfile)
            except EOFError:
                return
            except MalformedRequest as exc:
                self._send(*_error_fields(exc))
                return  # framing is lost; drop the connection
            except OSError:
                return
            try:
                status, out = dispatch(self.server.service, verb, fields,
                                       faults=self.server.faults)
            except SBAError as exc:
                status, out = _error_fields(exc)
            except Exception as exc:  # never let one request take the server down
                log.exception("internal error handling %s", verb)
                status, out = 500, {"error": "internal", "message": str(exc)}
            try:
                self._send(status, out)
            except OSError:
                return

    def _send(self, status, fields):
        self.wfile.write(encode_frame("%03d" % status, fields))
        self.wfile.flush()


class SBAServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service, host="127.0.0.1", port=8470, *, faults=False):
        self.service = service
        self.faults = faults
        self._thread = None
        try:
            super().__init__((host, port), _Handler)
        except OSError as exc:
            raise StartupFailure(f"cannot bind {host}:{port}: {exc.strerror or exc}") from exc

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> "SBAServer":
        self._thread = threading.Thread(target=self.serve_forever, name="sba-server",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10)


def serve(service, host="127.0.0.1", port=8470, *, faults=False) -> SBAServer:
    """Bind the wire API and start serving in a background thread."""
    server = SBAServer(service, host, port, faults=faults).start()
    service.start()
    return server


@dataclass(frozen=True)
class RegisteredClient:
    label: str
    client_ref: bytes
    registered_at: float


class ServiceClient:
    """Wire client exposing the same surface as :class:`BackupService`."""

    def __init__(self, host="127.0.0.1", port=8470, timeout: float = 30.0):
        self.address = (host, port)
        self.timeout = timeout
        self._sock = None
        self._lock = threading.Lock()

    def _connect(self):
        try:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise Unavailable(f"cannot reach {self.address[0]}:{self.address[1]}: {exc}") from exc
        self._rfile = self._sock.makefile("rb")

    def close(self):
        if self._sock is not None:
            self._rfile.close()
            self._sock.close()
            self._sock = None

    def call(self, verb: str, **fields) -> tuple[int, dict]:
        fields = {k: v for k, v in fields.items() if v is not None}
        with self._lock:
            if self._sock is None:
                self._connect()
            try:
                self._sock.sendall(encode_frame(verb, fields))
                word, out = read_frame(self._rfile)
            except (OSError, EOFError) as exc:
                self.close()
                raise Unavailable(f"connection lost: {exc}") from exc
        status = int(word)
        if status >= 400:
            code = out.get("error", b"error").decode()
            raise from_code(code, out.get("message", b"").decode("utf-8", "replace"))
        return status, out

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @staticmethod
    def _tok(token):
        return token.to_json() if token is not None else None

    @staticmethod
    def _rcpt(recipients):
        return "\n".join(recipients) if recipients is not None else None

    def health(self) -> dict:
        return {k: v.decode() for k, v in self.call("HEALTH")[1].items()}

    def register(self, label):
        out = self.call("REGISTER", label=label)[1]
        return RegisteredClient(out["label"].decode(), bytes.fromhex(out["client_ref"].decode()),
                                float(out["registered_at"]))

    def _result(self, out) -> WriteResult:
        return WriteResult(out["file_id"].decode(), out["digest"].decode(),
                           out["backup"].decode())

    def put(self, label, name, body, *, token=None, recipients=None):
        return self._result(self.call("PUT", label=label, name=name, body=bytes(body),
                                      token=self._tok(token),
                                      recipients=self._rcpt(recipients))[1])

    def update(self, label, file_id, body, *, token=None, recipients=None):
        return self._result(self.call("UPDATE", label=label, file_id=file_id, body=bytes(body),
                                      token=self._tok(token),
                                      recipients=self._rcpt(recipients))[1])

    def get(self, label, file_id, *, token=None) -> bytes:
        return self.call("GET", label=label, file_id=file_id, token=self._tok(token))[1]["body"]

    def delete(self, label, file_id) -> bool:
        self.call("DELETE", label=label, file_id=file_id)
        return True

    def restore(self, label, file_id, token=None) -> bytes:
        return self.call("RECOVER", label=label, file_id=file_id,
                         token=self._tok(token))[1]["body"]

    def list(self, label) -> list:
        text = self.call("LIST", label=label)[1]["entries"].decode("utf-8")
        rows = []
        for line in filter(None, text.split("\n")):
            fid, length, stored_at, name = line.split("\t", 3)
            rows.append(Recoverable(fid, int(length), float(stored_at), name))
        return rows

    def issue_token(self, u, role) -> Token:
        role = getattr(role, "value", role)
        return Token.from_json(self.call("TOKEN-ISSUE", u=u, role=role)[1]["token"].decode())

    def revoke_token(self, u) -> bool:
        self.call("TOKEN-REVOKE", u=u)
        return True

    def crash(self, target, wipe=False):
        self.call("CRASH", target=target, wipe="1" if wipe else "0")

    def restart(self, target):
        self.call("RESTART", target=target)
