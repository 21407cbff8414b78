"""``sba`` operator CLI.

Runs against a local service built from ``--config`` (default: ``$SBA_CONFIG``
or built-in defaults), or against a running server with ``--server HOST:PORT``.
Exit codes: 0 success, 1 user error, 2 integrity failure, 3 connectivity.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading

from .config import Config, load_config
from .errors import (DEGRADED_BACKUP, EXIT_OK, EXIT_USER, InvalidArgument,
                     SBAError)
from .identity import Token


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sba", description="Seed-block remote backup")
    ap.add_argument("--config", default=os.environ.get("SBA_CONFIG"),
                    help="key=value config file")
    ap.add_argument("--server", help="HOST:PORT of a running 'sba serve'")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("register", help="register a client and store its seed block")
    p.add_argument("label")

    def crypto_opts(p, recipients=True):
        p.add_argument("--token", help="token file (provider for writes, seeker for reads)")
        if recipients:
            p.add_argument("--to", help="comma-separated recipient users")

    p = sub.add_parser("put", help="store a file on the main cloud (and back it up)")
    p.add_argument("label")
    p.add_argument("path")
    p.add_argument("--name")
    crypto_opts(p)

    p = sub.add_parser("update", help="replace a stored file's contents")
    p.add_argument("label")
    p.add_argument("id")
    p.add_argument("path")
    crypto_opts(p)

    p = sub.add_parser("get", help="read a file from the main cloud")
    p.add_argument("label")
    p.add_argument("id")
    p.add_argument("-o", "--output", required=True)
    crypto_opts(p, recipients=False)

    p = sub.add_parser("rm", help="delete a file from the main cloud")
    p.add_argument("label")
    p.add_argument("id")

    p = sub.add_parser("recover", help="recover a file from the remote backup")
    p.add_argument("label")
    p.add_argument("id")
    p.add_argument("-o", "--output", help="write here (default: stdout)")
    crypto_opts(p, recipients=False)

    p = sub.add_parser("list", help="list recoverable files on the remote")
    p.add_argument("label")

    p = sub.add_parser("token", help="issue or revoke tokens")
    p.add_argument("action", choices=["issue", "revoke"])
    p.add_argument("u")
    p.add_argument("--role", choices=["provider", "seeker", "admin"], default="seeker")
    p.add_argument("-o", "--output", help="token file (default: stdout)")

    sub.add_parser("health", help="report store connectivity")
    sub.add_parser("serve", help="run the wire API")

    for name in ("crash", "restart"):
        p = sub.add_parser(name, help=f"{name} a store on a test server")
        p.add_argument("--target", choices=["main", "remote"], required=True)
        if name == "crash":
            p.add_argument("--wipe", action="store_true")
    return ap


def _backend(args, cfg: Config):
    if args.server:
        from .wire import ServiceClient
        host, _, port = args.server.rpartition(":")
        if not host or not port.isdigit():
            raise InvalidArgument("--server wants HOST:PORT")
        return ServiceClient(host, int(port))
    from .service import BackupService
    return BackupService.from_config(cfg)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data: bytes) -> None:
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _token(path):
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        return Token.from_json(fh.read())


def _recipients(spec):
    if spec is None:
        return None
    return [u for u in spec.split(",") if u]


def _serve(cfg: Config) -> int:
    from .service import BackupService
    from .wire import serve
    service = BackupService.from_config(cfg)
    server = serve(service, cfg.host, cfg.port, faults=cfg.enable_fault_endpoints)
    print(f"sba: serving on {cfg.host}:{server.port} "
          f"(storage_form={cfg.storage_form}, restore_mode={cfg.restore_mode})", flush=True)
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    done.wait()
    server.stop()
    service.close()
    return EXIT_OK


def run(args) -> int:
    cfg = load_config(args.config) if args.config else Config()
    if args.cmd == "serve":
        return _serve(cfg)
    backend = _backend(args, cfg)
    try:
        return _dispatch(args, backend)
    finally:
        backend.close()


def _dispatch(args, b) -> int:
    cmd = args.cmd
    if cmd == "register":
        rec = b.register(args.label)
        print(f"{rec.label}\t{rec.client_ref.hex()}")
    elif cmd in ("put", "update"):
        body = _read(args.path)
        tok, rcpt = _token(args.token), _recipients(args.to)
        if cmd == "put":
            res = b.put(args.label, args.name or os.path.basename(args.path), body,
                        token=tok, recipients=rcpt)
        else:
            res = b.update(args.label, args.id, body, token=tok, recipients=rcpt)
        print(res.file_id)
        if res.status == DEGRADED_BACKUP:
            print("sba: warning: remote backup degraded; retry queued", file=sys.stderr)
    elif cmd == "get":
        _write(args.output, b.get(args.label, args.id, token=_token(args.token)))
    elif cmd == "rm":
        b.delete(args.label, args.id)
    elif cmd == "recover":
        _write(args.output, b.restore(args.label, args.id, _token(args.token)))
    elif cmd == "list":
        for r in b.list(args.label):
            print(f"{r.file_id}\t{r.payload_length}\t{r.stored_at:.3f}\t{r.name}")
    elif cmd == "token":
        if args.action == "issue":
            tok = b.issue_token(args.u, args.role)
            text = tok.to_json() + "\n"
            if args.output:
                fd = os.open(args.output, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        else:
            b.revoke_token(args.u)
    elif cmd == "health":
        for k, v in b.health().items():
            print(f"{k}\t{v}")
    elif cmd in ("crash", "restart"):
        if not args.server:
            raise InvalidArgument(f"{cmd} needs --server (test builds with fault endpoints)")
        if cmd == "crash":
            b.crash(args.target, args.wipe)
        else:
            b.restart(args.target)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except SBAError as exc:
        print(f"sba: {exc.code}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sba: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
