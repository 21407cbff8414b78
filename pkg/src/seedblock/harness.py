"""Deterministic fault injection and scenario runner.

A scenario is a text file, one action per line (``#`` starts a comment)::

    policy storage_form=original restore_mode=manual   # optional, before other steps
    register <client>
    issue <user> provider|seeker
    revoke <user>
    put <client> <file> <size> [by <provider>] [to <u1,u2>|to -]
    update <client> <file> <size> [by <provider>]
    delete <client> <file>
    get <client> <file> [as <seeker>]
    corrupt main|remote <client> <file> <offset>
    corrupt seed <client> <offset>
    flip-sweep remote <client> <file> payload|digest|header
    tamper <client> <file> body|signature
    drop-seed <client>
    reseed <client>
    crash main|remote [wipe]
    restart main|remote
    tick
    list <client>
    recover <client> <file> [as <seeker>]
    assert-identical <client> <file>
    serve | serve same | send-malformed | stop

Offsets are absolute container offsets or ``payload+K`` / ``digest+K`` /
``header+K``.  A trailing ``-> <code>`` declares the expected outcome (an
error code or ``degraded-backup``); such probe lines may name entities that do
not exist.  A ``#!expect <code>`` pragma marks a whole scenario as expected to
be rejected.
"""

from __future__ import annotations

import argparse
import os
import random
import shlex
import socket
import sys
import tempfile
from dataclasses import dataclass, field

from . import codec, envelope
from .errors import (DEGRADED_BACKUP, EXIT_OK, EXIT_USER, IntegrityError,
                     InvalidArgument, NotFound, SBAError,
                     ScenarioInvalid, SeedMissing)
from .service import BackupPolicy, BackupService, service_dirs
from .suite import DEFAULT_SUITE

REPORT_VERSION = 1

_ARITY = {
    "policy": (1, 2), "register": (1, 1), "issue": (2, 2), "revoke": (1, 1),
    "put": (3, 7), "update": (3, 5), "delete": (2, 2), "get": (2, 4),
    "corrupt": (3, 4), "flip-sweep": (4, 4), "tamper": (3, 3), "drop-seed": (1, 1),
    "reseed": (1, 1), "crash": (1, 2), "restart": (1, 1), "tick": (0, 0),
    "list": (1, 1), "recover": (2, 4), "assert-identical": (2, 2), "serve": (0, 1),
    "send-malformed": (0, 0), "stop": (0, 0),
}


@dataclass(frozen=True)
class Step:
    lineno: int
    action: str
    args: tuple
    expect: str | None = None

    @property
    def text(self) -> str:
        return " ".join((self.action,) + self.args)


@dataclass
class FaultScenario:
    steps: list
    seed: int = 0
    scenario_id: str = "scenario"
    expect_rejection: str | None = None

    @classmethod
    def parse(cls, text: str, seed: int = 0, scenario_id: str = "scenario") -> "FaultScenario":
        steps, pragma = [], None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            if raw.startswith("#!expect"):
                pragma = raw.split()[1]
                continue
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            expect = None
            if "->" in line:
                line, _, expect = line.partition("->")
                line, expect = line.strip(), expect.strip()
            words = shlex.split(line)
            action, args = words[0], tuple(words[1:])
            lo_hi = _ARITY.get(action)
            if lo_hi is None:
                raise ScenarioInvalid(f"line {lineno}: unknown action {action!r}")
            if not lo_hi[0] <= len(args) <= lo_hi[1]:
                raise ScenarioInvalid(f"line {lineno}: wrong argument count for {action}")
            steps.append(Step(lineno, action, args, expect))
        return cls(steps, seed, scenario_id, pragma)

    @classmethod
    def load(cls, path, seed: int = 0) -> "FaultScenario":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), seed, os.path.splitext(os.path.basename(path))[0])

    def validate(self) -> None:
        """Every non-probe step may only name entities created by earlier steps."""
        clients, files, users = set(), set(), set()
        seen_other = False
        for st in self.steps:
            a, args = st.action, st.args
            if a == "policy":
                if seen_other:
                    raise ScenarioInvalid(f"line {st.lineno}: policy must come first")
                for kv in args:
                    if "=" not in kv:
                        raise ScenarioInvalid(f"line {st.lineno}: policy wants key=value")
                continue
            seen_other = True
            probe = st.expect is not None

            def need(ok, what):
                if not ok and not probe:
                    raise ScenarioInvalid(f"line {st.lineno}: unknown {what}")

            if a == "register":
                clients.add(args[0])
            elif a == "issue":
                users.add(args[0])
            elif a == "revoke":
                need(args[0] in users, f"user {args[0]!r}")
            elif a in ("drop-seed", "reseed", "list"):
                need(args[0] in clients, f"client {args[0]!r}")
            elif a == "corrupt" and args[0] == "seed":
                need(args[1] in clients, f"client {args[1]!r}")
            elif a in ("put", "update", "delete", "get", "recover", "assert-identical",
                       "tamper", "corrupt", "flip-sweep"):
                c, fid = (args[1], args[2]) if a in ("corrupt", "flip-sweep") else args[:2]
                need(c in clients, f"client {c!r}")
                if a == "put":
                    files.add((c, fid))
                else:
                    need((c, fid) in files, f"file {c}/{fid}")
                for kw in ("by", "as"):
                    if kw in args:
                        u = args[args.index(kw) + 1]
                        need(u in users, f"user {u!r}")


@dataclass(frozen=True)
class FileVerdict:
    file_id: str
    verdict: str  # identical | corrupted | missing
    bytes_compared: int
    detail: str = ""


@dataclass(frozen=True)
class Event:
    step: int
    action: str
    outcome: str
    expected: str | None

    @property
    def ok(self) -> bool:
        return self.expected is None and self.outcome in ("ok", DEGRADED_BACKUP) \
            or self.outcome == self.expected


@dataclass
class RecoveryReport:
    scenario_id: str
    seed: int
    per_file: list = field(default_factory=list)
    events: list = field(default_factory=list)
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.events)

    def verdicts(self) -> dict:
        return {v.file_id: v.verdict for v in self.per_file}

    def outcomes(self) -> set:
        return {e.outcome for e in self.events}

    def to_text(self) -> str:
        lines = [f"sba-report {REPORT_VERSION}", f"scenario {self.scenario_id}",
                 f"seed {self.seed}", f"started_at {self.started_at!r}"]
        for e in self.events:
            exp = e.expected or "-"
            lines.append(f"event {e.step} {'ok' if e.ok else 'FAIL'} {e.outcome} "
                         f"expected={exp} {e.action}")
        for v in self.per_file:
            lines.append(f"file {v.file_id} {v.verdict} {v.bytes_compared} {v.detail or '-'}")
        lines.append(f"finished_at {self.finished_at!r}")
        return "\n".join(lines) + "\n"


def xor_oracle(file: bytes, seed: bytes) -> bytes:
    """Naive per-bit XOR with the seed tiled cyclically; test oracle only."""
    out = bytearray(len(file))
    n = len(seed)
    for i in range(len(file)):
        a, b = file[i], seed[i % n]
        v = 0
        for bit in range(8):
            if ((a >> bit) & 1) != ((b >> bit) & 1):
                v |= 1 << bit
        out[i] = v
    return bytes(out)


def _flip(path: str, offset: int) -> None:
    with open(path, "r+b") as fh:
        fh.seek(offset)
        b = fh.read(1)
        if len(b) != 1:
            raise InvalidArgument(f"offset {offset} beyond end of {os.path.basename(path)}")
        fh.seek(offset)
        fh.write(bytes([b[0] ^ 0xFF]))


def _offset(spec: str) -> int:
    region, plus, k = spec.partition("+")
    if not plus:
        return int(spec)
    base = {"payload": codec.HEADER_LEN, "digest": codec.DIGEST_OFFSET, "header": 0}
    if region not in base:
        raise InvalidArgument(f"unknown region {region!r}")
    return base[region] + int(k)


class ScenarioRunner:
    """Runs one scenario against a fresh in-process service."""

    def __init__(self, scenario: FaultScenario, workdir, *, fsync: bool = False,
                 key_bits: int = 2048):
        self.s = scenario
        self.workdir = os.fspath(workdir)
        self.fsync = fsync
        self.key_bits = key_bits
        self.rng = random.Random(scenario.seed)
        self.now = 0.0
        self.service = None
        self.tokens = {}
        self.snapshots = {}      # (client, file) -> plaintext at last write
        self.recovered = {}      # (client, file) -> (bytes | SBAError)
        self.providers = {}      # (client, file) -> provider user
        self.server = None
        self.report = RecoveryReport(scenario.scenario_id, scenario.seed)

    def _clock(self):
        return self.now

    def _build(self, policy):
        from .suite import RsaSuite
        suite = DEFAULT_SUITE if self.key_bits == DEFAULT_SUITE.key_bits else RsaSuite(self.key_bits)
        self.service = BackupService(*service_dirs(self.workdir), policy, suite=suite,
                                     fsync=self.fsync, randbytes=self.rng.randbytes,
                                     clock=self._clock)

    def run(self) -> RecoveryReport:
        self.s.validate()
        if os.path.exists(self.workdir) and os.listdir(self.workdir):
            raise InvalidArgument(f"data directory {self.workdir} is not clean")
        steps = list(self.s.steps)
        kv = {}
        while steps and steps[0].action == "policy":
            kv.update(a.split("=", 1) for a in steps.pop(0).args)
        try:
            policy = BackupPolicy(
                storage_form=kv.get("storage_form", "original"),
                restore_mode=kv.get("restore_mode", "manual"),
                auto_restore_poll_interval=float(kv.get("poll_interval", 5.0)))
        except (SBAError, ValueError) as exc:
            raise ScenarioInvalid(f"bad policy: {exc}") from exc
        self._build(policy)
        self.report.started_at = self.now
        try:
            for st in steps:
                self.now += 1.0
                try:
                    outcome = getattr(self, "_do_" + st.action.replace("-", "_"))(*st.args) or "ok"
                except SBAError as exc:
                    outcome = exc.code
                self.report.events.append(Event(st.lineno, st.text, outcome, st.expect))
        finally:
            if self.server is not None:
                self.server.stop()
            self.service.close()
        self.report.finished_at = self.now
        return self.report

    # -- helpers -----------------------------------------------------------

    def _ref(self, client):
        return codec.client_ref(client)

    def _opts(self, args):
        opts, rest, it = {}, [], iter(args)
        for a in it:
            if a in ("by", "as", "to"):
                opts[a] = next(it, "")
            else:
                rest.append(a)
        return rest, opts

    def _content(self, spec) -> bytes:
        if spec.startswith("@"):
            with open(spec[1:], "rb") as fh:
                return fh.read()
        return self.rng.randbytes(int(spec))

    def _token(self, u):
        if u is None:
            return None
        tok = self.tokens.get(u)
        if tok is None:
            raise NotFound(f"no token for {u!r}")
        return tok

    # -- actions -----------------------------------------------------------

    def _do_register(self, client):
        self.service.register(client)

    def _do_issue(self, u, role):
        self.tokens[u] = self.service.issue_token(u, role)

    def _do_revoke(self, u):
        self.service.revoke_token(u)

    def _do_put(self, client, fid, size, *rest):
        opts = self._opts(rest)[1]
        body = self._content(size)
        rcpt = None
        if "to" in opts:
            rcpt = [] if opts["to"] == "-" else opts["to"].split(",")
        res = self.service.put(client, fid, body, token=self._token(opts.get("by")),
                               recipients=rcpt, file_id=fid)
        self.snapshots[(client, fid)] = body
        self.providers[(client, fid)] = opts.get("by")
        self.recovered.pop((client, fid), None)
        return res.status

    def _do_update(self, client, fid, size, *rest):
        opts = self._opts(rest)[1]
        body = self._content(size)
        by = opts.get("by", self.providers.get((client, fid)))
        res = self.service.update(client, fid, body, token=self._token(by))
        self.snapshots[(client, fid)] = body
        self.recovered.pop((client, fid), None)
        return res.status

    def _do_delete(self, client, fid):
        self.service.delete(client, fid)

    def _do_get(self, client, fid, *rest):
        opts = self._opts(rest)[1]
        tok = self._token(opts.get("as"))
        if tok is None and self.service.policy.storage_form == "encrypted":
            self.service.get(client, fid)
            return
        self.service.get(client, fid, token=tok)

    def _do_corrupt(self, target, client, *rest):
        if target == "seed":
            _flip(self.service.remote.seed_path(self._ref(client)), int(rest[0]))
            return
        fid, spec = rest
        if target == "main":
            path = self.service.main.content_path(self._ref(client), fid)
        elif target == "remote":
            path = self.service.remote.encoded_path(self._ref(client), fid)
        else:
            raise InvalidArgument(f"unknown corrupt target {target!r}")
        _flip(path, _offset(spec))

    def _do_flip_sweep(self, target, client, fid, region):
        if target != "remote":
            raise InvalidArgument("flip-sweep supports the remote target only")
        ref = self._ref(client)
        path = self.service.remote.encoded_path(ref, fid)
        size = os.path.getsize(path)
        span = {"payload": range(codec.HEADER_LEN, size),
                "digest": range(codec.DIGEST_OFFSET, codec.HEADER_LEN),
                "header": range(0, codec.HEADER_LEN)}.get(region)
        if span is None:
            raise InvalidArgument(f"unknown region {region!r}")
        expected = self._stored_form(client, fid)
        for off in span:
            _flip(path, off)
            try:
                got = self.service.remote.recover_file(ref, fid)
            except SBAError as exc:
                got = exc
            finally:
                _flip(path, off)
            self.report.per_file.append(
                self._verdict(f"{client}/{fid}@{off}", expected, got))

    def _stored_form(self, client, fid) -> bytes:
        """Bytes the remote should yield: plaintext, or the main-cloud envelope."""
        if self.service.policy.storage_form == "original":
            return self.snapshots[(client, fid)]
        return self.service.main.get_file(self._ref(client), fid)

    def _do_tamper(self, client, fid, part):
        ref = self._ref(client)
        c = envelope.Ciphertext.from_bytes(self.service.main.get_file(ref, fid))
        if part == "body":
            body = bytearray(c.body)
            body[len(body) // 2] ^= 0x01
            c = envelope.Ciphertext(c.provider_u, c.wrapped_key, bytes(body), c.signature)
        elif part == "signature":
            suite = self.service.admin.suite
            _, rogue = suite.generate_keypair()
            c = envelope.Ciphertext(c.provider_u, c.wrapped_key, c.body,
                                    suite.sign(rogue, c.body))
        else:
            raise InvalidArgument(f"unknown tamper part {part!r}")
        # insider write through the normal path: digests stay consistent
        self.service.main.update_file(ref, fid, c.to_bytes())

    def _do_drop_seed(self, client):
        os.unlink(self.service.remote.seed_path(self._ref(client)))

    def _do_reseed(self, client):
        rec = self.service.admin.client(client)
        self.service.remote.store_seed(rec.client_ref, rec.seed_block())

    def _do_crash(self, target, *mode):
        self.service.crash(target, wipe="wipe" in mode)

    def _do_restart(self, target):
        self.service.restart(target)

    def _do_tick(self):
        self.service.reconcile()

    def _do_list(self, client):
        self.service.list(client)

    def _do_recover(self, client, fid, *rest):
        opts = self._opts(rest)[1]
        u = opts.get("as")
        if u is None and self.service.policy.storage_form == "encrypted":
            u = self.providers.get((client, fid))
        try:
            got = self.service.restore(client, fid, self._token(u))
        except SBAError as exc:
            self.recovered[(client, fid)] = exc
            raise
        self.recovered[(client, fid)] = got

    def _do_assert_identical(self, client, fid):
        key = (client, fid)
        if key not in self.recovered:
            try:
                self._do_recover(client, fid)
            except SBAError:
                pass
        self.report.per_file.append(
            self._verdict(f"{client}/{fid}", self.snapshots.get(key), self.recovered[key]))

    @staticmethod
    def _verdict(label, expected, got) -> FileVerdict:
        if isinstance(got, SBAError):
            if isinstance(got, IntegrityError) and not isinstance(got, SeedMissing):
                return FileVerdict(label, "corrupted", 0, got.code)
            return FileVerdict(label, "missing", 0, got.code)
        if expected is not None and got == expected:
            return FileVerdict(label, "identical", len(got))
        # the one outcome the system must never produce
        return FileVerdict(label, "corrupted", len(got), "mismatch")

    def _do_serve(self, *mode):
        from .wire import SBAServer
        if mode and mode[0] == "same":
            if self.server is None:
                raise InvalidArgument("'serve same' needs a running server")
            SBAServer(self.service, "127.0.0.1", self.server.port).server_close()
            return
        self.server = SBAServer(self.service, "127.0.0.1", 0).start()

    def _do_send_malformed(self):
        from .errors import from_code
        from .wire import read_frame
        if self.server is None:
            raise InvalidArgument("send-malformed needs a running server")
        with socket.create_connection(("127.0.0.1", self.server.port), timeout=10) as sock:
            sock.sendall(b"HELLO THERE\n")
            word, fields = read_frame(sock.makefile("rb"))
        if int(word) >= 400:
            raise from_code(fields["error"].decode(), fields.get("message", b"").decode())

    def _do_stop(self):
        if self.server is not None:
            self.server.stop()
            self.server = None


def run_scenario(s: FaultScenario, workdir=None, **kwargs) -> RecoveryReport:
    """Run ``s`` in ``workdir`` (must be empty or absent; a temp dir when None)."""
    s.validate()
    if workdir is None:
        with tempfile.TemporaryDirectory(prefix="sba-scn-") as tmp:
            return ScenarioRunner(s, os.path.join(tmp, "data"), **kwargs).run()
    return ScenarioRunner(s, workdir, **kwargs).run()


def corpus_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "scenarios")


def corpus() -> list:
    d = corpus_dir()
    return sorted(os.path.join(d, f) for f in os.listdir(d) if f.endswith(".scn"))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sba-harness", description="Fault-injection scenario runner")
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("scenario")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--report", help="write the report here (default: stdout)")
    run.add_argument("--workdir", help="clean data directory (default: a temp dir)")
    run.add_argument("--fsync", action="store_true", help="fsync every write")
    args = ap.parse_args(argv)
    try:
        s = FaultScenario.load(args.scenario, args.seed)
        report = run_scenario(s, args.workdir, fsync=args.fsync)
    except SBAError as exc:
        print(f"sba-harness: {exc.code}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    text = report.to_text()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    bad = [v for v in report.per_file if v.detail == "mismatch"]
    return EXIT_OK if report.ok and not bad else EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
