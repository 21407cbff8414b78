import os

import pytest

from seedblock._kernel import KERNELS
from seedblock.identity import Admin
from seedblock.remote import RemoteBackup
from seedblock.service import BackupPolicy, BackupService, service_dirs

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(params=sorted(KERNELS))
def kernel(request, monkeypatch):
    """Run a test once per available XOR kernel (compiled and fallback)."""
    from seedblock import codec
    monkeypatch.setattr(codec, "xor_tile", KERNELS[request.param])
    return request.param


@pytest.fixture
def remote(tmp_path):
    return RemoteBackup(tmp_path / "remote", fsync=False)


@pytest.fixture
def admin(tmp_path, remote):
    return Admin(tmp_path / "admin", remote=remote, fsync=False)


@pytest.fixture
def make_service(tmp_path):
    made = []

    def factory(storage_form="original", restore_mode="manual", poll=5.0, *,
                base=None, **kw):
        base = base or tmp_path / f"svc{len(made)}"
        policy = BackupPolicy(storage_form, restore_mode, poll, kw.pop("retry_queue_size", 1024))
        svc = BackupService(*service_dirs(base), policy, fsync=kw.pop("fsync", False), **kw)
        made.append(svc)
        return svc

    yield factory
    for svc in made:
        svc.close()


@pytest.fixture
def enc_service(make_service):
    """Encrypted-form service with alice registered, provider p1, seekers s1, s2."""
    svc = make_service("encrypted")
    svc.register("alice")
    svc.tokens = {
        "p1": svc.issue_token("p1", "provider"),
        "s1": svc.issue_token("s1", "seeker"),
        "s2": svc.issue_token("s2", "seeker"),
    }
    return svc


# -- acceptance summary: one PASS/FAIL line per criterion --------------------

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        marker = _acceptance_marks.get(report.nodeid)
        if marker is not None:
            _acceptance[report.nodeid] = (marker, report.outcome, report.duration)


_acceptance_marks = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _acceptance_marks[item.nodeid] = m.args


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), outcome, duration in sorted(_acceptance.values(), key=lambda v: int(v[0][0])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {num}: {title} ({duration:.1f}s)")
