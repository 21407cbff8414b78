import os
import subprocess
import sys

import pytest

from seedblock.cli import main
from seedblock.config import Config, load_config, parse_config
from seedblock.errors import InvalidArgument


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "sba.conf"
    path.write_text("# test config\ndata_dir = data\nstorage_form = encrypted\n"
                    "restore_mode = manual\npoll_interval = 2.5\n")
    return path


def sba(cfg, *argv):
    return main(["--config", str(cfg), *argv])


def test_config_parsing(cfg, tmp_path):
    c = load_config(cfg)
    assert c.storage_form == "encrypted" and c.poll_interval == 2.5
    assert c.main_dir == str(tmp_path / "data" / "main")
    assert c.port == 8470 and c.enable_fault_endpoints is False
    c = parse_config("enable_fault_endpoints = yes\nport=9000\n", "/x")
    assert c.enable_fault_endpoints and c.port == 9000 and c.data_dir == "/x/sba-data"
    for bad in ("nonsense\n", "colour = blue\n", "port = many\n"):
        with pytest.raises(InvalidArgument):
            parse_config(bad)
    assert Config(data_dir="d").remote_dir == os.path.join("d", "remote")


def test_full_cli_flow(cfg, tmp_path, capsys):
    assert sba(cfg, "register", "alice") == 0
    assert capsys.readouterr().out.startswith("alice\t")
    p, s = tmp_path / "p.tok", tmp_path / "s.tok"
    assert sba(cfg, "token", "issue", "p1", "--role", "provider", "-o", str(p)) == 0
    assert sba(cfg, "token", "issue", "s1", "--role", "seeker", "-o", str(s)) == 0
    assert oct(os.stat(p).st_mode & 0o777) == "0o600"
    src = tmp_path / "in.bin"
    src.write_bytes(os.urandom(10000))
    capsys.readouterr()
    assert sba(cfg, "put", "alice", str(src), "--token", str(p), "--to", "s1") == 0
    fid = capsys.readouterr().out.strip()
    assert sba(cfg, "list", "alice") == 0
    assert fid in capsys.readouterr().out
    out = tmp_path / "out.bin"
    assert sba(cfg, "get", "alice", fid, "-o", str(out), "--token", str(s)) == 0
    assert out.read_bytes() == src.read_bytes()
    assert sba(cfg, "rm", "alice", fid) == 0
    assert sba(cfg, "get", "alice", fid, "-o", str(out)) == 1
    rec = tmp_path / "rec.bin"
    assert sba(cfg, "recover", "alice", fid, "-o", str(rec), "--token", str(s)) == 0
    assert rec.read_bytes() == src.read_bytes()
    assert sba(cfg, "recover", "alice", fid, "-o", str(rec), "--token", str(p)) == 1
    assert sba(cfg, "token", "revoke", "s1") == 0
    assert sba(cfg, "recover", "alice", fid, "-o", str(rec), "--token", str(s)) == 1
    assert sba(cfg, "health") == 0
    assert "remote\tup" in capsys.readouterr().out


def test_exit_codes(cfg, tmp_path, capsys):
    sba(cfg, "register", "alice")
    sba(cfg, "token", "issue", "p1", "--role", "provider", "-o", str(tmp_path / "p.tok"))
    src = tmp_path / "in.bin"
    src.write_bytes(b"data")
    capsys.readouterr()
    sba(cfg, "put", "alice", str(src), "--token", str(tmp_path / "p.tok"))
    fid = capsys.readouterr().out.strip()
    c = load_config(cfg)
    from seedblock import codec
    path = os.path.join(c.remote_dir, "encoded", codec.client_ref("alice").hex(), fid + ".sba")
    raw = bytearray(open(path, "rb").read())
    raw[-1] ^= 1
    open(path, "wb").write(raw)
    assert sba(cfg, "recover", "alice", fid, "--token", str(tmp_path / "p.tok")) == 2
    assert "corrupted-backup" in capsys.readouterr().err
    assert sba(cfg, "register", "alice") == 1
    assert main(["--server", "127.0.0.1:1", "health"]) == 3
    assert sba(cfg, "crash", "--target", "main") == 1  # needs --server
    assert sba(cfg, "put", "alice", str(tmp_path / "missing")) == 1


def test_console_script_installed(tmp_path):
    out = subprocess.run([sys.executable, "-m", "seedblock.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "register" in out.stdout
