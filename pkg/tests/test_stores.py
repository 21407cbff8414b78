import os
import threading

import pytest

from seedblock import codec
from seedblock.cloud_store import MainCloud
from seedblock.errors import (AlreadyExists, CorruptedBackup, CorruptionDetected,
                              InvalidArgument, NotFound, SeedMissing,
                              Unauthorized, Unavailable)
from seedblock.remote import RemoteBackup

REF = codec.client_ref("alice")


def seed_for(label="alice"):
    return codec.make_seed_block(os.urandom(codec.SEED_LEN), codec.derive_client_id(label),
                                 ref=codec.client_ref(label))


@pytest.fixture
def main(tmp_path):
    return MainCloud(tmp_path / "main", storage_form="original", fsync=False,
                     authorize=lambda ref: ref == REF)


# -- main cloud -------------------------------------------------------------

def test_put_get_roundtrip(main):
    body = os.urandom(1024)
    res = main.put_file(REF, "a.bin", body)
    assert main.get_file(REF, res.file_id) == body
    assert res.digest == codec.digest(body).hex()


def test_unregistered_client(main):
    with pytest.raises(Unauthorized):
        main.put_file(codec.client_ref("mallory"), "x", b"1")


def test_get_after_delete(main):
    fid = main.put_file(REF, "a", b"abc").file_id
    assert main.delete_file(REF, fid)
    with pytest.raises(NotFound):
        main.get_file(REF, fid)
    with pytest.raises(NotFound):
        main.delete_file(REF, fid)
    assert main.is_tombstoned(REF, fid)


def test_update(main):
    fid = main.put_file(REF, "a", b"one").file_id
    d = main.update_file(REF, fid, b"two").digest
    assert main.get_file(REF, fid) == b"two" and d == codec.digest(b"two").hex()
    with pytest.raises(NotFound):
        main.update_file(REF, "nosuch", b"x")


def test_identical_update_keeps_digest_but_reruns_backup(tmp_path):
    calls = []
    main = MainCloud(tmp_path, storage_form="original", fsync=False,
                     backup=lambda ref, fid, entry, body: calls.append(fid) or "ok")
    fid = main.put_file(REF, "a", b"same").file_id
    d1 = main.entry(REF, fid).digest
    assert main.update_file(REF, fid, b"same").digest == d1
    assert calls == [fid, fid]


def test_corruption_on_disk_detected(main):
    fid = main.put_file(REF, "a", b"0123456789").file_id
    path = main.content_path(REF, fid)
    with open(path, "r+b") as fh:
        fh.seek(4)
        fh.write(b"X")
    with pytest.raises(CorruptionDetected):
        main.get_file(REF, fid)
    os.unlink(path)
    with pytest.raises(CorruptionDetected):
        main.get_file(REF, fid)


def test_manifest_persisted_and_versioned(main, tmp_path):
    fid = main.put_file(REF, "a", b"abc").file_id
    again = MainCloud(main.root, storage_form="original", fsync=False)
    assert again.get_file(REF, fid) == b"abc"
    import json
    m = json.load(open(again.manifest_path))
    assert m["version"] == 1 and m["format"] == "sba-manifest"
    assert m["clients"][REF.hex()]["files"][fid]["storage_form"] == "original"


def test_crash_and_wipe(main):
    fid = main.put_file(REF, "a", b"abc").file_id
    main.crash(wipe=True)
    with pytest.raises(Unavailable):
        main.get_file(REF, fid)
    main.restart()
    with pytest.raises(NotFound):
        main.get_file(REF, fid)


def test_bad_file_ids(main):
    for bad in ("../x", ".hidden", "a/b"):
        with pytest.raises(InvalidArgument):
            main.put_file(REF, "n", b"", file_id=bad)


def test_per_file_linearizable(main):
    fid = main.put_file(REF, "a", b"0" * 100).file_id
    errors = []

    def writer(k):
        for i in range(30):
            main.update_file(REF, fid, bytes([k]) * (100 + i))
            body = main.get_file(REF, fid)  # digest check would catch torn writes
            if len(set(body)) != 1:
                errors.append(body[:4])

    ts = [threading.Thread(target=writer, args=(k,)) for k in range(1, 5)]
    [t.start() for t in ts]
    [t.join() for t in ts]
    assert not errors


# -- remote backup ----------------------------------------------------------

def test_store_and_fetch_seed(remote):
    s = seed_for()
    remote.store_seed(REF, s)
    assert remote.fetch_seed(REF).bytes == s.bytes
    with pytest.raises(AlreadyExists):
        remote.store_seed(REF, s)


def test_seed_survives_restart(tmp_path):
    s = seed_for()
    RemoteBackup(tmp_path, fsync=True).store_seed(REF, s)
    assert RemoteBackup(tmp_path).fetch_seed(REF).bytes == s.bytes


def test_store_encoded_needs_seed(remote):
    enc = codec.EncodedFile.encode(b"x", seed_for(), REF)
    with pytest.raises(Unauthorized):
        remote.store_encoded(REF, "f1", enc)


def test_encoded_roundtrip_and_overwrite(remote):
    s = seed_for()
    remote.store_seed(REF, s)
    enc = codec.EncodedFile.encode(b"version one", s, REF)
    remote.store_encoded(REF, "f1", enc, "n")
    assert remote.fetch_encoded_raw(REF, "f1") == enc.to_bytes()
    remote.store_encoded(REF, "f1", codec.EncodedFile.encode(b"v2", s, REF))
    assert remote.recover_file(REF, "f1") == b"v2"


def test_recover_errors(remote):
    with pytest.raises(SeedMissing):
        remote.recover_file(REF, "f1")
    s = seed_for()
    remote.store_seed(REF, s)
    with pytest.raises(NotFound):
        remote.recover_file(REF, "nosuch")


def test_byte_flip_sweep_small_file(remote):
    s = seed_for()
    remote.store_seed(REF, s)
    body = os.urandom(32)
    remote.store_encoded(REF, "f1", codec.EncodedFile.encode(body, s, REF))
    path = remote.encoded_path(REF, "f1")
    raw = open(path, "rb").read()
    for off in range(len(raw)):
        bad = bytearray(raw)
        bad[off] ^= 0x01
        open(path, "wb").write(bad)
        with pytest.raises(CorruptedBackup):
            remote.recover_file(REF, "f1")
    open(path, "wb").write(raw)
    assert remote.recover_file(REF, "f1") == body


def test_list_recoverable(remote):
    with pytest.raises(Unauthorized):
        remote.list_recoverable(REF)
    s = seed_for()
    remote.store_seed(REF, s)
    assert remote.list_recoverable(REF) == []
    sizes = {"c": 5, "a": 0, "b": 300}
    for fid, n in sizes.items():
        remote.store_encoded(REF, fid, codec.EncodedFile.encode(os.urandom(n), s, REF), fid)
    got = remote.list_recoverable(REF)
    assert [r.file_id for r in got] == ["a", "b", "c"]
    assert {r.file_id: r.payload_length for r in got} == sizes


def test_remote_down(remote):
    remote.crash()
    with pytest.raises(Unavailable):
        remote.store_seed(REF, seed_for())
    remote.restart()
    remote.store_seed(REF, seed_for())
