import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedblock.envelope import (Ciphertext, attribute, decrypt_message,
                                encrypt_message, is_ciphertext)
from seedblock.errors import (IntegrityFailure, InvalidArgument, NotFound,
                              ProviderAuthenticityFailure, Unauthorized)


@pytest.fixture(scope="module")
def members(tmp_path_factory):
    from seedblock.identity import Admin
    admin = Admin(tmp_path_factory.mktemp("admin"), fsync=False)
    toks = {u: admin.issue_token(u, role) for u, role in
            [("p1", "provider"), ("p2", "provider"), ("s1", "seeker"),
             ("s2", "seeker"), ("s3", "seeker")]}
    return admin, toks


def test_roundtrip(members):
    admin, t = members
    c = encrypt_message(b"secret report", t["p1"], ["s1"], admin)
    assert decrypt_message(c, t["s1"], admin) == b"secret report"
    assert c.recipients() == ["s1"]


def test_multiple_recipients(members):
    admin, t = members
    c = encrypt_message(b"m", t["p1"], ["s1", "s2", "s1"], admin)
    assert c.recipients() == ["s1", "s2"]
    assert decrypt_message(c, t["s2"], admin) == b"m"


def test_non_recipient_refused(members):
    admin, t = members
    c = encrypt_message(b"m", t["p1"], ["s1"], admin)
    with pytest.raises(Unauthorized):
        decrypt_message(c, t["s2"], admin)


def test_encrypt_errors(members):
    admin, t = members
    with pytest.raises(InvalidArgument):
        encrypt_message(b"m", t["p1"], [], admin)
    with pytest.raises(NotFound):
        encrypt_message(b"m", t["p1"], ["s1", "ghost"], admin)
    bad = t["p1"].__class__(t["p1"].u, t["p2"].public_key, t["p1"].private_key,
                            t["p1"].rho, t["p1"].role, t["p1"].issued_at)
    with pytest.raises(Unauthorized):
        encrypt_message(b"m", bad, ["s1"], admin)


def test_body_byte_flips_detected_for_every_recipient(members):
    admin, t = members
    c = encrypt_message(b"short msg", t["p1"], ["s1", "s2"], admin)
    for i in range(len(c.body)):
        body = bytearray(c.body)
        body[i] ^= 0x80
        bad = Ciphertext(c.provider_u, c.wrapped_key, bytes(body), c.signature)
        for seeker in ("s1", "s2"):
            with pytest.raises(IntegrityFailure):
                decrypt_message(bad, t[seeker], admin)


def test_resigned_by_other_key(members):
    admin, t = members
    c = encrypt_message(b"m", t["p1"], ["s1"], admin)
    _, rogue = admin.suite.generate_keypair()
    bad = Ciphertext(c.provider_u, c.wrapped_key, c.body, admin.suite.sign(rogue, c.body))
    with pytest.raises(ProviderAuthenticityFailure):
        decrypt_message(bad, t["s1"], admin)
    # signed by another registered provider is still not p1
    bad = Ciphertext(c.provider_u, c.wrapped_key, c.body,
                     admin.suite.sign(t["p2"].private_key, c.body))
    with pytest.raises(ProviderAuthenticityFailure):
        decrypt_message(bad, t["s1"], admin)


def test_swapped_provider_name_fails(members):
    admin, t = members
    c = encrypt_message(b"m", t["p1"], ["s1"], admin)
    bad = Ciphertext("p2", c.wrapped_key, c.body, c.signature)
    with pytest.raises((IntegrityFailure, ProviderAuthenticityFailure)):
        decrypt_message(bad, t["s1"], admin)


def test_revoked_seeker_refused(tmp_path):
    from seedblock.identity import Admin
    admin = Admin(tmp_path, fsync=False)
    p, s = admin.issue_token("p", "provider"), admin.issue_token("s", "seeker")
    c = encrypt_message(b"m", p, ["s"], admin)
    admin.revoke("s")
    with pytest.raises(Unauthorized):
        decrypt_message(c, s, admin)
    # attribution survives revocation of the provider
    admin.revoke("p")
    assert attribute(c, admin.snapshot(), admin.suite) == "p"


def test_attribution_is_pure(members):
    admin, t = members
    c = encrypt_message(b"m", t["p2"], ["s3"], admin)
    snap = admin.snapshot()
    assert attribute(c, snap, admin.suite) == "p2"
    assert attribute(Ciphertext("p1", c.wrapped_key, c.body, c.signature),
                     snap, admin.suite) is None


def test_wire_form_roundtrip(members):
    admin, t = members
    c = encrypt_message(os.urandom(1000), t["p1"], ["s1", "s2"], admin)
    raw = c.to_bytes()
    assert raw[:4] == b"SBE1"
    assert Ciphertext.from_bytes(raw) == c
    assert is_ciphertext(raw)
    for cut in (0, 3, 10, len(raw) - 1):
        assert not is_ciphertext(raw[:cut])
    assert not is_ciphertext(raw + b"\x00")


def test_every_other_token_fails_on_random_envelopes(members):
    admin, t = members
    rng = random.Random(2)
    for _ in range(20):
        rcpt = rng.choice(["s1", "s2", "s3"])
        c = encrypt_message(rng.randbytes(rng.randint(0, 500)), t["p1"], [rcpt], admin)
        for u, tok in t.items():
            if u == rcpt:
                continue
            with pytest.raises(Unauthorized):
                decrypt_message(c, tok, admin)


@settings(max_examples=25, deadline=None)
@given(st.binary(max_size=4096))
def test_roundtrip_property(members, msg):
    admin, t = members
    assert decrypt_message(encrypt_message(msg, t["p1"], ["s1"], admin), t["s1"], admin) == msg


@pytest.mark.parametrize("size", [0, 1, 1 << 20])
def test_roundtrip_sizes(members, size):
    admin, t = members
    msg = os.urandom(size)
    assert decrypt_message(encrypt_message(msg, t["p1"], ["s1"], admin), t["s1"], admin) == msg
