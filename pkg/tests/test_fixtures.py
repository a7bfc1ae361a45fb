import struct

import pytest

from qore.fixtures import (
    FixtureFormatError, check_hkdf, check_suci, format_fixture, list_fixtures, load_fixture, parse_fixture,
    verify_fixtures,
)
from qore.suci import MacMismatch


def test_every_fixture_verifies():
    results = verify_fixtures()
    assert {r.name for r in results} == set(list_fixtures())
    assert all(r.ok for r in results), [r for r in results if not r.ok]


def test_fixtures_name_their_source():
    for name in list_fixtures():
        assert load_fixture(name).source


def test_suci_fixture_layout_by_hand():
    first = load_fixture("suci_envelopes.txt").stanzas[0]
    wire = first["suci"]
    assert wire[:2] == b"SU" and wire[2] == 1 and wire[3] == 0
    assert wire[4] == 5 and wire[5:10] == b"00101"
    assert wire[10] == 1 and wire[11:12] == b"0"
    scheme, key_id, ct_len = struct.unpack(">BBH", wire[12:16])
    assert (scheme, key_id, ct_len) == (0x0A, 1, 1088)
    msin_len = struct.unpack(">H", wire[16 + ct_len:18 + ct_len])[0]
    assert msin_len == 5
    assert len(wire) == 18 + ct_len + msin_len + 32


def test_tampered_fixtures_are_caught():
    hkdf = load_fixture("hkdf_sha256_case1.txt")
    bad = dict(hkdf.stanzas[0], okm=b"\x00" * 42)
    assert check_hkdf(type(hkdf)(hkdf.name, hkdf.header, (bad,))) == ["case 0: OKM differs"]
    suci = load_fixture("suci_envelopes.txt")
    s = dict(suci.stanzas[0])
    s["seed"] = b"\x12" * 32
    with pytest.raises(MacMismatch):
        check_suci(type(suci)(suci.name, suci.header, (s,)))


def test_format_roundtrip():
    text = format_fixture(["demo", "source: hand-written"], [{"a": b"\x01"}, {"a": b"\x02", "b": b""}])
    fx = parse_fixture("demo", text)
    assert fx.source == "hand-written"
    assert fx.stanzas == ({"a": b"\x01"}, {"a": b"\x02", "b": b""})


@pytest.mark.parametrize("text", [
    "a = 01\n",
    "# source: x\na 01\n",
    "# source: x\na = 0g\n",
    "# source: x\na = 01\na = 02\n",
    "# source: x\na = 01\n# late\n",
])
def test_parse_rejects_bad_format(text):
    with pytest.raises(FixtureFormatError):
        parse_fixture("bad", text)
