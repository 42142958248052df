import bz2
import gzip
import io
import ipaddress
import struct
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shutdownscope.harness import synth_rib
from shutdownscope.rib import (MrtFormatError, RouteEntry, export_lines, originated_prefixes, parse_bview,
                               read_bview)

N = ipaddress.IPv4Network


def record(ts, mtype, subtype, body: bytes) -> bytes:
    return struct.pack("!IHHI", ts, mtype, subtype, len(body)) + body


# Hand-assembled bview, written byte by byte from the record layout rather
# than through the package's own writer.
PEER_TABLE = bytes.fromhex(
    "c0000201" "0004" "74657374" "0002"  # collector id, view "test", 2 peers
    "00" "0a000001" "c6336401" "fde8"  # IPv4 peer, 2-byte AS 65000
    "03" "0a000002" "20010db8000000000000000000000001" "00030d40"  # IPv6 peer, 4-byte AS 200000
)
RIB_BODY = bytes.fromhex(
    "00000000" "16" "050004" "0002"  # seq 0, 5.0.4.0/22, two entries
    # entry 1: peer 0, ORIGIN + AS_PATH(seq 65000 3356 58224) + COMMUNITIES
    "0000" "00000000" "001c"
    "40010100"
    "40020e" "0203" "0000fde8" "00000d1c" "0000e370"
    "c00804" "fde80064"
    # entry 2: peer 1, ORIGIN + extended-length AS_PATH(seq 200000 3356, set {58224, 64496})
    "0001" "00000000" "001c"
    "40010100"
    "50020014" "0202" "00030d40" "00000d1c" "0102" "0000e370" "0000fbf0"
)
TS = 1767571200  # 2026-01-05T00:00:00Z
HAND_BVIEW = (record(TS, 13, 1, PEER_TABLE) + record(TS, 13, 2, RIB_BODY)
              + record(TS, 13, 4, b"\x00" * 6) + record(TS, 16, 4, b"\x01\x02"))


def test_hand_built_bview():
    snap = parse_bview(io.BytesIO(HAND_BVIEW))
    assert snap.capture_date == date(2026, 1, 5)
    assert snap.peer_count == 2
    assert snap.peers[0].asn == 65000 and snap.peers[0].address == "198.51.100.1"
    assert snap.peers[1].asn == 200000 and snap.peers[1].address == "2001:db8::1"
    assert snap.entries == (
        RouteEntry(N("5.0.4.0/22"), frozenset({58224}), (65000, 3356, 58224), 0),
        RouteEntry(N("5.0.4.0/22"), frozenset({58224, 64496}), (200000, 3356, 58224, 64496), 1),
    )
    assert snap.skipped == {(13, 4): 1, (16, 4): 1}
    assert snap.skipped_total == 2


def test_caller_date_wins_over_header():
    snap = parse_bview(io.BytesIO(HAND_BVIEW), date(2020, 2, 2))
    assert snap.capture_date == date(2020, 2, 2)


@pytest.mark.parametrize("wrap", [gzip.compress, bz2.compress, lambda b: b])
def test_compression_sniffed(tmp_path, wrap):
    path = tmp_path / "bview"
    path.write_bytes(wrap(HAND_BVIEW))
    assert len(read_bview(path).entries) == 2


def test_non_seekable_stream():
    class Pipe(io.RawIOBase):
        def __init__(self, data):
            self._b = io.BytesIO(data)

        def readable(self):
            return True

        def seekable(self):
            return False

        def readinto(self, b):
            chunk = self._b.read(min(len(b), 7))
            b[:len(chunk)] = chunk
            return len(chunk)

    snap = parse_bview(Pipe(gzip.compress(HAND_BVIEW)))
    assert len(snap.entries) == 2


def test_truncation_reports_offset():
    cut = HAND_BVIEW[: 12 + len(PEER_TABLE) + 12 + 20]
    with pytest.raises(MrtFormatError) as exc:
        parse_bview(io.BytesIO(cut))
    assert exc.value.offset == 12 + len(PEER_TABLE)
    assert "byte offset" in str(exc.value)


def test_truncated_header():
    with pytest.raises(MrtFormatError, match="truncated MRT header"):
        parse_bview(io.BytesIO(HAND_BVIEW[:5]))


def test_corrupt_gzip():
    blob = bytearray(gzip.compress(HAND_BVIEW))
    blob[20:30] = b"\xff" * 10
    with pytest.raises(MrtFormatError):
        parse_bview(io.BytesIO(bytes(blob)))


def test_rib_before_peer_table():
    with pytest.raises(MrtFormatError, match="before PEER_INDEX_TABLE"):
        parse_bview(io.BytesIO(record(TS, 13, 2, RIB_BODY)))


def test_peer_index_out_of_range():
    one_peer = bytes.fromhex("c0000201" "0000" "0001" "02" "0a000001" "c6336401" "0000fde8")
    with pytest.raises(MrtFormatError, match="peer index 1"):
        parse_bview(io.BytesIO(record(TS, 13, 1, one_peer) + record(TS, 13, 2, RIB_BODY)))


def test_bad_prefix_length():
    body = bytes.fromhex("00000000" "21" "0500040000" "0000")
    with pytest.raises(MrtFormatError, match="prefix length 33"):
        parse_bview(io.BytesIO(record(TS, 13, 1, PEER_TABLE) + record(TS, 13, 2, body)))


def test_empty_stream_needs_date():
    with pytest.raises(MrtFormatError):
        parse_bview(io.BytesIO(b""))
    assert parse_bview(io.BytesIO(b""), date(2026, 1, 1)).entries == ()


def test_originated_prefixes():
    entries = [
        RouteEntry(N("0.0.0.0/0"), frozenset({10}), (1, 10), 0),
        RouteEntry(N("5.0.0.0/24"), frozenset({10}), (1, 10), 0),
        RouteEntry(N("5.0.0.0/24"), frozenset({10}), (2, 10), 1),
        RouteEntry(N("5.0.1.0/24"), frozenset({20, 30}), (1, 20, 30), 0),
        RouteEntry(N("6.0.0.0/24"), frozenset({99}), (1, 99), 0),
    ]
    snap = parse_bview(io.BytesIO(synth_rib(entries)))
    assert originated_prefixes(snap, {10}) == {N("5.0.0.0/24")}
    assert originated_prefixes(snap, {30}) == {N("5.0.1.0/24")}  # AS_SET member counts
    assert originated_prefixes(snap, {10, 30, 99}) == {N("5.0.0.0/24"), N("5.0.1.0/24"), N("6.0.0.0/24")}
    with pytest.raises(ValueError):
        originated_prefixes(snap, set())


def test_export_lines():
    snap = parse_bview(io.BytesIO(HAND_BVIEW))
    assert list(export_lines(snap)) == [
        "5.0.4.0/22\t58224\t65000 3356 58224",
        "5.0.4.0/22\t58224,64496\t200000 3356 58224 64496",
    ]


def test_synth_rib_rejects_invalid_prefix():
    with pytest.raises(ValueError):
        synth_rib([RouteEntry("5.0.0.0/24", frozenset({1}), (1,), 0)])


def test_synth_rib_empty_is_parseable():
    snap = parse_bview(io.BytesIO(synth_rib([])))
    assert snap.entries == () and snap.peer_count == 1


def test_long_as_path_uses_extended_length():
    path = tuple(range(1, 80))  # 79 * 4 bytes > 255
    e = [RouteEntry(N("5.0.0.0/24"), frozenset({79}), path, 0)]
    assert parse_bview(io.BytesIO(synth_rib(e))).entries == tuple(e)


# -- properties ---------------------------------------------------------------

@st.composite
def route_entries(draw, max_peers=4):
    plen = draw(st.integers(0, 32))
    addr = draw(st.integers(0, 2**32 - 1)) >> (32 - plen) << (32 - plen) if plen else 0
    prefix = N((addr, plen))
    asn = st.integers(1, 2**32 - 1)
    kind = draw(st.sampled_from(["seq", "set", "empty"]))
    if kind == "empty":
        path, origin = (), frozenset()
    elif kind == "seq":
        path = tuple(draw(st.lists(asn, min_size=1, max_size=6)))
        origin = frozenset(path[-1:])
    else:
        head = tuple(draw(st.lists(asn, max_size=4)))
        members = tuple(draw(st.lists(asn, min_size=2, max_size=4, unique=True)))
        path, origin = head + members, frozenset(members)
    return RouteEntry(prefix, origin, path, draw(st.integers(0, max_peers - 1)))


@given(st.lists(route_entries(), max_size=30))
def test_round_trip_identity(entries):
    snap = parse_bview(io.BytesIO(synth_rib(entries, peer_count=4)))
    assert snap.entries == tuple(entries)


@given(st.binary(max_size=300))
def test_fuzz_only_format_errors(blob):
    try:
        parse_bview(io.BytesIO(blob), date(2026, 1, 1))
    except MrtFormatError:
        pass


@settings(max_examples=50)
@given(st.lists(route_entries(), min_size=1, max_size=10), st.data())
def test_truncation_never_crashes(entries, data):
    blob = synth_rib(entries, peer_count=4)
    cut = data.draw(st.integers(0, len(blob) - 1))
    try:
        snap = parse_bview(io.BytesIO(blob[:cut]), date(2026, 1, 1))
    except MrtFormatError:
        return
    # a cut on a record boundary yields a valid prefix of the entry list
    assert snap.entries == tuple(entries[: len(snap.entries)])
