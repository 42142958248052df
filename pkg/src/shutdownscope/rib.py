"""Reading MRT TABLE_DUMP_V2 RIB snapshots (RFC 6396) and extracting originated prefixes."""

from __future__ import annotations

import bz2
import gzip
import io
import ipaddress
import struct
import zlib
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

MRT_HEADER = struct.Struct("!IHHI")

TABLE_DUMP_V2 = 13
PEER_INDEX_TABLE = 1
RIB_IPV4_UNICAST = 2

ATTR_AS_PATH = 2
ATTR_FLAG_EXTENDED = 0x10

SEG_AS_SET = 1
SEG_AS_SEQUENCE = 2

PEER_TYPE_IPV6 = 0x01
PEER_TYPE_AS4 = 0x02

GZIP_MAGIC = b"\x1f\x8b"
BZIP2_MAGIC = b"BZh"

DEFAULT_ROUTE = ipaddress.IPv4Network("0.0.0.0/0")


class MrtFormatError(ValueError):
    """Malformed or truncated MRT input. ``offset`` is the absolute byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Peer:
    bgp_id: str
    address: str
    asn: int


@dataclass(frozen=True)
class RouteEntry:
    prefix: ipaddress.IPv4Network
    origin: frozenset[int]
    path: tuple[int, ...]
    peer_index: int


@dataclass(frozen=True)
class RibSnapshot:
    capture_date: date
    entries: tuple[RouteEntry, ...]
    peer_count: int
    peers: tuple[Peer, ...] = field(default=(), compare=False)
    # (mrt type, subtype) -> number of records not parsed
    skipped: dict[tuple[int, int], int] = field(default_factory=dict, compare=False)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())


class _Cursor:
    """Bounds-checked reader over one record body."""

    __slots__ = ("buf", "pos", "end", "base")

    def __init__(self, buf: bytes, base: int):
        self.buf = buf
        self.pos = 0
        self.end = len(buf)
        self.base = base

    def _need(self, n: int, what: str) -> None:
        if self.pos + n > self.end:
            raise MrtFormatError(
                f"truncated {what}: need {n} bytes, {self.end - self.pos} left in record",
                self.base + self.pos,
            )

    def u8(self, what: str) -> int:
        self._need(1, what)
        v = self.buf[self.pos]
        self.pos += 1
        return v

    def u16(self, what: str) -> int:
        self._need(2, what)
        v = int.from_bytes(self.buf[self.pos:self.pos + 2], "big")
        self.pos += 2
        return v

    def u32(self, what: str) -> int:
        self._need(4, what)
        v = int.from_bytes(self.buf[self.pos:self.pos + 4], "big")
        self.pos += 4
        return v

    def take(self, n: int, what: str) -> bytes:
        self._need(n, what)
        v = self.buf[self.pos:self.pos + n]
        self.pos += n
        return v

    @property
    def offset(self) -> int:
        return self.base + self.pos


class _Prefixed(io.RawIOBase):
    """Re-attach bytes already consumed from a non-seekable stream."""

    def __init__(self, head: bytes, rest: BinaryIO):
        self._head = head
        self._rest = rest

    def readable(self) -> bool:
        return True

    def readinto(self, b) -> int:
        if self._head:
            n = min(len(b), len(self._head))
            b[:n] = self._head[:n]
            self._head = self._head[n:]
            return n
        data = self._rest.read(len(b))
        n = len(data)
        b[:n] = data
        return n


def open_maybe_compressed(stream: BinaryIO) -> BinaryIO:
    """Wrap ``stream`` in a gzip/bzip2 decoder when its magic bytes say so."""
    if stream.seekable():
        pos = stream.tell()
        head = stream.read(3)
        stream.seek(pos)
    else:
        head = stream.read(3)
        stream = io.BufferedReader(_Prefixed(head, stream))
    if head.startswith(GZIP_MAGIC):
        return gzip.GzipFile(fileobj=stream, mode="rb")
    if head.startswith(BZIP2_MAGIC):
        return bz2.BZ2File(stream, mode="rb")
    return stream


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _parse_peer_index(cur: _Cursor) -> list[Peer]:
    cur.u32("collector BGP ID")
    name_len = cur.u16("view name length")
    cur.take(name_len, "view name")
    count = cur.u16("peer count")
    peers = []
    for _ in range(count):
        ptype = cur.u8("peer type")
        bgp_id = str(ipaddress.IPv4Address(cur.take(4, "peer BGP ID")))
        if ptype & PEER_TYPE_IPV6:
            addr = str(ipaddress.IPv6Address(cur.take(16, "peer address")))
        else:
            addr = str(ipaddress.IPv4Address(cur.take(4, "peer address")))
        asn = cur.u32("peer AS") if ptype & PEER_TYPE_AS4 else cur.u16("peer AS")
        peers.append(Peer(bgp_id, addr, asn))
    return peers


_ENTRY_HEAD = struct.Struct("!HIH")


def _parse_as_path(value: bytes, base: int) -> tuple[tuple[int, ...], frozenset[int]]:
    path: list[int] = []
    origin: frozenset[int] = frozenset()
    pos, end = 0, len(value)
    while pos < end:
        if pos + 2 > end:
            raise MrtFormatError("truncated AS_PATH segment header", base + pos)
        seg_type, seg_len = value[pos], value[pos + 1]
        pos += 2
        if pos + 4 * seg_len > end:
            raise MrtFormatError(
                f"truncated AS_PATH segment: need {4 * seg_len} bytes, {end - pos} left", base + pos
            )
        asns = struct.unpack_from(f"!{seg_len}I", value, pos)
        pos += 4 * seg_len
        if seg_type == SEG_AS_SEQUENCE:
            path.extend(asns)
            if asns:
                origin = frozenset(asns[-1:])
        elif seg_type == SEG_AS_SET:
            path.extend(asns)
            if asns:
                origin = frozenset(asns)
        # confederation segments are local to the collector's peer and carry no origin
    return tuple(path), origin


def _parse_attrs(buf: bytes, pos: int, end: int, base: int):
    """Walk path attributes in ``buf[pos:end]``; returns the decoded AS_PATH."""
    path: tuple[int, ...] = ()
    origin: frozenset[int] = frozenset()
    while pos < end:
        if pos + 3 > end:
            raise MrtFormatError("truncated attribute header", base + pos)
        flags, atype = buf[pos], buf[pos + 1]
        if flags & ATTR_FLAG_EXTENDED:
            if pos + 4 > end:
                raise MrtFormatError("truncated extended attribute length", base + pos)
            alen = (buf[pos + 2] << 8) | buf[pos + 3]
            pos += 4
        else:
            alen = buf[pos + 2]
            pos += 3
        if pos + alen > end:
            raise MrtFormatError(
                f"truncated attribute value: need {alen} bytes, {end - pos} left", base + pos
            )
        if atype == ATTR_AS_PATH:
            path, origin = _parse_as_path(buf[pos:pos + alen], base + pos)
        pos += alen
    return path, origin


def _parse_rib_ipv4(cur: _Cursor, n_peers: int) -> list[RouteEntry]:
    cur.u32("sequence number")
    plen = cur.u8("prefix length")
    if plen > 32:
        raise MrtFormatError(f"IPv4 prefix length {plen} > 32", cur.offset - 1)
    nbytes = (plen + 7) // 8
    raw = cur.take(nbytes, "prefix")
    addr = int.from_bytes(raw + b"\x00" * (4 - nbytes), "big")
    prefix = ipaddress.IPv4Network((addr, plen), strict=False)
    count = cur.u16("entry count")
    buf, pos, end, base = cur.buf, cur.pos, cur.end, cur.base
    out = []
    for _ in range(count):
        if pos + _ENTRY_HEAD.size > end:
            raise MrtFormatError(
                f"truncated RIB entry header: need {_ENTRY_HEAD.size} bytes, {end - pos} left in record",
                base + pos,
            )
        peer_index, _orig_time, attr_len = _ENTRY_HEAD.unpack_from(buf, pos)
        if peer_index >= n_peers:
            raise MrtFormatError(f"peer index {peer_index} outside peer table of {n_peers}", base + pos)
        pos += _ENTRY_HEAD.size
        if pos + attr_len > end:
            raise MrtFormatError(
                f"truncated attributes: need {attr_len} bytes, {end - pos} left in record", base + pos
            )
        path, origin = _parse_attrs(buf, pos, pos + attr_len, base)
        pos += attr_len
        out.append(RouteEntry(prefix, origin, path, peer_index))
    cur.pos = pos
    return out


def iter_records(stream: BinaryIO) -> Iterator[tuple[int, int, int, int, bytes]]:
    """Yield ``(offset, type, subtype, timestamp, body)`` for every MRT record."""
    offset = 0
    while True:
        header = _read_exact(stream, MRT_HEADER.size)
        if not header:
            return
        if len(header) < MRT_HEADER.size:
            raise MrtFormatError(f"truncated MRT header ({len(header)} of 12 bytes)", offset)
        ts, mtype, subtype, length = MRT_HEADER.unpack(header)
        body = _read_exact(stream, length)
        if len(body) < length:
            raise MrtFormatError(
                f"truncated record body: declared {length} bytes, got {len(body)}", offset
            )
        yield offset, mtype, subtype, ts, body
        offset += MRT_HEADER.size + length


def parse_bview(stream: BinaryIO, capture_date: date | None = None) -> RibSnapshot:
    """Parse every IPv4 unicast RIB entry from an MRT bview stream.

    Records other than PEER_INDEX_TABLE and RIB_IPV4_UNICAST are counted in
    ``RibSnapshot.skipped``. Truncation and structural damage raise
    :class:`MrtFormatError` carrying the byte offset.

    Without ``capture_date`` the UTC date of the first record's MRT timestamp
    is used.
    """
    stream = open_maybe_compressed(stream)
    peers: list[Peer] | None = None
    entries: list[RouteEntry] = []
    skipped: Counter[tuple[int, int]] = Counter()
    first_ts = None
    try:
        for offset, mtype, subtype, ts, body in iter_records(stream):
            if first_ts is None:
                first_ts = ts
            cur = _Cursor(body, offset + MRT_HEADER.size)
            if mtype == TABLE_DUMP_V2 and subtype == PEER_INDEX_TABLE:
                peers = _parse_peer_index(cur)
            elif mtype == TABLE_DUMP_V2 and subtype == RIB_IPV4_UNICAST:
                if peers is None:
                    raise MrtFormatError("RIB entry before PEER_INDEX_TABLE", offset)
                entries.extend(_parse_rib_ipv4(cur, len(peers)))
            else:
                skipped[(mtype, subtype)] += 1
    except (EOFError, OSError, zlib.error) as exc:
        # corrupt compressed container
        raise MrtFormatError(f"unreadable compressed stream: {exc}", -1) from exc
    if capture_date is None:
        if first_ts is None:
            raise MrtFormatError("empty MRT stream and no capture date given", 0)
        capture_date = datetime.fromtimestamp(first_ts, tz=timezone.utc).date()
    return RibSnapshot(
        capture_date=capture_date,
        entries=tuple(entries),
        peer_count=len(peers) if peers is not None else 0,
        peers=tuple(peers or ()),
        skipped=dict(skipped),
    )


def read_bview(path: str | Path, capture_date: date | None = None) -> RibSnapshot:
    with open(path, "rb") as fh:
        return parse_bview(fh, capture_date)


def originated_prefixes(snapshot: RibSnapshot, asns: Iterable[int]) -> set[ipaddress.IPv4Network]:
    """Distinct prefixes whose origin set meets ``asns``; the default route is never counted."""
    wanted = frozenset(asns)
    if not wanted:
        raise ValueError("ASN set must be non-empty")
    return {
        e.prefix
        for e in snapshot.entries
        if e.prefix != DEFAULT_ROUTE and not wanted.isdisjoint(e.origin)
    }


def export_lines(snapshot: RibSnapshot) -> Iterator[str]:
    """Text export: ``prefix<TAB>origin_asns<TAB>path`` per entry."""
    for e in snapshot.entries:
        origins = ",".join(str(a) for a in sorted(e.origin))
        yield f"{e.prefix}\t{origins}\t{' '.join(map(str, e.path))}"
