"""RIR delegated-extended statistics: country ASN sets and allocated IPv4 prefixes."""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, TextIO

DEFAULT_STATUSES = frozenset({"allocated", "assigned"})

IPV4_SPACE = 1 << 32
ASN_SPACE = 1 << 32

_VERSION_RE = re.compile(r"^\d+(\.\d+)?$")


@dataclass(frozen=True)
class AllocationRecord:
    registry: str
    country: str
    kind: str  # "asn" | "ipv4"
    start: int
    count: int
    status: str
    snapshot_date: date
    line_no: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.kind not in ("asn", "ipv4"):
            raise ValueError(f"unsupported record kind {self.kind!r}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        space = IPV4_SPACE if self.kind == "ipv4" else ASN_SPACE
        if self.start < 0 or self.start + self.count > space:
            raise ValueError(f"{self.kind} range {self.start}+{self.count} overflows the number space")

    @property
    def start_text(self) -> str:
        if self.kind == "ipv4":
            return str(ipaddress.IPv4Address(self.start))
        return str(self.start)


@dataclass(frozen=True)
class AllocatedPrefix:
    cidr: ipaddress.IPv4Network
    source_record: AllocationRecord | None = field(default=None, compare=False, repr=False)

    def sort_key(self):
        return (int(self.cidr.network_address), self.cidr.prefixlen)


@dataclass(frozen=True)
class Reject:
    line_no: int
    line: str
    reason: str


@dataclass
class DelegatedData:
    snapshot_date: date
    records: list[AllocationRecord]
    rejects: list[Reject]
    header: str | None = None


def _parse_start(kind: str, text: str) -> int:
    if kind == "ipv4":
        return int(ipaddress.IPv4Address(text))
    return int(text)


def parse_delegated(stream: TextIO, snapshot_date: date) -> DelegatedData:
    """Parse a pipe-separated delegated-extended file.

    ASN and IPv4 records are returned; IPv6 records, the version line and
    summary lines are dropped. Lines that cannot form a valid record land in
    ``rejects`` and parsing continues. Status filtering happens downstream.
    """
    records: list[AllocationRecord] = []
    rejects: list[Reject] = []
    header = None
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if header is None and _VERSION_RE.match(fields[0]):
            header = line
            continue
        if len(fields) >= 6 and fields[5] == "summary":
            continue
        if len(fields) < 7:
            rejects.append(Reject(line_no, line, f"expected >= 7 fields, got {len(fields)}"))
            continue
        registry, cc, kind, start, value, _alloc_date, status = fields[:7]
        if kind == "ipv6":
            continue
        try:
            rec = AllocationRecord(
                registry=registry,
                country=cc.upper(),
                kind=kind,
                start=_parse_start(kind, start),
                count=int(value),
                status=status.lower(),
                snapshot_date=snapshot_date,
                line_no=line_no,
            )
        except ValueError as exc:
            rejects.append(Reject(line_no, line, str(exc)))
            continue
        records.append(rec)
    return DelegatedData(snapshot_date, records, rejects, header)


def _matching(records: Iterable[AllocationRecord], kind: str, country: str, statuses) -> list[AllocationRecord]:
    country = country.upper()
    return [r for r in records if r.kind == kind and r.country == country and r.status in statuses]


def country_asns(records: Iterable[AllocationRecord], country: str, statuses=DEFAULT_STATUSES) -> set[int]:
    out: set[int] = set()
    for r in _matching(records, "asn", country, statuses):
        out.update(range(r.start, r.start + r.count))
    return out


def decompose(start: int, count: int) -> list[ipaddress.IPv4Network]:
    """Minimal aligned CIDR cover of the address interval ``[start, start + count)``."""
    first = ipaddress.IPv4Address(start)
    last = ipaddress.IPv4Address(start + count - 1)
    return list(ipaddress.summarize_address_range(first, last))


def country_prefixes(records: Iterable[AllocationRecord], country: str, statuses=DEFAULT_STATUSES) -> set[AllocatedPrefix]:
    out: set[AllocatedPrefix] = set()
    for r in _matching(records, "ipv4", country, statuses):
        out.update(AllocatedPrefix(net, r) for net in decompose(r.start, r.count))
    return out


def export_json(data: DelegatedData, country: str, statuses=DEFAULT_STATUSES) -> dict:
    """JSON-ready summary; exposes both the record count and the decomposed prefix count."""
    prefixes = sorted(country_prefixes(data.records, country, statuses), key=AllocatedPrefix.sort_key)
    return {
        "snapshot_date": data.snapshot_date.isoformat(),
        "country": country.upper(),
        "statuses": sorted(statuses),
        "asns": sorted(country_asns(data.records, country, statuses)),
        "ipv4_record_count": len(_matching(data.records, "ipv4", country, statuses)),
        "prefix_count": len(prefixes),
        "prefixes": [str(p.cidr) for p in prefixes],
        "rejects": [{"line": r.line_no, "reason": r.reason} for r in data.rejects],
    }


def dump_json(data: DelegatedData, country: str, fh: TextIO, statuses=DEFAULT_STATUSES) -> None:
    json.dump(export_json(data, country, statuses), fh, indent=2)
    fh.write("\n")
