"""Deterministic builder for the bundled fixture set.

Every file is generated from the constants below plus seeded RNGs, so the
bundle can be rebuilt byte-for-byte with ``write_bundle``. Published table
values (announced/covered counts, host counts, verdict counts) are encoded as
inputs; the synthetic detail around them (which prefix is covered, which AS
holds which hosts) is invented and only constrained to be consistent with
those values.
"""

from __future__ import annotations

import csv
import gzip
import io
import ipaddress
import json
import random
import zlib
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Sequence

from .harness import CANONICAL_TRIPLES, GroundTruthPlan, SCRIPT_RTT_MS, TransportScript, planted_run_verdicts, synth_rib
from .prober import DEFAULT_PORTS, Outcome, PortOutcome, ProbeObservation, derive_target
from .rib import RouteEntry
from .verdicts import ConsensusRecord, Verdict, write_consensus_csv

COUNTRY = "IR"

# --------------------------------------------------------------------------
# BGP plane
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EventUniverse:
    key: str
    registry_date: date
    n_prefixes: int
    n_asns: int
    seed: int


EVENT_UNIVERSES = {
    "19": EventUniverse("19", date(2019, 11, 10), 1454, 668, 1911),
    "22": EventUniverse("22", date(2022, 9, 14), 1640, 750, 2209),
    "E1": EventUniverse("E1", date(2026, 1, 5), 1896, 842, 2601),
    "E2": EventUniverse("E2", date(2026, 3, 1), 1917, 842, 2603),
}


@dataclass(frozen=True)
class RibDay:
    date: date
    event: str
    phase: str
    announced: int
    covered: int
    table_row: bool = True  # appears in the published coverage table


# Announced counts are the published ones. Covered counts are chosen inside
# each event's fixed universe so the printed percentage rounds to the
# published value; the 2019 floor date is not a table row.
RIB_DAYS = (
    RibDay(date(2026, 1, 5), "E1", "B", 8563, 1661),
    RibDay(date(2026, 3, 1), "E2", "B", 7521, 1551),
    RibDay(date(2019, 11, 10), "19", "B", 6078, 1237),
    RibDay(date(2019, 11, 17), "19", "O", 6090, 1240),
    RibDay(date(2019, 11, 20), "19", "D", 4118, 906),
    RibDay(date(2019, 11, 21), "19", "D", 3652, 795, table_row=False),
    RibDay(date(2019, 11, 25), "19", "R", 5864, 1162),
    RibDay(date(2022, 9, 14), "22", "B", 7816, 1451),
    RibDay(date(2022, 9, 23), "22", "O", 7817, 1425),
    RibDay(date(2022, 9, 25), "22", "D", 7809, 1423),
    RibDay(date(2022, 10, 5), "22", "R", 7858, 1446),
    RibDay(date(2026, 1, 10), "E1", "O", 8256, 1640),
    RibDay(date(2026, 1, 12), "E1", "D", 7661, 1555),
    RibDay(date(2026, 1, 20), "E1", "R", 8373, 1589),
    RibDay(date(2026, 3, 3), "E2", "O", 8537, 1649),
    RibDay(date(2026, 3, 15), "E2", "D", 8349, 1633),
    RibDay(date(2026, 3, 17), "E2", "P", 8415, 1626),
    RibDay(date(2026, 3, 18), "E2", "V", 8468, 1629),
    RibDay(date(2026, 3, 23), "E2", "G", 8494, 1631),
    RibDay(date(2026, 3, 29), "E2", "G", 8489, 1637),
)

NAMED_ASNS = (58224, 197207, 205585, 29068, 12660, 6736, 49666)
TIC_ASN = 49666
TRANSITS = (3356, 1299, 174, 6939)
FOREIGN_ORIGINS = (3320, 8075, 15169, 16509, 20940, 13335, 64496)
PEER_COUNT = 3

SLOT_BASE = int(ipaddress.IPv4Address("5.0.0.0"))
SLOT_SIZE = 1 << 14  # one /18 per allocation record
SINGLE_COUNTS = (256, 512, 1024, 2048, 4096, 8192, 16384)
SINGLE_WEIGHTS = (30, 20, 15, 10, 8, 5, 3)
DOUBLE_COUNTS = (768, 1536, 3072, 6144)  # each decomposes into two CIDRs
DOUBLE_WEIGHTS = (4, 3, 2, 1)


@dataclass
class Universe:
    event: EventUniverse
    ipv4_records: list[tuple[int, int, str]]  # (start, count, status)
    prefixes: list[ipaddress.IPv4Network]  # decomposed, sorted
    asn_records: list[tuple[int, int]]
    asns: list[int]
    order: list[ipaddress.IPv4Network]  # coverage permutation
    base_form: dict[ipaddress.IPv4Network, ipaddress.IPv4Network]
    origin: dict[ipaddress.IPv4Network, int]


def _cidrs(start: int, count: int) -> list[ipaddress.IPv4Network]:
    return list(ipaddress.summarize_address_range(ipaddress.IPv4Address(start), ipaddress.IPv4Address(start + count - 1)))


def build_universe(ev: EventUniverse) -> Universe:
    rng = random.Random(f"universe-{ev.key}-{ev.seed}")
    records = []
    prefixes: list[ipaddress.IPv4Network] = []
    singles: set[ipaddress.IPv4Network] = set()
    slot = 0
    while len(prefixes) < ev.n_prefixes:
        left = ev.n_prefixes - len(prefixes)
        if left >= 2 and rng.random() < 0.12:
            count = rng.choices(DOUBLE_COUNTS, DOUBLE_WEIGHTS)[0]
        else:
            count = rng.choices(SINGLE_COUNTS, SINGLE_WEIGHTS)[0]
        start = SLOT_BASE + slot * SLOT_SIZE
        status = "assigned" if rng.random() < 0.08 else "allocated"
        records.append((start, count, status))
        nets = _cidrs(start, count)
        prefixes.extend(nets)
        if len(nets) == 1:
            singles.add(nets[0])
        slot += 1
    prefixes.sort(key=lambda n: (int(n.network_address), n.prefixlen))

    asns = set(NAMED_ASNS)
    asn_records = [(a, 1) for a in NAMED_ASNS]
    while len(asns) < ev.n_asns:
        a = rng.randrange(30000, 212000)
        c = 1 if rng.random() < 0.9 else min(3, ev.n_asns - len(asns))
        block = set(range(a, a + c))
        if block & asns:
            continue
        asns |= block
        asn_records.append((a, c))
    asn_records.sort()
    asn_list = sorted(asns)

    order = list(prefixes)
    rng.shuffle(order)
    base_form = {}
    origin = {}
    for p in prefixes:
        roll = rng.random()
        if p in singles and p.prefixlen > 18 and roll < 0.04:
            base_form[p] = p.supernet(new_prefix=18)
        elif p.prefixlen < 24 and roll < 0.14:
            base_form[p] = next(p.subnets(prefixlen_diff=1))
        else:
            base_form[p] = p
        origin[p] = rng.choice(NAMED_ASNS) if roll > 0.85 else rng.choice(asn_list)
    return Universe(ev, records, prefixes, asn_records, asn_list, order, base_form, origin)


def _more_specifics(p: ipaddress.IPv4Network, skip: ipaddress.IPv4Network | None = None):
    for plen in range(p.prefixlen + 1, 25):
        for m in p.subnets(new_prefix=plen):
            if m != skip:
                yield m


def _peers_for(net: ipaddress.IPv4Network) -> list[int]:
    h = zlib.crc32(str(net).encode())
    peers = [0]
    if h % 10 < 6:
        peers.append(1)
    if (h // 10) % 10 < 3:
        peers.append(2)
    return peers


def _path(peer: int, net: ipaddress.IPv4Network, origin: int) -> tuple[int, ...]:
    transit = TRANSITS[zlib.crc32(str(net).encode()) % len(TRANSITS)]
    if origin == TIC_ASN:
        return (64600 + peer, transit, TIC_ASN)
    return (64600 + peer, transit, TIC_ASN, origin)


def day_announcements(u: Universe, day: RibDay) -> dict[ipaddress.IPv4Network, int]:
    """Country-originated announcements for one day: prefix -> origin ASN."""
    if not 0 < day.covered <= len(u.prefixes):
        raise ValueError(f"{day.date}: covered {day.covered} outside universe of {len(u.prefixes)}")
    covered = u.order[: day.covered]
    ann = {}
    for p in covered:
        ann[u.base_form[p]] = u.origin[p]
    extras = day.announced - len(ann)
    if extras < 0:
        raise ValueError(f"{day.date}: announced {day.announced} below covered {day.covered}")
    pools = [(p, _more_specifics(p, u.base_form[p])) for p in covered]
    while extras:
        progressed = False
        for p, gen in pools:
            if not extras:
                break
            m = next(gen, None)
            if m is None:
                continue
            ann[m] = u.origin[p]
            extras -= 1
            progressed = True
        if not progressed:
            raise ValueError(f"{day.date}: not enough more-specific capacity for {day.announced} announcements")
    return ann


def day_entries(u: Universe, day: RibDay) -> list[RouteEntry]:
    rng = random.Random(f"noise-{u.event.key}-{day.date.isoformat()}")
    ann = day_announcements(u, day)
    entries = []
    as_set_budget = 5
    for net in sorted(ann, key=lambda n: (int(n.network_address), n.prefixlen)):
        origin = ann[net]
        for peer in _peers_for(net):
            path = _path(peer, net, origin)
            org = frozenset({origin})
            if as_set_budget and net.prefixlen == 24 and peer == 0 and rng.random() < 0.01:
                path = path + (64496,)
                org = frozenset({origin, 64496})
                as_set_budget -= 1
            entries.append(RouteEntry(net, org, path, peer))
    # foreign-origin noise: unrelated space, plus exact announcements of a few
    # uncovered allocations that must not count as coverage
    foreign = []
    for i in range(150):
        net = ipaddress.IPv4Network((int(ipaddress.IPv4Address("185.0.0.0")) + i * 1024, 22))
        foreign.append((net, FOREIGN_ORIGINS[i % len(FOREIGN_ORIGINS)]))
    for p in u.order[day.covered: day.covered + 10]:
        foreign.append((p, 64511))
    for net, org in foreign:
        entries.append(RouteEntry(net, frozenset({org}), (64601, TRANSITS[0], org), 1))
    entries.append(RouteEntry(ipaddress.IPv4Network("0.0.0.0/0"), frozenset({TIC_ASN}), (64602, TIC_ASN), 2))
    entries.sort(key=lambda e: (int(e.prefix.network_address), e.prefix.prefixlen, e.peer_index))
    return entries


def _midnight(d: date) -> int:
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())


SKIP_RECORDS = ((13, 4, b"\x00" * 12), (16, 4, b"\x00" * 8))


def day_bview(u: Universe, day: RibDay) -> bytes:
    return synth_rib(day_entries(u, day), peer_count=PEER_COUNT, timestamp=_midnight(day.date),
                     extra_records=SKIP_RECORDS)


def delegated_text(u: Universe) -> str:
    d = u.event.registry_date.strftime("%Y%m%d")
    lines = []
    body = []
    for a, c in u.asn_records:
        body.append(f"ripencc|{COUNTRY}|asn|{a}|{c}|20100101|allocated|{a:08x}")
    body.append("ripencc|TR|asn|9121|1|19970101|allocated|tr-9121")
    body.append("ripencc|DE|asn|3320|1|19940101|allocated|de-3320")
    for start, count, status in u.ipv4_records:
        body.append(f"ripencc|{COUNTRY}|ipv4|{ipaddress.IPv4Address(start)}|{count}|20120101|{status}|r{start:08x}")
    body.append(f"ripencc|{COUNTRY}|ipv4|2.144.0.0|16384|20090101|reserved|held")
    body.append("ripencc||ipv4|185.0.0.0|1024||available|")
    body.append("ripencc|TR|ipv4|31.140.0.0|65536|20110101|allocated|tr-blk")
    body.append(f"ripencc|{COUNTRY}|ipv6|2a01:5ec0::|29|20120101|allocated|v6")
    n_asn = len(u.asn_records) + 2
    n_v4 = len(u.ipv4_records) + 4
    lines.append(f"2.3|ripencc|{d}|{len(body)}|19830705|{d}|+0000")
    lines.append(f"ripencc|*|asn|*|{n_asn}|summary")
    lines.append(f"ripencc|*|ipv4|*|{n_v4}|summary")
    lines.append("ripencc|*|ipv6|*|1|summary")
    lines.extend(body)
    return "\n".join(lines) + "\n"


def bview_name(d: date) -> str:
    return f"bview.{d.strftime('%Y%m%d')}.0000.gz"


def delegated_name(event: str) -> str:
    return f"delegated-ripencc-extended-{event}.txt"


# --------------------------------------------------------------------------
# Passive plane
# --------------------------------------------------------------------------

# Daily visible-host totals (millions) for the country, Jan 1 - Mar 31 2026.
SERIES_MILLIONS = {
    "2026-01-01": 0.929656, "2026-01-02": 0.926326, "2026-01-03": 0.907998, "2026-01-04": 0.908580,
    "2026-01-05": 0.938219, "2026-01-06": 0.935289, "2026-01-07": 0.935832, "2026-01-08": 1.175816,
    "2026-01-12": 0.046255, "2026-01-13": 0.088053, "2026-01-14": 0.041878, "2026-01-15": 0.041203,
    "2026-01-16": 0.040206, "2026-01-17": 0.062299, "2026-01-18": 0.062079, "2026-01-19": 0.043996,
    "2026-01-20": 0.068616, "2026-01-21": 0.039101, "2026-01-22": 0.035171, "2026-01-23": 0.028608,
    "2026-01-24": 0.018990, "2026-01-25": 0.183906, "2026-01-26": 0.260316, "2026-01-27": 0.739529,
    "2026-01-28": 1.365648, "2026-01-29": 2.100154, "2026-01-30": 2.558558, "2026-01-31": 2.869442,
    "2026-02-01": 3.083596, "2026-02-02": 3.200091, "2026-02-03": 3.234574, "2026-02-04": 3.258631,
    "2026-02-05": 3.273822, "2026-02-06": 3.288994, "2026-02-07": 3.293202, "2026-02-08": 3.318275,
    "2026-02-09": 3.325594, "2026-02-10": 3.330856, "2026-02-11": 3.329903, "2026-02-12": 3.329201,
    "2026-02-13": 3.332433, "2026-02-14": 3.336867, "2026-02-15": 3.357376, "2026-02-16": 3.370097,
    "2026-02-17": 3.372907, "2026-02-18": 3.391253, "2026-02-19": 3.405477, "2026-02-20": 3.410410,
    "2026-02-21": 3.398724, "2026-02-22": 3.410070, "2026-02-23": 3.424094, "2026-02-24": 3.451277,
    "2026-02-25": 3.470394, "2026-02-26": 3.481772, "2026-02-27": 3.477204, "2026-02-28": 3.469568,
    "2026-03-01": 3.396330, "2026-03-02": 0.402466, "2026-03-03": 0.110140, "2026-03-04": 0.065973,
    "2026-03-05": 0.063966, "2026-03-06": 0.062980, "2026-03-07": 0.060595, "2026-03-08": 0.058885,
    "2026-03-09": 0.055361, "2026-03-10": 0.073073, "2026-03-11": 0.044344, "2026-03-12": 0.040992,
    "2026-03-13": 0.036332, "2026-03-14": 0.028664, "2026-03-15": 0.023012, "2026-03-16": 0.060977,
    "2026-03-17": 0.081347, "2026-03-18": 0.009873, "2026-03-19": 0.045380, "2026-03-20": 0.053362,
    "2026-03-21": 0.018846, "2026-03-22": 0.010850, "2026-03-23": 0.011145, "2026-03-24": 0.034931,
    "2026-03-25": 0.011532, "2026-03-26": 0.011761, "2026-03-27": 0.011771, "2026-03-28": 0.011496,
    "2026-03-29": 0.011342, "2026-03-30": 0.010989, "2026-03-31": 0.032533,
}

# Active (non-pending) hosts on the dates where a host-level split exists.
ACTIVE_HOSTS = {
    "2026-01-07": 798_000,
    "2026-01-08": 1_020_000,
    "2026-01-12": 44_200,
    "2026-02-28": 3_160_000,
    "2026-03-01": 30_211,
    "2026-03-02": 56_000,
    "2026-03-03": 90_000,
    "2026-03-15": 22_000,
}

REFERENCE_DATE = date(2026, 1, 7)
REFERENCE_HOSTS = 935_000
BASELINE_MONTHLY = (1_012_000, 965_000, 910_000, 948_000, 1_170_000, 1_043_000,
                    987_000, 1_101_000, 956_000, 1_024_000, 979_000, 931_000)
CONTROL_COUNTRY = "TR"
CONTROL_MONTHLY = (1_301_000, 1_262_000, 1_288_000, 1_317_000, 1_338_000, 1_296_000,
                   1_274_000, 1_309_000, 1_322_000, 1_281_000, 1_314_000, 1_293_000)
CONTROL_REFERENCE = 1_302_000

PASSIVE_EVENTS = [
    {"name": "E1", "start": "2026-01-01", "end": "2026-01-26",
     "phases": {"2026-01-07": "baseline", "2026-01-08": "scan spike", "2026-01-12": "floor"}},
    {"name": "E2", "start": "2026-02-01", "end": "2026-03-31",
     "phases": {"2026-02-28": "pre-onset", "2026-03-01": "true onset",
                "2026-03-02": "scan onset", "2026-03-15": "floor"}},
]


def series_rows() -> list[dict]:
    rows = []
    for d, m in SERIES_MILLIONS.items():
        total = round(m * 1_000_000)
        active = ACTIVE_HOSTS.get(d)
        rows.append({"date": d, "total": total, "pending": "" if active is None else total - active,
                     "country": COUNTRY})
    return rows


INFLATED_SPAN = ("2026-01-27", "2026-03-01")  # control-side inflation covering the inter-event period


def control_rows(inflated: bool = False) -> list[dict]:
    rng = random.Random("control-TR")
    rows = []
    for d in SERIES_MILLIONS:
        total = rng.randint(1_280_000, 1_330_000)
        if inflated and INFLATED_SPAN[0] <= d <= INFLATED_SPAN[1]:
            total = int(total * 1.6)
        rows.append({"date": d, "total": total, "pending": "", "country": CONTROL_COUNTRY})
    return rows


def baseline_rows() -> list[dict]:
    rows = []
    for cc, monthly, ref in ((COUNTRY, BASELINE_MONTHLY, REFERENCE_HOSTS),
                             (CONTROL_COUNTRY, CONTROL_MONTHLY, CONTROL_REFERENCE)):
        for month, total in enumerate(monthly, start=1):
            rows.append({"date": f"2025-{month:02d}-15", "total": total, "pending": "", "country": cc})
        rows.append({"date": REFERENCE_DATE.isoformat(), "total": ref, "pending": "", "country": cc})
    return rows


def _csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


SERIES_FIELDS = ("date", "total", "pending", "country")

# --------------------------------------------------------------------------
# AS composition
# --------------------------------------------------------------------------

AS_DATES = ("2026-01-07", "2026-01-16", "2026-03-01", "2026-03-02", "2026-03-15", "2026-03-17")
CATEGORY_KEYS = ("state_telecom", "mobile", "mobile_infra", "commercial_isp", "academic", "cdn", "other")

# Category host totals per date, in CATEGORY_KEYS order.
CATEGORY_TOTALS = {
    "2026-01-07": (100572, 2899, 3600, 727131, 13069, 12101, 76869),
    "2026-01-16": (1253, 49, 165, 32670, 634, 1277, 3872),
    "2026-03-01": (278200, 34000, 8400, 2494900, 214100, 24000, 326400),
    "2026-03-02": (28800, 10349, 1825, 295029, 19999, 4799, 39199),
    "2026-03-15": (831, 2492, 4, 9402, 7043, 1132, 0),
    "2026-03-17": (667, 620, 531, 21089, 49678, 1997, 10),
}

# (asn, name, metadata label, category, hosts per AS_DATES)
NAMED_AS_HOSTS = (
    (58224, "TCI - Telecommunication Company of Iran", "isp", "commercial_isp",
     (300000, 9000, 1340000, 150000, 2368, 5000)),
    (197207, "MCCI - Mobile Communication Company of Iran PLC", "isp", "mobile",
     (1900, 30, 10130, 6000, 2237, 601)),
    (205585, "ArvanCloud", "hosting", "cdn", (1031, 1027, 1028, 1026, 1025, 1027)),
    (29068, "University of Tehran", "", "academic", (55, 10, 21350, 2000, 2077, 16597)),
    (12660, "Sharif University of Technology", "education", "academic", (900, 40, 9000, 1200, 600, 4255)),
    (6736, "IRANET-IPM Institute for Research in Fundamental Sciences", "academic", "academic",
     (523, 20, 66404, 5000, 1500, 12000)),
    (49666, "Telecommunication Infrastructure Company", "government", "state_telecom",
     (40000, 500, 100000, 10000, 300, 250)),
)

# Filler ASes absorb the rest of each category total by fixed weights.
# (asn, name, metadata label, category, weight)
FILLER_ASES = (
    (12880, "Information Technology Company", "government", "state_telecom", 5),
    (48159, "Regional Telecom of Tehran", "", "state_telecom", 3),
    (58901, "Regional Telecom of Isfahan", "", "state_telecom", 2),
    (44244, "Iran Cell Service and Communication", "mobile", "mobile", 4),
    (57218, "RighTel Mobile", "", "mobile", 1),
    (50810, "Mobile Infra Signalling Network", "mobile_infra", "mobile_infra", 3),
    (39308, "Roaming Exchange Services", "", "mobile_infra", 2),
    (16322, "Pars Online ISP", "isp", "commercial_isp", 6),
    (31549, "Aria Shatel Broadband", "", "commercial_isp", 5),
    (43754, "Asiatech Data Center", "isp", "commercial_isp", 4),
    (42337, "Respina Internet Service", "", "commercial_isp", 3),
    (25184, "Afranet ISP", "isp", "commercial_isp", 2),
    (12825, "Ferdowsi University of Mashhad", "", "academic", 4),
    (47330, "Isfahan University of Technology", "education", "academic", 3),
    (42440, "Shiraz University", "", "academic", 2),
    (51074, "Tabriz School Network", "", "academic", 1),
    (60631, "Derak Cloud", "", "cdn", 3),
    (64422, "Sindad CDN", "content", "cdn", 1),
    (41689, "Bank Melli Iran", "", "other", 5),
    (48434, "Parsian Insurance", "", "other", 3),
    (56466, "Iran Air", "hosting", "other", 2),
    (62229, "Municipality of Mashhad", "", "other", 2),
    (34918, "Saipa Group", "", "other", 1),
)

KEYWORD_RULES = [
    ["universit|academ|research|school", "academic"],
    ["mobile infra|signalling|roaming", "mobile_infra"],
    ["mobile|cell", "mobile"],
    ["cdn|cloud", "cdn"],
    ["telecommunication company|regional telecom", "state_telecom"],
    ["\\bisp\\b|internet service|broadband|data ?center", "commercial_isp"],
]

OVERRIDES = {
    "_note": "manual reconstruction of the curated overrides; the original list was not published",
    "58224": {"category": "commercial_isp", "reason": "incumbent fixed-line operator"},
    "197207": {"category": "mobile", "reason": "largest mobile operator"},
    "205585": {"category": "cdn", "reason": "domestic CDN and cloud provider"},
}

ASCOMP_CONFIG = {
    "composition_dates": list(AS_DATES),
    "exemption_events": [
        {"name": "E1", "baseline": "2026-01-07", "event_dates": ["2026-01-16"]},
        {"name": "E2", "baseline": "2026-03-01", "event_dates": ["2026-03-02", "2026-03-15", "2026-03-17"]},
    ],
    "floor_date": "2026-03-15",
    "recovery_date": "2026-03-17",
}


def _split(total: int, weights: Sequence[int]) -> list[int]:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    if total < 0:
        raise ValueError("negative remainder")
    w = sum(weights)
    raw = [total * x / w for x in weights]
    out = [int(r) for r in raw]
    short = total - sum(out)
    for i in sorted(range(len(raw)), key=lambda i: (-(raw[i] - out[i]), i))[:short]:
        out[i] += 1
    return out


def as_counts() -> dict[tuple[str, int], int]:
    counts = {}
    for i, d in enumerate(AS_DATES):
        for k, cat in enumerate(CATEGORY_KEYS):
            named = [(a, hosts[i]) for a, _, _, c, hosts in NAMED_AS_HOSTS if c == cat]
            fillers = [(a, w) for a, _, _, c, w in FILLER_ASES if c == cat]
            rest = CATEGORY_TOTALS[d][k] - sum(h for _, h in named)
            for a, h in named:
                counts[(d, a)] = h
            for (a, _), h in zip(fillers, _split(rest, [w for _, w in fillers])):
                counts[(d, a)] = h
    return counts


def metadata_rows() -> list[dict]:
    rows = [{"asn": a, "name": n, "category": m} for a, n, m, _, _ in NAMED_AS_HOSTS]
    rows += [{"asn": a, "name": n, "category": m} for a, n, m, _, _ in FILLER_ASES]
    return sorted(rows, key=lambda r: r["asn"])


def expected_categories() -> dict[int, str]:
    out = {a: c for a, _, _, c, _ in NAMED_AS_HOSTS}
    out.update({a: c for a, _, _, c, _ in FILLER_ASES})
    return out


# --------------------------------------------------------------------------
# Active probing
# --------------------------------------------------------------------------

PROBE_PREFIX_COUNT = 4571

# vantage id -> (runs, NR, RE, BW, FA, AM)
VANTAGES = {
    "amsterdam": (34, 4416, 92, 57, 6, 0),
    "frankfurt": (34, 4453, 95, 17, 6, 0),
    "istanbul": (33, 4444, 97, 24, 6, 0),
    "new-york": (34, 4410, 97, 57, 6, 1),
    "singapore": (34, 4451, 94, 20, 6, 0),
}
CONSENSUS_NOISE = 0.03
OBSERVATION_RUNS = 3
OBSERVATION_NOISE = 0.34


def probe_prefixes() -> list[ipaddress.IPv4Network]:
    rng = random.Random("probe-prefixes")
    cursor = SLOT_BASE
    out = []
    for _ in range(PROBE_PREFIX_COUNT):
        plen = rng.choices((24, 23, 22, 21, 20), (60, 15, 12, 8, 5))[0]
        size = 1 << (32 - plen)
        cursor = (cursor + size - 1) // size * size
        out.append(ipaddress.IPv4Network((cursor, plen)))
        cursor += size
    return out


def planted_verdicts(vantage: str) -> dict[ipaddress.IPv4Network, Verdict]:
    """Per-vantage planted consensus; FA and BW/RE pools are shared so vantages overlap."""
    prefixes = probe_prefixes()
    order = list(prefixes)
    random.Random("probe-pools").shuffle(order)
    fa_pool, bw_pool, re_pool, am_pool = order[:6], order[6:63], order[63:160], order[160:161]
    _, _nr, n_re, n_bw, n_fa, n_am = VANTAGES[vantage]
    planted = {p: Verdict.NULL_ROUTE for p in prefixes}
    for pool, n, v in ((fa_pool, n_fa, Verdict.FIREWALL_ACL), (bw_pool, n_bw, Verdict.BGP_WITHDRAW),
                       (re_pool, n_re, Verdict.REACHABLE), (am_pool, n_am, Verdict.AMBIGUOUS)):
        for p in pool[:n]:
            planted[p] = v
    return planted


def _vantage_seed(vantage: str) -> int:
    return zlib.crc32(vantage.encode())


def _split_runs(runs: int) -> list[Verdict]:
    """A no-majority run mix: NR and RE alternate, with BW filling any odd run."""
    half = runs // 2
    mix = [Verdict.NULL_ROUTE] * half + [Verdict.REACHABLE] * half
    if runs % 2:
        mix.append(Verdict.BGP_WITHDRAW)
    return mix


def consensus_records(vantage: str) -> list[ConsensusRecord]:
    runs = VANTAGES[vantage][0]
    planted = planted_verdicts(vantage)
    plan = GroundTruthPlan({p: v for p, v in planted.items() if v is not Verdict.AMBIGUOUS},
                           CONSENSUS_NOISE, _vantage_seed(vantage))
    per_run = planted_run_verdicts(plan, runs)
    for p, v in planted.items():
        if v is Verdict.AMBIGUOUS:
            per_run[p] = _split_runs(runs)
    return [ConsensusRecord.from_runs(p, vantage, per_run[p])
            for p in sorted(per_run, key=lambda n: (int(n.network_address), n.prefixlen))]


def observation_from_triple(prefix, vantage: str, run_id: int, started_at: float,
                            triple: Sequence[Outcome], retries: int = 1) -> ProbeObservation:
    """The observation a sweep would record for a scripted outcome triple."""
    outcomes = {}
    for port, kind in zip(DEFAULT_PORTS, triple):
        kind = Outcome(kind)
        if kind is Outcome.TIMEOUT:
            outcomes[port] = PortOutcome(kind, None, retries + 1)
        elif kind in (Outcome.SYN_ACK, Outcome.RST):
            outcomes[port] = PortOutcome(kind, SCRIPT_RTT_MS, 1)
        else:
            outcomes[port] = PortOutcome(kind, None, 1)
    return ProbeObservation(ipaddress.IPv4Network(prefix), vantage, run_id, started_at, outcomes)


def observation_lines(runs: int = OBSERVATION_RUNS) -> list[str]:
    lines = []
    for vantage in VANTAGES:
        planted = planted_verdicts(vantage)
        plan = GroundTruthPlan({p: v for p, v in planted.items() if v is not Verdict.AMBIGUOUS},
                               OBSERVATION_NOISE, _vantage_seed(vantage) + 1)
        per_run = planted_run_verdicts(plan, runs)
        for p, v in planted.items():
            if v is Verdict.AMBIGUOUS:
                per_run[p] = _split_runs(runs) if runs > 1 else [Verdict.AMBIGUOUS]
        for run in range(runs):
            t0 = TransportScript.epoch + 3600.0 * run
            for i, p in enumerate(sorted(per_run, key=lambda n: (int(n.network_address), n.prefixlen))):
                obs = observation_from_triple(p, vantage, run, round(t0 + i * 0.03, 3),
                                              CANONICAL_TRIPLES[per_run[p][run]])
                lines.append(obs.to_json())
    return lines


REPLAY_PREFIXES = 64


def replay_fixture() -> tuple[list[ipaddress.IPv4Network], TransportScript]:
    """A small target list and a one-run script realising Amsterdam's planted verdicts on it."""
    planted = planted_verdicts("amsterdam")
    order = list(planted)
    random.Random("replay-subset").shuffle(order)
    interesting = [p for p in order if planted[p] is not Verdict.NULL_ROUTE][:16]
    chosen = interesting + [p for p in order if planted[p] is Verdict.NULL_ROUTE][: REPLAY_PREFIXES - len(interesting)]
    chosen.sort(key=lambda n: (int(n.network_address), n.prefixlen))
    script = TransportScript()
    for p in chosen:
        addr = str(derive_target(p).address)
        for port, kind in zip(DEFAULT_PORTS, CANONICAL_TRIPLES[planted[p]]):
            if kind is not Outcome.TIMEOUT:
                script.set(addr, port, kind)
    return chosen, script


# --------------------------------------------------------------------------
# Bundle
# --------------------------------------------------------------------------

DEFAULT_RIB_DATES = tuple(d.date for d in RIB_DAYS)


def bundle_config() -> dict:
    return {
        "registry": {"country": COUNTRY},
        "passive": {
            "country": COUNTRY,
            "control_country": CONTROL_COUNTRY,
            "reference_date": REFERENCE_DATE.isoformat(),
            "control_reference_date": REFERENCE_DATE.isoformat(),
            "events": PASSIVE_EVENTS,
        },
        "ascomp": ASCOMP_CONFIG,
    }


def _write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data, encoding="utf-8", newline="\n")
    else:
        path.write_bytes(data)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def write_bundle(root: str | Path, rib_dates: Sequence[date] | None = None,
                 observation_runs: int = OBSERVATION_RUNS) -> Path:
    """Write the whole fixture bundle under ``root``; returns the root path.

    ``rib_dates`` limits which bview files are written (all by default).
    """
    root = Path(root)
    wanted = set(DEFAULT_RIB_DATES if rib_dates is None else rib_dates)
    unknown = wanted - set(DEFAULT_RIB_DATES)
    if unknown:
        raise ValueError(f"no fixture day for {sorted(unknown)}")
    universes = {k: build_universe(ev) for k, ev in EVENT_UNIVERSES.items()}

    index = []
    for k, u in universes.items():
        _write(root / "bgp" / delegated_name(k), delegated_text(u))
    for day in RIB_DAYS:
        if day.date not in wanted:
            continue
        raw = day_bview(universes[day.event], day)
        _write(root / "bgp" / bview_name(day.date), gzip.compress(raw, mtime=0))
        index.append({"date": day.date.isoformat(), "event": day.event, "phase": day.phase,
                      "table_row": day.table_row, "bview": bview_name(day.date),
                      "delegated": delegated_name(day.event)})
    _write(root / "bgp" / "days.json", _json(index))

    _write(root / "passive" / "series-IR.csv", _csv(series_rows(), SERIES_FIELDS))
    _write(root / "passive" / "control-TR.csv", _csv(control_rows(), SERIES_FIELDS))
    _write(root / "passive" / "control-TR-inflated.csv", _csv(control_rows(True), SERIES_FIELDS))
    _write(root / "passive" / "baseline.csv", _csv(baseline_rows(), SERIES_FIELDS))

    counts = as_counts()
    count_rows = [{"date": d, "asn": a, "hosts": h}
                  for (d, a), h in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1]))]
    _write(root / "ascomp" / "counts.csv", _csv(count_rows, ("date", "asn", "hosts")))
    _write(root / "ascomp" / "as_metadata.csv", _csv(metadata_rows(), ("asn", "name", "category")))
    _write(root / "ascomp" / "rules.json", _json({"rules": KEYWORD_RULES}))
    _write(root / "ascomp" / "overrides.json", _json(OVERRIDES))

    for vantage in VANTAGES:
        buf = io.StringIO()
        write_consensus_csv(consensus_records(vantage), buf)
        _write(root / "probing" / f"consensus-{vantage}.csv", buf.getvalue())
    obs = ("\n".join(observation_lines(observation_runs)) + "\n").encode()
    _write(root / "probing" / "observations.jsonl.gz", gzip.compress(obs, mtime=0))
    targets, script = replay_fixture()
    _write(root / "probing" / "targets.txt", "".join(f"{p}\n" for p in targets))
    buf = io.StringIO()
    script.dump(buf)
    _write(root / "probing" / "replay-amsterdam-run0.jsonl", buf.getvalue())

    _write(root / "config.json", _json(bundle_config()))
    return root
