"""AS categories, per-category host composition, exemptions and recovery attribution."""

from __future__ import annotations

import csv
import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Sequence, TextIO


class Category(str, Enum):
    STATE_TELECOM = "state_telecom"
    MOBILE = "mobile"
    MOBILE_INFRA = "mobile_infra"
    COMMERCIAL_ISP = "commercial_isp"
    ACADEMIC = "academic"
    CDN = "cdn"
    OTHER = "other"


CATEGORY_ORDER = tuple(Category)

# Metadata labels that name one category outright. Anything else (blank,
# "isp", "hosting", unknown strings) is ambiguous and goes to keyword rules.
METADATA_LABELS = {
    "state_telecom": Category.STATE_TELECOM,
    "government": Category.STATE_TELECOM,
    "mobile": Category.MOBILE,
    "mobile_infra": Category.MOBILE_INFRA,
    "commercial_isp": Category.COMMERCIAL_ISP,
    "academic": Category.ACADEMIC,
    "education": Category.ACADEMIC,
    "cdn": Category.CDN,
    "content": Category.CDN,
}

EXEMPTION_THRESHOLD = 0.95


class UnknownAsnError(KeyError):
    def __init__(self, asns):
        self.asns = sorted(asns)
        super().__init__(f"no AS record for ASN(s): {', '.join(map(str, self.asns))}")


@dataclass(frozen=True)
class AsRecord:
    asn: int
    name: str
    category: Category
    source: str  # "override" | "metadata" | "keyword" | "default"


@dataclass(frozen=True)
class CompositionCell:
    date: date
    category: Category
    hosts: int
    share: float


@dataclass(frozen=True)
class ExemptionFinding:
    asn: int
    baseline_hosts: int
    min_event_hosts: int
    retention: float
    exempt: bool
    note: str = ""


@dataclass(frozen=True)
class CategoryDelta:
    category: Category
    before: int
    after: int
    delta: int
    share: float | None  # of the summed positive category deltas
    share_of_net: float | None  # of the net change in total hosts
    anti_correlated: bool


@dataclass(frozen=True)
class AsDelta:
    asn: int
    before: int
    after: int
    delta: int
    multiplier: float | str  # "new" when the AS had no hosts before
    anti_correlated: bool


@dataclass
class RecoveryAttribution:
    floor_date: date
    recovery_date: date
    total_delta: int
    categories: list[CategoryDelta]
    ases: list[AsDelta]

    @property
    def empty(self) -> bool:
        return all(c.delta == 0 for c in self.categories)

    def category(self, cat: Category) -> CategoryDelta:
        for c in self.categories:
            if c.category is cat:
                return c
        raise KeyError(cat)


def categorize(asn: int, name: str, metadata_category: str | None,
               keyword_rules: Sequence[tuple[str, str]], overrides: Mapping[int, str]) -> AsRecord:
    """Override first, then a definite metadata label, then the first matching keyword rule.

    Keyword rules are ``(regex, category)`` pairs tried in order against the AS
    name, case-insensitively.
    """
    if asn in overrides:
        return AsRecord(asn, name, Category(overrides[asn]), "override")
    label = (metadata_category or "").strip().lower()
    if label in METADATA_LABELS:
        return AsRecord(asn, name, METADATA_LABELS[label], "metadata")
    for pattern, cat in keyword_rules:
        if re.search(pattern, name or "", re.IGNORECASE):
            return AsRecord(asn, name, Category(cat), "keyword")
    return AsRecord(asn, name, Category.OTHER, "default")


CountMap = Mapping[tuple[date, int], int]


def read_counts_csv(fh: TextIO) -> dict[tuple[date, int], int]:
    out: dict[tuple[date, int], int] = {}
    for line_no, row in enumerate(csv.DictReader(fh), start=2):
        try:
            key = (date.fromisoformat(row["date"].strip()), int(row["asn"]))
            hosts = int(row["hosts"])
        except (KeyError, ValueError, AttributeError) as exc:
            raise ValueError(f"line {line_no}: {exc}") from exc
        if hosts < 0:
            raise ValueError(f"line {line_no}: negative host count")
        out[key] = out.get(key, 0) + hosts
    return out


def read_metadata_csv(fh: TextIO) -> dict[int, tuple[str, str]]:
    """``asn,name,category`` rows -> {asn: (name, metadata_category)}."""
    return {int(r["asn"]): (r.get("name", ""), r.get("category", "")) for r in csv.DictReader(fh)}


def load_rules(fh: TextIO) -> list[tuple[str, str]]:
    data = json.load(fh)
    rules = data["rules"] if isinstance(data, dict) else data
    return [(str(p), str(c)) for p, c in rules]


def load_overrides(fh: TextIO) -> dict[int, str]:
    data = json.load(fh)
    entries = data.get("overrides", data)
    return {int(k): str(v["category"] if isinstance(v, dict) else v)
            for k, v in entries.items() if not str(k).startswith("_")}


def categorize_all(metadata: Mapping[int, tuple[str, str]], keyword_rules, overrides) -> dict[int, AsRecord]:
    asns = set(metadata) | set(overrides)
    return {a: categorize(a, *metadata.get(a, ("", "")), keyword_rules, overrides) for a in sorted(asns)}


def category_totals(counts: CountMap, records: Mapping[int, AsRecord]) -> dict[date, dict[Category, int]]:
    missing = {a for _, a in counts if a not in records}
    if missing:
        raise UnknownAsnError(missing)
    out: dict[date, dict[Category, int]] = defaultdict(lambda: {c: 0 for c in CATEGORY_ORDER})
    for (d, a), hosts in counts.items():
        out[d][records[a].category] += hosts
    return dict(out)


def composition(counts: CountMap, records: Mapping[int, AsRecord]) -> list[CompositionCell]:
    cells = []
    totals = category_totals(counts, records)
    for d in sorted(totals):
        day = totals[d]
        total = sum(day.values())
        for c in CATEGORY_ORDER:
            cells.append(CompositionCell(d, c, day[c], day[c] / total if total else 0.0))
    return cells


def exemptions(counts: CountMap, baseline_date: date, event_dates: Sequence[date],
               threshold: float = EXEMPTION_THRESHOLD) -> list[ExemptionFinding]:
    """Retention = lowest event-date count over the baseline count; exempt when it never falls below ``threshold``.

    ASes with no baseline hosts are reported with a note instead of a ratio.
    """
    if not event_dates:
        raise ValueError("need at least one event date")
    asns = sorted({a for d, a in counts if d == baseline_date})
    findings = []
    for a in asns:
        base = counts.get((baseline_date, a), 0)
        during = [counts.get((d, a), 0) for d in event_dates]
        low = min(during)
        if base == 0:
            findings.append(ExemptionFinding(a, 0, low, float("nan"), False, "zero baseline; skipped"))
            continue
        findings.append(ExemptionFinding(a, base, low, low / base, all(h / base >= threshold for h in during)))
    findings.sort(key=lambda f: (math.isnan(f.retention), 0.0 if math.isnan(f.retention) else -f.retention, f.asn))
    return findings


def as_deltas(counts: CountMap, before: date, after: date, min_hosts: int = 0,
              total_delta: int | None = None) -> list[AsDelta]:
    """Per-AS change between two dates, with growth multipliers.

    An AS is anti-correlated when it loses hosts while the total grows; only
    ASes with at least ``min_hosts`` on either date are considered.
    """
    asns = sorted({a for d, a in counts if d in (before, after)})
    if total_delta is None:
        total_delta = sum(counts.get((after, a), 0) - counts.get((before, a), 0) for a in asns)
    out = []
    for a in asns:
        b = counts.get((before, a), 0)
        c = counts.get((after, a), 0)
        if max(b, c) < min_hosts:
            continue
        mult = c / b if b else "new"
        out.append(AsDelta(a, b, c, c - b, mult, total_delta > 0 and c < b))
    return out


def recovery_attribution(counts: CountMap, floor_date: date, recovery_date: date,
                         records: Mapping[int, AsRecord], as_min_hosts: int = 500) -> RecoveryAttribution:
    if floor_date == recovery_date:
        raise ValueError("floor and recovery dates must differ")
    present = {d for d, _ in counts}
    for d in (floor_date, recovery_date):
        if d not in present:
            raise ValueError(f"no counts for {d}")
    totals = category_totals(counts, records)
    lo, hi = totals[floor_date], totals[recovery_date]
    deltas = {c: hi[c] - lo[c] for c in CATEGORY_ORDER}
    positive = sum(v for v in deltas.values() if v > 0)
    net = sum(deltas.values())
    cats = [
        CategoryDelta(
            category=c,
            before=lo[c],
            after=hi[c],
            delta=deltas[c],
            share=deltas[c] / positive if positive and deltas[c] > 0 else (0.0 if positive else None),
            share_of_net=deltas[c] / net if net else None,
            anti_correlated=net > 0 and deltas[c] < 0,
        )
        for c in CATEGORY_ORDER
    ]
    return RecoveryAttribution(floor_date, recovery_date, net, cats,
                               as_deltas(counts, floor_date, recovery_date, as_min_hosts, net))


def table2_rows(cells: Iterable[CompositionCell]) -> list[dict]:
    """One row per category, with ``<date>_hosts`` / ``<date>_pct`` column pairs."""
    by_cat: dict[Category, dict[str, str]] = {c: {"category": c.value} for c in CATEGORY_ORDER}
    totals: dict[str, int] = {}
    for cell in cells:
        key = cell.date.isoformat()
        by_cat[cell.category][f"{key}_hosts"] = str(cell.hosts)
        by_cat[cell.category][f"{key}_pct"] = f"{100 * cell.share:.1f}"
        totals[key] = totals.get(key, 0) + cell.hosts
    rows = [by_cat[c] for c in CATEGORY_ORDER]
    total_row = {"category": "total"}
    for key, v in totals.items():
        total_row[f"{key}_hosts"] = str(v)
        total_row[f"{key}_pct"] = "100.0"
    rows.append(total_row)
    return rows


def write_table2(cells: Sequence[CompositionCell], fh: TextIO) -> None:
    dates = sorted({c.date.isoformat() for c in cells})
    fields = ["category"] + [f"{d}_{k}" for d in dates for k in ("hosts", "pct")]
    w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in table2_rows(cells):
        w.writerow(row)
