"""BGP coverage of allocated address space and withdrawal between snapshots."""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass
from datetime import date
from typing import Iterable, TextIO

from .prefixtrie import PrefixTrie
from .registry import AllocatedPrefix

WITHDRAWAL_THRESHOLD_PP = -5.0

TABLE3_COLUMNS = ("date", "event", "phase", "announced", "covered", "coverage_pct")


class UniverseMismatch(ValueError):
    pass


@dataclass(frozen=True)
class CoverageResult:
    date: date
    announced_count: int
    allocated_count: int
    covered_count: int
    coverage_fraction: float
    covered_set: frozenset[AllocatedPrefix]
    uncovered_set: frozenset[AllocatedPrefix]

    @property
    def coverage_pct(self) -> float:
        return 100.0 * self.coverage_fraction

    @property
    def universe(self) -> frozenset[AllocatedPrefix]:
        return self.covered_set | self.uncovered_set


@dataclass(frozen=True)
class WithdrawalDiff:
    from_date: date
    to_date: date
    lost: frozenset[AllocatedPrefix]
    gained: frozenset[AllocatedPrefix]
    net_pp: float
    withdrawal: bool

    @property
    def net_withdrawn(self) -> int:
        return len(self.lost) - len(self.gained)

    def to_dict(self) -> dict:
        key = AllocatedPrefix.sort_key
        return {
            "from_date": self.from_date.isoformat(),
            "to_date": self.to_date.isoformat(),
            "net_pp": round(self.net_pp, 4),
            "withdrawal": self.withdrawal,
            "lost_count": len(self.lost),
            "gained_count": len(self.gained),
            "net_withdrawn": self.net_withdrawn,
            "lost": [str(p.cidr) for p in sorted(self.lost, key=key)],
            "gained": [str(p.cidr) for p in sorted(self.gained, key=key)],
        }


def _as_allocated(items: Iterable) -> list[AllocatedPrefix]:
    out = []
    for it in items:
        if isinstance(it, AllocatedPrefix):
            out.append(it)
        else:
            out.append(AllocatedPrefix(ipaddress.IPv4Network(it)))
    return out


def compute_coverage(allocated: Iterable, announced: Iterable[ipaddress.IPv4Network], on: date) -> CoverageResult:
    """Mark each allocated prefix covered when an announcement equals, contains or sits inside it."""
    alloc = set(_as_allocated(allocated))
    if not alloc:
        raise ValueError("allocated prefix set is empty; coverage fraction is undefined")
    announced = set(announced)
    index = PrefixTrie(announced)
    covered = frozenset(p for p in alloc if index.related(p.cidr))
    uncovered = frozenset(alloc - covered)
    return CoverageResult(
        date=on,
        announced_count=len(announced),
        allocated_count=len(alloc),
        covered_count=len(covered),
        coverage_fraction=len(covered) / len(alloc),
        covered_set=covered,
        uncovered_set=uncovered,
    )


def diff_coverage(before: CoverageResult, after: CoverageResult, threshold_pp: float = WITHDRAWAL_THRESHOLD_PP) -> WithdrawalDiff:
    if before.universe != after.universe:
        sym = before.universe ^ after.universe
        raise UniverseMismatch(
            f"allocated universes differ between {before.date} and {after.date}: "
            f"symmetric difference of {len(sym)} prefixes"
        )
    lost = frozenset(before.covered_set - after.covered_set)
    gained = frozenset(after.covered_set - before.covered_set)
    net_pp = after.coverage_pct - before.coverage_pct
    return WithdrawalDiff(before.date, after.date, lost, gained, net_pp, net_pp <= threshold_pp)


def within_event_variation(results: Iterable[CoverageResult]) -> float:
    """Spread (max - min) of coverage percentages, in percentage points."""
    pcts = [r.coverage_pct for r in results]
    if not pcts:
        raise ValueError("no coverage results")
    return max(pcts) - min(pcts)


def table3_row(result: CoverageResult, event: str = "", phase: str = "") -> dict:
    return {
        "date": result.date.isoformat(),
        "event": event,
        "phase": phase,
        "announced": result.announced_count,
        "covered": result.covered_count,
        "coverage_pct": f"{result.coverage_pct:.1f}",
    }


def write_table3(rows: Iterable[dict], fh: TextIO) -> None:
    w = csv.DictWriter(fh, fieldnames=TABLE3_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
