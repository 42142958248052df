"""Passive scan host-count time series: pending split, baselines, onset, severity, inflation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Sequence, TextIO

log = logging.getLogger(__name__)

CARRYOVER_THRESHOLD = 0.80
ONSET_THRESHOLD = 0.5
INFLATION_RATIO = 1.5

TABLE1_COLUMNS = ("date", "phase", "total", "active", "reduction_pct")


@dataclass(frozen=True)
class HostSnapshot:
    date: date
    total: int
    pending: int = 0
    country: str = ""
    pending_known: bool = True

    def __post_init__(self):
        if not 0 <= self.pending <= self.total:
            raise ValueError(f"{self.date}: need 0 <= pending ({self.pending}) <= total ({self.total})")

    @property
    def active(self) -> int:
        return self.total - self.pending


@dataclass(frozen=True)
class BaselineBand:
    low: int
    high: int
    reference: int
    reference_date: date
    source_dates: tuple[date, ...] = ()

    def __post_init__(self):
        if not self.low <= self.reference <= self.high:
            raise ValueError("reference must lie inside the band")

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class PendingSplit:
    active_fraction: float | None
    pending_fraction: float | None
    carryover: bool
    empty: bool = False


@dataclass(frozen=True)
class Onset:
    date: date
    gap: tuple[date, date] | None = None  # first/last missing calendar day just before onset
    field: str = "active"


@dataclass(frozen=True)
class AnomalyWindow:
    start: date
    end: date
    peak_date: date
    peak_ratio: float


@dataclass
class EventAnalysis:
    name: str
    onset: Onset | None
    floor_date: date | None
    floor_active: int | None
    reductions: dict[date, float] = field(default_factory=dict)
    carryover: dict[date, bool] = field(default_factory=dict)
    pending_fraction: dict[date, float] = field(default_factory=dict)
    anomaly_windows: list[AnomalyWindow] = field(default_factory=list)
    total_onset: Onset | None = None

    def to_dict(self) -> dict:
        def iso(d):
            return d.isoformat() if d else None

        def onset(o):
            if o is None:
                return None
            return {"date": iso(o.date), "field": o.field,
                    "gap": [iso(o.gap[0]), iso(o.gap[1])] if o.gap else None}

        return {
            "name": self.name,
            "onset": onset(self.onset),
            "onset_from_totals": onset(self.total_onset),
            "floor_date": iso(self.floor_date),
            "floor_active": self.floor_active,
            "reduction_pct": {iso(d): round(v, 1) for d, v in sorted(self.reductions.items())},
            "pending_fraction": {iso(d): round(v, 4) for d, v in sorted(self.pending_fraction.items())},
            "carryover": {iso(d): v for d, v in sorted(self.carryover.items())},
            "anomaly_windows": [
                {"start": iso(w.start), "end": iso(w.end), "peak_date": iso(w.peak_date),
                 "peak_ratio": round(w.peak_ratio, 3)}
                for w in self.anomaly_windows
            ],
        }


def read_series_csv(fh: TextIO, country: str | None = None) -> list[HostSnapshot]:
    """Read ``date,total,pending,country`` rows, date-sorted.

    A blank pending cell is read as 0 and logged as a data-quality warning.
    """
    out = []
    blank = []
    for line_no, row in enumerate(csv.DictReader(fh), start=2):
        try:
            d = date.fromisoformat(row["date"].strip())
            total = int(row["total"])
            raw_pending = (row.get("pending") or "").strip()
            cc = (row.get("country") or "").strip().upper()
        except (KeyError, ValueError, AttributeError) as exc:
            raise ValueError(f"line {line_no}: {exc}") from exc
        if country and cc and cc != country.upper():
            continue
        if not raw_pending:
            blank.append(d)
        out.append(HostSnapshot(d, total, int(raw_pending) if raw_pending else 0, cc, bool(raw_pending)))
    if blank:
        log.warning("pending count missing on %d dates (treated as 0): first %s", len(blank), blank[0])
    out.sort(key=lambda s: s.date)
    dates = [s.date for s in out]
    if len(set(dates)) != len(dates):
        raise ValueError("duplicate dates in series")
    return out


def build_baseline(monthly: Sequence[HostSnapshot], reference_date: date) -> BaselineBand:
    if len(monthly) < 3:
        raise ValueError(f"baseline needs at least 3 snapshots, got {len(monthly)}")
    ref = [s for s in monthly if s.date == reference_date]
    if not ref:
        raise ValueError(f"reference date {reference_date} not among baseline snapshots")
    totals = [s.total for s in monthly]
    return BaselineBand(min(totals), max(totals), ref[0].total, reference_date,
                        tuple(sorted(s.date for s in monthly)))


def reduction(active: float, band: BaselineBand) -> float:
    """Signed change against the reference, in percent (negative = fewer hosts)."""
    if band.reference <= 0:
        raise ValueError("reference must be positive")
    return -100.0 * (1.0 - active / band.reference)


def decompose_pending(s: HostSnapshot, carryover_threshold: float = CARRYOVER_THRESHOLD) -> PendingSplit:
    if s.total == 0:
        return PendingSplit(None, None, False, empty=True)
    pending_fraction = s.pending / s.total
    return PendingSplit(1.0 - pending_fraction, pending_fraction, pending_fraction >= carryover_threshold)


def _missing_between(a: date, b: date) -> tuple[date, date] | None:
    if (b - a).days > 1:
        return a + timedelta(days=1), b - timedelta(days=1)
    return None


def detect_onset(series: Sequence[HostSnapshot], band: BaselineBand, threshold: float = ONSET_THRESHOLD,
                 use_totals: bool = False) -> Onset | None:
    """First date whose active count (or total, if asked) drops below ``threshold * reference``.

    Missing calendar days immediately before the onset are reported as a gap;
    they are never filled in.
    """
    cutoff = threshold * band.reference
    prev = None
    for s in series:
        value = s.total if use_totals else s.active
        if value < cutoff:
            gap = _missing_between(prev.date, s.date) if prev is not None else None
            return Onset(s.date, gap, "total" if use_totals else "active")
        prev = s
    return None


def detect_inflation(series: Sequence[HostSnapshot], band: BaselineBand,
                     control_series: Sequence[HostSnapshot], control_band: BaselineBand,
                     ratio_threshold: float = INFLATION_RATIO) -> list[AnomalyWindow]:
    """Maximal runs of observations with ``total/reference >= ratio_threshold`` while the control stays in its band."""
    control = {s.date: s.total for s in control_series}
    windows: list[AnomalyWindow] = []
    run: list[tuple[date, float]] = []

    def close():
        if run:
            peak_date, peak = max(run, key=lambda x: x[1])
            windows.append(AnomalyWindow(run[0][0], run[-1][0], peak_date, peak))
            run.clear()

    for s in series:
        ratio = s.total / band.reference
        c = control.get(s.date)
        if ratio >= ratio_threshold and c is not None and control_band.contains(c):
            run.append((s.date, ratio))
        else:
            close()
    close()
    return windows


def analyze_event(name: str, series: Sequence[HostSnapshot], band: BaselineBand,
                  start: date | None = None, end: date | None = None,
                  key_dates: Iterable[date] = (), onset_threshold: float = ONSET_THRESHOLD,
                  carryover_threshold: float = CARRYOVER_THRESHOLD) -> EventAnalysis:
    window = [s for s in series if (start is None or s.date >= start) and (end is None or s.date <= end)]
    if not window:
        raise ValueError(f"event {name}: no observations between {start} and {end}")
    onset = detect_onset(window, band, onset_threshold)
    total_onset = detect_onset(window, band, onset_threshold, use_totals=True)
    after = [s for s in window if onset is not None and s.date >= onset.date]
    floor = min(after, key=lambda s: (s.active, s.date)) if after else None
    by_date = {s.date: s for s in window}
    ev = EventAnalysis(name, onset, floor.date if floor else None, floor.active if floor else None,
                       total_onset=total_onset)
    for d in sorted(set(key_dates)):
        s = by_date.get(d)
        if s is None:
            continue
        if onset is not None and d >= onset.date:
            ev.reductions[d] = reduction(s.active, band)
        if s.pending_known:
            split = decompose_pending(s, carryover_threshold)
            if not split.empty:
                ev.pending_fraction[d] = split.pending_fraction
                ev.carryover[d] = split.carryover
    return ev


def table1_rows(series: Sequence[HostSnapshot], analysis: EventAnalysis, phases: dict[date, str]) -> list[dict]:
    by_date = {s.date: s for s in series}
    rows = []
    for d in sorted(phases):
        s = by_date.get(d)
        if s is None:
            continue
        red = analysis.reductions.get(d)
        rows.append({
            "date": d.isoformat(),
            "phase": phases[d],
            "total": s.total,
            "active": s.active,
            "reduction_pct": "" if red is None else f"{red:.1f}",
        })
    return rows


def write_table1(rows: Iterable[dict], fh: TextIO) -> None:
    w = csv.DictWriter(fh, fieldnames=TABLE1_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
