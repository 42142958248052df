"""Five-way reachability verdicts, per-prefix majority consensus and per-vantage distributions."""

from __future__ import annotations

import csv
import ipaddress
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, TextIO

from .prober import DEFAULT_PORTS, Outcome, PortOutcome, ProbeObservation


class Verdict(str, Enum):
    NULL_ROUTE = "NULL_ROUTE"
    REACHABLE = "REACHABLE"
    BGP_WITHDRAW = "BGP_WITHDRAW"
    FIREWALL_ACL = "FIREWALL_ACL"
    AMBIGUOUS = "AMBIGUOUS"

    @property
    def code(self) -> str:
        return VERDICT_CODES[self]


VERDICT_CODES = {
    Verdict.NULL_ROUTE: "NR",
    Verdict.REACHABLE: "RE",
    Verdict.BGP_WITHDRAW: "BW",
    Verdict.FIREWALL_ACL: "FA",
    Verdict.AMBIGUOUS: "AM",
}
VERDICT_ORDER = tuple(Verdict)


class PortConfigError(ValueError):
    pass


def _kind(o) -> Outcome:
    return o.kind if isinstance(o, PortOutcome) else Outcome(o)


def classify(o80, o443, o179) -> Verdict:
    """Map one run's three port outcomes to a verdict.

    Rules apply in order, first match wins:
    all timeouts -> NULL_ROUTE; SYN-ACK on 80/443 -> REACHABLE; any ICMP
    unreachable -> BGP_WITHDRAW; 80/443 silent with RST on 179 -> FIREWALL_ACL;
    RST on 80/443 -> REACHABLE; anything else -> AMBIGUOUS.
    """
    a, b, c = _kind(o80), _kind(o443), _kind(o179)
    T = Outcome.TIMEOUT
    if a is T and b is T and c is T:
        return Verdict.NULL_ROUTE
    if Outcome.SYN_ACK in (a, b):
        return Verdict.REACHABLE
    if Outcome.ICMP_UNREACHABLE in (a, b, c):
        return Verdict.BGP_WITHDRAW
    if a is T and b is T and c is Outcome.RST:
        return Verdict.FIREWALL_ACL
    if Outcome.RST in (a, b):
        return Verdict.REACHABLE
    return Verdict.AMBIGUOUS


def classify_observation(obs: ProbeObservation) -> Verdict:
    if set(obs.outcomes) != set(DEFAULT_PORTS):
        raise PortConfigError(
            f"{obs.prefix} run {obs.run_id}: classification needs ports 80/443/179, got {sorted(obs.outcomes)}"
        )
    return classify(obs.outcomes[80], obs.outcomes[443], obs.outcomes[179])


def consensus(run_verdicts: Iterable[Verdict]) -> tuple[Verdict, float]:
    """Strict-majority vote. Without a majority the result is AMBIGUOUS at the plurality's support."""
    counts = Counter(Verdict(v) for v in run_verdicts)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("consensus needs at least one run")
    top = max(counts.values())
    for v in VERDICT_ORDER:
        if counts[v] == top and 2 * top > total:
            return v, top / total
    return Verdict.AMBIGUOUS, top / total


@dataclass(frozen=True)
class ConsensusRecord:
    prefix: ipaddress.IPv4Network
    vantage_id: str
    run_verdicts: tuple[tuple[Verdict, int], ...]  # multiset as sorted (verdict, count) pairs
    consensus: Verdict
    support: float

    @property
    def runs(self) -> int:
        return sum(n for _, n in self.run_verdicts)

    @classmethod
    def from_runs(cls, prefix, vantage_id: str, run_verdicts: Iterable[Verdict]) -> "ConsensusRecord":
        counts = Counter(Verdict(v) for v in run_verdicts)
        verdict, support = consensus(counts.elements())
        pairs = tuple((v, counts[v]) for v in VERDICT_ORDER if counts[v])
        return cls(ipaddress.IPv4Network(prefix), vantage_id, pairs, verdict, support)


@dataclass(frozen=True)
class VerdictDistribution:
    vantage_id: str
    runs: int
    counts: dict[Verdict, int]
    fractions: dict[Verdict, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def pct(self, verdict: Verdict) -> float:
        return 100.0 * self.fractions[verdict]


def build_consensus(observations: Iterable[ProbeObservation]) -> list[ConsensusRecord]:
    """Group runs by (vantage, prefix) and vote. All runs must use the same port set."""
    groups: dict[tuple[str, ipaddress.IPv4Network], list[Verdict]] = defaultdict(list)
    ports = None
    for obs in observations:
        these = tuple(sorted(obs.outcomes))
        if ports is None:
            ports = these
        elif these != ports:
            raise PortConfigError(f"mixed port configurations across runs: {list(ports)} vs {list(these)}")
        groups[(obs.vantage_id, obs.prefix)].append(classify_observation(obs))
    if not groups:
        raise ValueError("no observations")
    return [
        ConsensusRecord.from_runs(prefix, vantage, verdicts)
        for (vantage, prefix), verdicts in sorted(groups.items(), key=lambda kv: (kv[0][0], int(kv[0][1].network_address), kv[0][1].prefixlen))
    ]


def distribution(records: Sequence[ConsensusRecord], vantage_id: str) -> VerdictDistribution:
    if not records:
        raise ValueError("no consensus records")
    bad = {r.vantage_id for r in records} - {vantage_id}
    if bad:
        raise ValueError(f"records from other vantages mixed in: {sorted(bad)}")
    counts = Counter(r.consensus for r in records)
    total = len(records)
    return VerdictDistribution(
        vantage_id=vantage_id,
        runs=max(r.runs for r in records),
        counts={v: counts[v] for v in VERDICT_ORDER},
        fractions={v: counts[v] / total for v in VERDICT_ORDER},
    )


def cross_vantage_spread(distributions: Sequence[VerdictDistribution], verdict: Verdict) -> float:
    """Max minus min share of ``verdict`` across vantages, in percentage points."""
    if len(distributions) < 2:
        raise ValueError("spread needs at least two vantage distributions")
    vals = [d.pct(verdict) for d in distributions]
    return max(vals) - min(vals)


CONSENSUS_COLUMNS = ("prefix", "vantage", "consensus", "support", "runs") + tuple(v.code for v in VERDICT_ORDER)


def write_consensus_csv(records: Iterable[ConsensusRecord], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CONSENSUS_COLUMNS)
    for r in records:
        counts = dict(r.run_verdicts)
        w.writerow([str(r.prefix), r.vantage_id, r.consensus.value, f"{r.support:.6f}", r.runs]
                   + [counts.get(v, 0) for v in VERDICT_ORDER])


def read_consensus_csv(fh: TextIO) -> list[ConsensusRecord]:
    """Load consensus rows; per-verdict run counts are re-voted and must agree with the stored consensus."""
    out = []
    for line_no, row in enumerate(csv.DictReader(fh), start=2):
        runs = []
        for v in VERDICT_ORDER:
            runs.extend([v] * int(row.get(v.code) or 0))
        if runs:
            rec = ConsensusRecord.from_runs(row["prefix"], row["vantage"], runs)
            if rec.consensus.value != row["consensus"]:
                raise ValueError(f"line {line_no}: stored consensus {row['consensus']} disagrees with run counts")
        else:
            # summary-only row: trust the stored vote
            v = Verdict(row["consensus"])
            n = int(row["runs"])
            rec = ConsensusRecord(ipaddress.IPv4Network(row["prefix"]), row["vantage"], ((v, n),), v, float(row["support"]))
        out.append(rec)
    return out


TABLE4_COLUMNS = ("vantage", "runs") + tuple(
    f"{v.code}_{k}" for v in VERDICT_ORDER for k in ("count", "pct")
)


def write_table4(distributions: Iterable[VerdictDistribution], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE4_COLUMNS)
    for d in distributions:
        row = [d.vantage_id, d.runs]
        for v in VERDICT_ORDER:
            row += [d.counts[v], f"{d.pct(v):.1f}"]
        w.writerow(row)
