"""Command-line entry point: ``shutdownscope <subcommand> ...``.

Every subcommand reads files, builds all of its outputs in memory and only
then writes them under ``--out``, so a failing run leaves nothing behind.
Reports are deterministic; wall-clock timestamps go to ``manifest.json`` only.

Exit status: 0 success, 2 usage error, 1 data or processing error.
"""

from __future__ import annotations

import argparse
import csv
import gzip
import hashlib
import io
import json
import logging
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path

from . import __version__
from .ascomp import (Category, categorize_all, composition, exemptions, load_overrides,
                     load_rules, read_counts_csv, read_metadata_csv, recovery_attribution, table2_rows)
from .config import Config, load_config
from .coverage import compute_coverage, diff_coverage, table3_row, within_event_variation, TABLE3_COLUMNS
from .passive import (analyze_event, build_baseline, detect_inflation, read_series_csv, table1_rows,
                      TABLE1_COLUMNS)
from .prober import ProbeSetupError, SweepPolicy, TcpTransport, read_targets, sweep, write_observations, read_observations
from .registry import country_asns, country_prefixes, export_json, parse_delegated
from .rib import MrtFormatError, originated_prefixes, read_bview
from .verdicts import (TABLE4_COLUMNS, VERDICT_ORDER, build_consensus,
                       cross_vantage_spread, distribution, read_consensus_csv, write_consensus_csv)

log = logging.getLogger("shutdownscope")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- manifest ------------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    inputs: list[dict]  # {"path", "sha256"}
    config_digest: str
    tool_version: str = __version__
    options: dict = field(default_factory=dict)
    started_at: float | None = None
    finished_at: float | None = None
    outputs: dict = field(default_factory=dict)

    def identity(self) -> dict:
        """The timestamp-free part that reports embed."""
        return {
            "subcommand": self.subcommand,
            "inputs": [{"name": Path(i["path"]).name, "sha256": i["sha256"]} for i in self.inputs],
            "config_digest": self.config_digest,
            "tool_version": self.tool_version,
            "options": self.options,
        }

    @property
    def manifest_id(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["manifest_id"] = self.manifest_id
        return d


@dataclass
class RunResult:
    outputs: dict[str, str] = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _table(rows: list[dict], columns, fmt: str, manifest: RunManifest | None = None) -> tuple[str, str]:
    """Render rows as (extension, text) in the requested format."""
    if fmt == "json":
        payload = {"rows": rows}
        if manifest is not None:
            payload = {"manifest_id": manifest.manifest_id, "rows": rows}
        return "json", _dumps(payload)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return "csv", buf.getvalue()


def _report(manifest: RunManifest, body: dict) -> str:
    return _dumps({"manifest_id": manifest.manifest_id, "manifest": manifest.identity(), **body})


# -- argument helpers ----------------------------------------------------------

def _existing(paths) -> list[Path]:
    out = []
    for p in paths:
        path = Path(p)
        if not path.is_file():
            raise UsageError(f"input file not found: {p}")
        out.append(path)
    return out


def _open_text(path: Path):
    """Open a text input, transparently decompressing gzip."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _iso(text: str, what: str) -> date:
    try:
        return date.fromisoformat(text)
    except (TypeError, ValueError):
        raise UsageError(f"{what}: expected YYYY-MM-DD, got {text!r}") from None


def _header_date(header: str | None) -> date | None:
    if not header:
        return None
    fields = header.split("|")
    for f in fields[2:3] + fields[5:6]:
        if len(f) == 8 and f.isdigit():
            return date(int(f[:4]), int(f[4:6]), int(f[6:]))
    return None


# -- rib -------------------------------------------------------------------------

def load_registry(path: Path, country: str, statuses, registry_date: date | None = None):
    with open(path, encoding="utf-8") as fh:
        data = parse_delegated(fh, registry_date or date.min)
    snap = registry_date or _header_date(data.header)
    if snap is None:
        raise UsageError(f"{path}: no header date; pass --registry-date")
    data.snapshot_date = snap
    for r in data.rejects:
        log.warning("%s:%d: rejected record (%s)", path, r.line_no, r.reason)
    asns = country_asns(data.records, country, statuses)
    prefixes = country_prefixes(data.records, country, statuses)
    if not asns:
        raise DataError(f"{path}: no {country} ASN records")
    if not prefixes:
        raise DataError(f"{path}: no {country} IPv4 records")
    return data, asns, prefixes


def rib_coverage(bviews, capture_dates, delegated: Path, country: str, statuses, registry_date=None):
    data, asns, prefixes = load_registry(delegated, country, statuses, registry_date)
    results, snaps = [], []
    for path, d in zip(bviews, capture_dates):
        try:
            snap = read_bview(path, d)
        except MrtFormatError as exc:
            raise DataError(f"{path}: {exc}") from exc
        announced = originated_prefixes(snap, asns)
        results.append(compute_coverage(prefixes, announced, snap.capture_date))
        snaps.append(snap)
    return data, results, snaps


def cmd_rib(args, cfg: Config, manifest: RunManifest) -> RunResult:
    bviews = _existing(args.bview)
    (delegated,) = _existing([args.delegated])
    manifest.inputs = [{"path": str(p), "sha256": sha256_file(p)} for p in [delegated, *bviews]]
    if args.date and len(args.date) != len(bviews):
        raise UsageError("--date must be given once per --bview")
    if args.phase and len(args.phase) != len(bviews):
        raise UsageError("--phase must be given once per --bview")
    if args.diff and len(bviews) < 2:
        raise UsageError("--diff needs at least two --bview files")
    dates = [_iso(d, "--date") for d in args.date] if args.date else [None] * len(bviews)
    reg_date = _iso(args.registry_date, "--registry-date") if args.registry_date else None
    country = args.country or cfg.registry.country
    statuses = frozenset(cfg.registry.statuses)

    data, results, snaps = rib_coverage(bviews, dates, delegated, country, statuses, reg_date)
    phases = args.phase or [""] * len(results)
    rows = [table3_row(r, args.event or "", ph) for r, ph in zip(results, phases)]
    res = RunResult()
    ext, text = _table(rows, TABLE3_COLUMNS, args.format, manifest)
    res.outputs[f"coverage.{ext}"] = text
    reg = export_json(data, country, statuses)
    summary = {
        "country": country,
        "registry_date": data.snapshot_date.isoformat(),
        "ipv4_record_count": reg["ipv4_record_count"],
        "allocated_prefix_count": reg["prefix_count"],
        "asn_count": len(reg["asns"]),
        "registry_rejects": reg["rejects"],
        "snapshots": [
            {
                "bview": Path(p).name,
                "date": r.date.isoformat(),
                "peer_count": s.peer_count,
                "entries": len(s.entries),
                "skipped_records": {f"{t}/{st}": n for (t, st), n in sorted(s.skipped.items())},
                "announced": r.announced_count,
                "covered": r.covered_count,
                "allocated": r.allocated_count,
                "coverage_pct": round(r.coverage_pct, 4),
            }
            for p, r, s in zip(bviews, results, snaps)
        ],
    }
    if len(results) > 1:
        summary["within_event_variation_pp"] = round(within_event_variation(results), 4)
    res.outputs["coverage-summary.json"] = _report(manifest, summary)
    res.outputs["registry.json"] = _dumps(reg)
    if args.diff:
        threshold = cfg.coverage.withdrawal_threshold_pp
        diffs = [diff_coverage(a, b, threshold).to_dict() for a, b in zip(results, results[1:])]
        res.outputs["diff.json"] = _report(manifest, {"threshold_pp": threshold, "diffs": diffs})
    for r in results:
        res.messages.append(f"{r.date}: announced {r.announced_count}, covered {r.covered_count}/"
                            f"{r.allocated_count} ({r.coverage_pct:.1f}%)")
    return res


# -- probe -----------------------------------------------------------------------

def _make_transport(spec: str, ack: bool):
    if spec == "real":
        if not ack:
            raise UsageError("refusing to send probes over the network without --i-understand-scanning-ethics "
                             "(probe only address space you are authorised to measure, at a modest rate)")
        return TcpTransport(), []
    if spec.startswith("replay:"):
        from .harness import ScriptedTransport, TransportScript

        (path,) = _existing([spec[len("replay:"):]])
        with open(path, encoding="utf-8") as fh:
            try:
                script = TransportScript.load(fh)
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}: {exc}") from exc
        return ScriptedTransport(script), [path]
    raise UsageError(f"--transport must be 'real' or 'replay:FILE', got {spec!r}")


def _ports(text: str | None, default) -> tuple[int, ...]:
    if text is None:
        return tuple(default)
    try:
        ports = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise UsageError(f"--ports: expected comma-separated integers, got {text!r}") from None
    if not ports or any(not 0 < p < 65536 for p in ports):
        raise UsageError(f"--ports: invalid port list {text!r}")
    return ports


def cmd_probe(args, cfg: Config, manifest: RunManifest) -> RunResult:
    pc = cfg.probe
    rate = pc.rate if args.rate is None else args.rate
    if rate <= 0:
        raise UsageError("--rate must be positive")
    timeout = pc.timeout_ms if args.timeout_ms is None else args.timeout_ms
    if timeout <= 0:
        raise UsageError("--timeout-ms must be positive")
    retries = pc.retries if args.retries is None else args.retries
    if retries < 0:
        raise UsageError("--retries must be >= 0")
    in_flight = pc.max_in_flight if args.max_in_flight is None else args.max_in_flight
    if in_flight < 1:
        raise UsageError("--max-in-flight must be >= 1")
    ports = _ports(args.ports, pc.ports)
    (targets_path,) = _existing([args.targets])
    transport, extra_inputs = _make_transport(args.transport, args.i_understand_scanning_ethics)
    manifest.inputs = [{"path": str(p), "sha256": sha256_file(p)} for p in [targets_path, *extra_inputs]]
    policy = SweepPolicy(timeout_ms=timeout, retries=retries, max_in_flight=in_flight, rate=rate,
                         vantage_id=args.vantage_id or pc.vantage_id, run_id=args.run_id, ports=ports)
    with open(targets_path, encoding="utf-8") as fh:
        try:
            targets = read_targets(fh, ports)
        except ValueError as exc:
            raise DataError(f"{targets_path}: {exc}") from exc
    if not targets:
        raise DataError(f"{targets_path}: no targets")
    observations = sweep(targets, transport, policy)
    buf = io.StringIO()
    write_observations(observations, buf)
    res = RunResult()
    res.outputs["observations.jsonl"] = buf.getvalue()
    tally = Counter((p, o.kind.value) for obs in observations for p, o in obs.outcomes.items())
    summary = {
        "vantage_id": policy.vantage_id,
        "run_id": policy.run_id,
        "targets": len(targets),
        "policy": {"timeout_ms": timeout, "retries": retries, "max_in_flight": in_flight, "rate": rate,
                   "ports": list(ports)},
        "outcomes": {str(p): {k: n for (pp, k), n in sorted(tally.items()) if pp == p} for p in ports},
    }
    res.outputs["probe-summary.json"] = _report(manifest, summary)
    res.messages.append(f"probed {len(targets)} targets from {policy.vantage_id} (run {policy.run_id})")
    return res


# -- classify --------------------------------------------------------------------

def classify_observations(observations):
    records = build_consensus(observations)
    by_vantage: dict[str, list] = {}
    for r in records:
        by_vantage.setdefault(r.vantage_id, []).append(r)
    dists = [distribution(rs, v) for v, rs in sorted(by_vantage.items())]
    return records, dists


def _spreads(dists) -> dict[str, float] | None:
    if len(dists) < 2:
        return None
    return {v.value: round(cross_vantage_spread(dists, v), 4) for v in VERDICT_ORDER}


def _distribution_rows(dists) -> list[dict]:
    rows = []
    for d in dists:
        row = {"vantage": d.vantage_id, "runs": d.runs}
        for v in VERDICT_ORDER:
            row[f"{v.code}_count"] = d.counts[v]
            row[f"{v.code}_pct"] = f"{d.pct(v):.1f}"
        rows.append(row)
    return rows


def cmd_classify(args, cfg: Config, manifest: RunManifest) -> RunResult:
    paths = _existing(args.observations)
    manifest.inputs = [{"path": str(p), "sha256": sha256_file(p)} for p in paths]
    observations = []
    for p in paths:
        with _open_text(p) as fh:
            try:
                observations.extend(read_observations(fh))
            except ValueError as exc:
                raise DataError(f"{p}: {exc}") from exc
    if not observations:
        raise DataError("no observations in input")
    records, dists = classify_observations(observations)
    res = RunResult()
    if args.format == "json":
        rows = [{"prefix": str(r.prefix), "vantage": r.vantage_id, "consensus": r.consensus.value,
                 "support": round(r.support, 6), "runs": r.runs,
                 **{v.code: dict(r.run_verdicts).get(v, 0) for v in VERDICT_ORDER}} for r in records]
        res.outputs["consensus.json"] = _dumps({"manifest_id": manifest.manifest_id, "rows": rows})
    else:
        buf = io.StringIO()
        write_consensus_csv(records, buf)
        res.outputs["consensus.csv"] = buf.getvalue()
    ext, text = _table(_distribution_rows(dists), TABLE4_COLUMNS, args.format, manifest)
    res.outputs[f"table4.{ext}"] = text
    spreads = _spreads(dists)
    res.outputs["classify-summary.json"] = _report(manifest, {
        "per_vantage": True,
        "prefixes": len({r.prefix for r in records}),
        "vantages": [d.vantage_id for d in dists],
        "distributions": _distribution_rows(dists),
        "cross_vantage_spread_pp": spreads,
    })
    for d in dists:
        res.messages.append(f"{d.vantage_id}: " + " ".join(f"{v.code}={d.counts[v]}" for v in VERDICT_ORDER))
    if spreads is not None:
        res.messages.append(f"NULL_ROUTE cross-vantage spread: {spreads['NULL_ROUTE']:.1f} pp")
    else:
        res.messages.append("single vantage: cross-vantage spread not computed")
    return res


# -- passive ---------------------------------------------------------------------

def _read_series(path: Path, country: str | None):
    with open(path, encoding="utf-8") as fh:
        try:
            return read_series_csv(fh, country)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc


def _parse_events(args, cfg: Config) -> list[dict]:
    if not args.event:
        return [dict(e) for e in cfg.passive.events]
    events = []
    for spec in args.event:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"--event expects NAME:START:END, got {spec!r}")
        events.append({"name": parts[0], "start": parts[1], "end": parts[2], "phases": {}})
    for spec in args.phase or []:
        parts = spec.split(":", 2)
        if len(parts) != 3:
            raise UsageError(f"--phase expects EVENT:DATE:LABEL, got {spec!r}")
        match = [e for e in events if e["name"] == parts[0]]
        if not match:
            raise UsageError(f"--phase names unknown event {parts[0]!r}")
        match[0]["phases"][parts[1]] = parts[2]
    return events


def cmd_passive(args, cfg: Config, manifest: RunManifest) -> RunResult:
    pc = cfg.passive
    series_path, baseline_path = _existing([args.series, args.baseline])
    control_path = _existing([args.control])[0] if args.control else None
    manifest.inputs = [{"path": str(p), "sha256": sha256_file(p)}
                       for p in [series_path, baseline_path] + ([control_path] if control_path else [])]
    ref_text = args.reference_date or pc.reference_date
    if not ref_text:
        raise UsageError("a reference date is required (--reference-date or passive.reference_date)")
    ref = _iso(ref_text, "reference date")
    country = args.country or pc.country
    control_country = args.control_country or pc.control_country
    events = _parse_events(args, cfg)

    series = _read_series(series_path, country)
    if not series:
        raise DataError(f"{series_path}: no rows for {country}")
    try:
        band = build_baseline(_read_series(baseline_path, country), ref)
    except ValueError as exc:
        raise DataError(f"{baseline_path}: {exc}") from exc

    windows = None
    control_band = None
    inflation_note = None
    if control_path is None:
        inflation_note = "no control series given; inflation detection skipped"
        log.warning(inflation_note)
    else:
        control = _read_series(control_path, control_country)
        cref = _iso(pc.control_reference_date or ref_text, "control reference date")
        try:
            control_band = build_baseline(_read_series(baseline_path, control_country), cref)
        except ValueError as exc:
            raise DataError(f"{baseline_path} (control {control_country}): {exc}") from exc
        windows = detect_inflation(series, band, control, control_band, pc.inflation_ratio)

    if not events:
        events = [{"name": "all", "start": None, "end": None, "phases": {}}]
    analyses, table_rows = [], []
    for ev in events:
        phases = {_iso(d, f"event {ev['name']} phase date"): label for d, label in ev.get("phases", {}).items()}
        start = _iso(ev["start"], "event start") if ev.get("start") else None
        end = _iso(ev["end"], "event end") if ev.get("end") else None
        try:
            a = analyze_event(ev["name"], series, band, start, end, phases, pc.onset_threshold,
                              pc.carryover_threshold)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        if windows:
            a.anomaly_windows = [w for w in windows if (start is None or w.end >= start)
                                 and (end is None or w.start <= end)]
        analyses.append(a)
        for row in table1_rows(series, a, phases):
            table_rows.append({"event": ev["name"], **row})

    def band_dict(b):
        return None if b is None else {"low": b.low, "high": b.high, "reference": b.reference,
                                       "reference_date": b.reference_date.isoformat()}

    res = RunResult()
    ext, text = _table(table_rows, ("event",) + TABLE1_COLUMNS, args.format, manifest)
    res.outputs[f"table1.{ext}"] = text
    res.outputs["events.json"] = _report(manifest, {
        "country": country,
        "baseline": band_dict(band),
        "control_country": control_country if control_path else None,
        "control_baseline": band_dict(control_band),
        "inflation": None if windows is None else [
            {"start": w.start.isoformat(), "end": w.end.isoformat(), "peak_date": w.peak_date.isoformat(),
             "peak_ratio": round(w.peak_ratio, 3)} for w in windows],
        "inflation_note": inflation_note,
        "events": [a.to_dict() for a in analyses],
    })
    for a in analyses:
        onset = a.onset.date.isoformat() if a.onset else "none"
        res.messages.append(f"{a.name}: onset {onset}; reductions "
                            + ", ".join(f"{d}: {v:.1f}%" for d, v in sorted(a.reductions.items())))
    return res


# -- ascomp ----------------------------------------------------------------------

def cmd_ascomp(args, cfg: Config, manifest: RunManifest) -> RunResult:
    ac = cfg.ascomp
    paths = [args.counts, args.metadata, args.rules] + ([args.overrides] if args.overrides else [])
    files = _existing(paths)
    manifest.inputs = [{"path": str(p), "sha256": sha256_file(p)} for p in files]
    try:
        with open(files[0], encoding="utf-8") as fh:
            counts = read_counts_csv(fh)
        with open(files[1], encoding="utf-8") as fh:
            metadata = read_metadata_csv(fh)
        with open(files[2], encoding="utf-8") as fh:
            rules = load_rules(fh)
        overrides = {}
        if args.overrides:
            with open(files[3], encoding="utf-8") as fh:
                overrides = load_overrides(fh)
    except (ValueError, KeyError) as exc:
        raise DataError(f"reading AS inputs: {exc}") from exc
    try:
        records = categorize_all(metadata, rules, overrides)
    except ValueError as exc:
        raise DataError(f"categorisation: {exc}") from exc

    dates = [_iso(d, "--dates") for d in (args.dates.split(",") if args.dates else ac.composition_dates)]
    use = counts if not dates else {k: v for k, v in counts.items() if k[0] in set(dates)}
    if not use:
        raise DataError("no host counts for the requested dates")
    try:
        cells = composition(use, records)
    except KeyError as exc:
        raise DataError(str(exc.args[0]) if exc.args else str(exc)) from exc

    ev_specs = ac.exemption_events
    if args.baseline_date:
        if not args.event_dates:
            raise UsageError("--baseline-date needs --event-dates")
        ev_specs = [{"name": "event", "baseline": args.baseline_date, "event_dates": args.event_dates.split(",")}]
    exempt_out = []
    for ev in ev_specs:
        base = _iso(ev["baseline"], "exemption baseline")
        during = [_iso(d, "exemption event date") for d in ev["event_dates"]]
        findings = exemptions(counts, base, during, ac.exemption_threshold)
        exempt_out.append({
            "name": ev.get("name", ""),
            "baseline": base.isoformat(),
            "event_dates": [d.isoformat() for d in during],
            "findings": [{"asn": f.asn, "name": records[f.asn].name if f.asn in records else "",
                          "baseline_hosts": f.baseline_hosts, "min_event_hosts": f.min_event_hosts,
                          "retention": None if f.retention != f.retention else round(f.retention, 4),
                          "exempt": f.exempt, "note": f.note} for f in findings],
        })

    attribution = None
    floor_text = args.floor_date or ac.floor_date
    rec_text = args.recovery_date or ac.recovery_date
    if floor_text and rec_text:
        try:
            ra = recovery_attribution(counts, _iso(floor_text, "floor date"), _iso(rec_text, "recovery date"),
                                      records, ac.as_min_hosts)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        attribution = {
            "floor_date": ra.floor_date.isoformat(),
            "recovery_date": ra.recovery_date.isoformat(),
            "total_delta": ra.total_delta,
            "empty": ra.empty,
            "categories": [{"category": c.category.value, "before": c.before, "after": c.after, "delta": c.delta,
                            "share_of_positive": None if c.share is None else round(c.share, 6),
                            "share_of_net": None if c.share_of_net is None else round(c.share_of_net, 6),
                            "anti_correlated": c.anti_correlated} for c in ra.categories],
            "ases": [{"asn": a.asn, "name": records[a.asn].name, "category": records[a.asn].category.value,
                      "before": a.before, "after": a.after, "delta": a.delta,
                      "multiplier": a.multiplier if isinstance(a.multiplier, str) else round(a.multiplier, 4),
                      "anti_correlated": a.anti_correlated} for a in ra.ases],
        }
    elif floor_text or rec_text:
        raise UsageError("recovery attribution needs both a floor date and a recovery date")

    res = RunResult()
    rows = table2_rows(cells)
    columns = ["category"] + [f"{d}_{k}" for d in sorted({c.date.isoformat() for c in cells}) for k in ("hosts", "pct")]
    ext, text = _table(rows, columns, args.format, manifest)
    res.outputs[f"table2.{ext}"] = text
    res.outputs["ascomp-findings.json"] = _report(manifest, {
        "categories": {str(a): {"name": r.name, "category": r.category.value, "source": r.source}
                       for a, r in sorted(records.items())},
        "exemptions": exempt_out,
        "recovery_attribution": attribution,
    })
    for c in cells:
        if c.category is Category.ACADEMIC:
            res.messages.append(f"{c.date}: academic share {100 * c.share:.1f}%")
    return res


# -- report ----------------------------------------------------------------------

def _bundle_path(root: Path, *parts) -> Path:
    p = root.joinpath(*parts)
    if not p.exists():
        raise UsageError(f"bundle is missing {p}")
    return p


def cmd_report(args, cfg: Config, manifest: RunManifest) -> RunResult:
    """Run every analysis over a fixture bundle laid out by ``shutdownscope.fixtures.write_bundle``."""
    root = Path(args.bundle)
    if not root.is_dir():
        raise UsageError(f"bundle directory not found: {root}")
    if args.config is None and (root / "config.json").is_file():
        cfg = load_config(root / "config.json")
        manifest.config_digest = cfg.digest()
    res = RunResult()
    inputs: list[Path] = []
    md = ["# Shutdown measurement report", ""]
    summary: dict = {}

    def sub(name: str, ns: argparse.Namespace, fn):
        m = RunManifest(name, [], manifest.config_digest)
        r = fn(ns, cfg, m)
        inputs.extend(Path(i["path"]) for i in m.inputs)
        for k, v in r.outputs.items():
            res.outputs[f"{name}/{k}"] = v
        return r

    # BGP coverage, one group per registry snapshot
    days = json.loads(_bundle_path(root, "bgp", "days.json").read_text())
    groups: dict[str, list[dict]] = {}
    for d in days:
        groups.setdefault(d["event"], []).append(d)
    md += ["## BGP coverage", "", "| date | event | phase | announced | covered | coverage % |",
           "|---|---|---|---|---|---|"]
    cov_summary = {}
    for event, ds in groups.items():
        ds.sort(key=lambda d: d["date"])
        ns = argparse.Namespace(bview=[str(root / "bgp" / d["bview"]) for d in ds],
                                delegated=str(root / "bgp" / ds[0]["delegated"]), country=None,
                                date=None, registry_date=None, event=event, phase=[d["phase"] for d in ds],
                                diff=len(ds) > 1, format=args.format)
        r = sub(f"rib-{event}", ns, cmd_rib)
        s = json.loads(r.outputs["coverage-summary.json"])
        diffs = json.loads(r.outputs["diff.json"])["diffs"] if "diff.json" in r.outputs else []
        cov_summary[event] = {
            "coverage_pct": {x["date"]: x["coverage_pct"] for x in s["snapshots"]},
            "within_event_variation_pp": s.get("within_event_variation_pp"),
            "withdrawal_pairs": [[x["from_date"], x["to_date"]] for x in diffs if x["withdrawal"]],
        }
        for d, x in zip(ds, s["snapshots"]):
            md.append(f"| {x['date']} | {event} | {d['phase']} | {x['announced']} | {x['covered']} | "
                      f"{x['coverage_pct']:.1f} |")
    summary["coverage"] = cov_summary
    md.append("")

    # active probing: one replayed sweep plus the consensus fixtures
    probe_ns = argparse.Namespace(targets=str(_bundle_path(root, "probing", "targets.txt")), ports=None,
                                  timeout_ms=None, retries=None, max_in_flight=None, rate=None,
                                  vantage_id="amsterdam", run_id=0,
                                  transport="replay:" + str(_bundle_path(root, "probing", "replay-amsterdam-run0.jsonl")),
                                  i_understand_scanning_ethics=False, format=args.format)
    sub("probe", probe_ns, cmd_probe)
    consensus_files = sorted((root / "probing").glob("consensus-*.csv"))
    if not consensus_files:
        raise UsageError("bundle has no probing/consensus-*.csv files")
    dists = []
    for p in consensus_files:
        inputs.append(p)
        with open(p, encoding="utf-8") as fh:
            recs = read_consensus_csv(fh)
        dists.append(distribution(recs, recs[0].vantage_id))
    ext, text = _table(_distribution_rows(dists), TABLE4_COLUMNS, args.format, manifest)
    res.outputs[f"verdicts/table4.{ext}"] = text
    spreads = _spreads(dists)
    summary["verdicts"] = {"distributions": _distribution_rows(dists), "cross_vantage_spread_pp": spreads}
    md += ["## Reachability verdicts", "", "| vantage | runs | " + " | ".join(v.code for v in VERDICT_ORDER) + " |",
           "|---|---|" + "---|" * len(VERDICT_ORDER)]
    for d in dists:
        md.append(f"| {d.vantage_id} | {d.runs} | "
                  + " | ".join(f"{d.counts[v]} ({d.pct(v):.1f}%)" for v in VERDICT_ORDER) + " |")
    if spreads:
        md += ["", f"NULL_ROUTE cross-vantage spread: {spreads['NULL_ROUTE']:.2f} pp"]
    md.append("")
    obs = root / "probing" / "observations.jsonl.gz"
    if obs.is_file():
        r = sub("classify", argparse.Namespace(observations=[str(obs)], per_vantage=True, format=args.format),
                cmd_classify)
        summary["classify"] = json.loads(r.outputs["classify-summary.json"])["cross_vantage_spread_pp"]

    # passive
    pns = argparse.Namespace(series=str(_bundle_path(root, "passive", "series-IR.csv")),
                             baseline=str(_bundle_path(root, "passive", "baseline.csv")),
                             control=str(_bundle_path(root, "passive", "control-TR.csv")),
                             reference_date=None, country=None, control_country=None, event=None, phase=None,
                             format=args.format)
    r = sub("passive", pns, cmd_passive)
    ev = json.loads(r.outputs["events.json"])
    summary["passive"] = {"events": ev["events"], "inflation": ev["inflation"]}
    md += ["## Passive host counts", ""]
    for e in ev["events"]:
        onset = e["onset"]["date"] if e["onset"] else "none"
        tot = e["onset_from_totals"]["date"] if e["onset_from_totals"] else "none"
        md.append(f"- {e['name']}: onset {onset} (totals alone: {tot}); reductions "
                  + ", ".join(f"{d} {v:.1f}%" for d, v in e["reduction_pct"].items()))
    for w in ev["inflation"] or []:
        md.append(f"- inflation window {w['start']} to {w['end']}, peak {w['peak_ratio']:.2f}x on {w['peak_date']}")
    md.append("")

    # AS composition
    ans = argparse.Namespace(counts=str(_bundle_path(root, "ascomp", "counts.csv")),
                             metadata=str(_bundle_path(root, "ascomp", "as_metadata.csv")),
                             rules=str(_bundle_path(root, "ascomp", "rules.json")),
                             overrides=str(_bundle_path(root, "ascomp", "overrides.json")),
                             dates=None, floor_date=None, recovery_date=None, baseline_date=None,
                             event_dates=None, format=args.format)
    r = sub("ascomp", ans, cmd_ascomp)
    fnd = json.loads(r.outputs["ascomp-findings.json"])
    ra = fnd["recovery_attribution"]
    summary["ascomp"] = {"exempt": {e["name"]: [f["asn"] for f in e["findings"] if f["exempt"]]
                                    for e in fnd["exemptions"]},
                         "recovery_attribution": ra}
    md += ["## AS composition", ""]
    for e in fnd["exemptions"]:
        names = [f"AS{f['asn']} ({100 * f['retention']:.1f}%)" for f in e["findings"] if f["exempt"]]
        md.append(f"- {e['name']} exempt: {', '.join(names) or 'none'}")
    if ra:
        for c in ra["categories"]:
            if c["category"] == "academic":
                md.append(f"- academic share of the {ra['floor_date']} to {ra['recovery_date']} change: "
                          f"{100 * c['share_of_net']:.1f}% of net, {100 * c['share_of_positive']:.1f}% of gains")
        anti = [f"AS{a['asn']}" for a in ra["ases"] if a["anti_correlated"]]
        md.append(f"- anti-correlated ASes: {', '.join(anti) or 'none'}")
    md.append("")

    seen = {}
    for p in inputs:
        seen[str(p)] = None
    manifest.inputs = [{"path": p, "sha256": sha256_file(p)} for p in seen]
    md += [f"Manifest: `{manifest.manifest_id}`", ""]
    res.outputs["report.md"] = "\n".join(md)
    res.outputs["report.json"] = _report(manifest, summary)
    res.messages.append(f"report written for bundle {root}")
    return res


# -- parser and main ---------------------------------------------------------------

COMMANDS = {
    "rib": cmd_rib,
    "probe": cmd_probe,
    "classify": cmd_classify,
    "passive": cmd_passive,
    "ascomp": cmd_ascomp,
    "report": cmd_report,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON file with policy defaults")
    p.add_argument("--out", default=d if suppress else ".", help="output directory (default: current)")
    p.add_argument("--format", choices=("csv", "json"), default=d if suppress else "csv",
                   help="format for tabular reports")
    p.add_argument("-v", "--verbose", action="store_true", default=d if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shutdownscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("rib", help="BGP coverage of allocated space from bview + delegated files")
    p.add_argument("--bview", action="append", required=True, help="MRT bview file (repeatable)")
    p.add_argument("--delegated", required=True, help="delegated-extended statistics file")
    p.add_argument("--country", help="ISO country code (default from config)")
    p.add_argument("--date", action="append", help="capture date per bview (default: MRT timestamp)")
    p.add_argument("--registry-date", help="registry snapshot date (default: file header)")
    p.add_argument("--event", help="event label for the coverage rows")
    p.add_argument("--phase", action="append", help="phase label per bview")
    p.add_argument("--diff", action="store_true", help="diff consecutive snapshots")
    _add_globals(p, suppress=True)

    p = subs.add_parser("probe", help="TCP reachability sweep from this vantage point")
    p.add_argument("--targets", required=True, help="file with one prefix per line")
    p.add_argument("--ports", help="comma-separated ports (default 80,443,179)")
    p.add_argument("--timeout-ms", type=int)
    p.add_argument("--retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--rate", type=float, help="probes per second")
    p.add_argument("--vantage-id")
    p.add_argument("--run-id", type=int, default=0)
    p.add_argument("--transport", default="real", help="'real' or 'replay:FILE'")
    p.add_argument("--i-understand-scanning-ethics", action="store_true",
                   help="required before any probe is sent over the real network")
    _add_globals(p, suppress=True)

    p = subs.add_parser("classify", help="verdicts, per-prefix consensus and per-vantage distributions")
    p.add_argument("--observations", action="append", required=True, help="observation JSONL (repeatable)")
    p.add_argument("--per-vantage", action="store_true", default=True,
                   help="vote per (prefix, vantage); this is the only supported mode")
    _add_globals(p, suppress=True)

    p = subs.add_parser("passive", help="onset, severity and inflation from host-count series")
    p.add_argument("--series", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--control")
    p.add_argument("--reference-date")
    p.add_argument("--country")
    p.add_argument("--control-country")
    p.add_argument("--event", action="append", help="NAME:START:END (overrides config events)")
    p.add_argument("--phase", action="append", help="EVENT:DATE:LABEL key date for Table-1 rows")
    _add_globals(p, suppress=True)

    p = subs.add_parser("ascomp", help="AS categories, composition, exemptions and recovery attribution")
    p.add_argument("--counts", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--overrides")
    p.add_argument("--dates", help="comma-separated composition dates")
    p.add_argument("--floor-date")
    p.add_argument("--recovery-date")
    p.add_argument("--baseline-date", help="exemption baseline (with --event-dates)")
    p.add_argument("--event-dates", help="comma-separated exemption event dates")
    _add_globals(p, suppress=True)

    p = subs.add_parser("report", help="run every analysis over a fixture bundle")
    p.add_argument("--bundle", required=True, help="bundle directory")
    _add_globals(p, suppress=True)
    return parser


def _portable(value):
    """File paths in options are reduced to their names so the manifest id survives relocation."""
    if isinstance(value, list):
        return [_portable(v) for v in value]
    if isinstance(value, str) and ("/" in value or "\\" in value):
        prefix, sep, rest = value.rpartition(":") if value.startswith("replay:") else ("", "", value)
        return f"{prefix}{sep}{Path(rest).name}"
    return value


def _write_outputs(out: Path, outputs: dict[str, str], manifest: RunManifest) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        manifest.outputs[name] = hashlib.sha256(text.encode()).hexdigest()
    (out / "manifest.json").write_text(_dumps(manifest.to_dict()), encoding="utf-8", newline="\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = time.time()
    try:
        try:
            cfg = load_config(args.config)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except (ValueError, TypeError) as exc:
            raise UsageError(f"bad config {args.config}: {exc}") from None
        options = {k: _portable(v) for k, v in sorted(vars(args).items())
                   if k not in ("out", "verbose", "command", "config")}
        manifest = RunManifest(args.command, [], cfg.digest(), options=options)
        result = COMMANDS[args.command](args, cfg, manifest)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, KeyError, ProbeSetupError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"{parser.prog} {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    manifest.started_at = round(started, 3)
    manifest.finished_at = round(time.time(), 3)
    _write_outputs(Path(args.out), result.outputs, manifest)
    for line in result.messages:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
