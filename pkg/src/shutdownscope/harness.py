"""Deterministic test machinery: scripted transports, an MRT writer, brute-force oracles, planted truth."""

from __future__ import annotations

import asyncio
import ipaddress
import json
import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

from .prober import DEFAULT_PORTS, Outcome, ProbeSetupError, derive_target
from .rib import RouteEntry
from .verdicts import Verdict

SCRIPT_VERSION = 1

T, S, R, I = Outcome.TIMEOUT, Outcome.SYN_ACK, Outcome.RST, Outcome.ICMP_UNREACHABLE

# Per-verdict outcome triple for ports (80, 443, 179).
CANONICAL_TRIPLES: dict[Verdict, tuple[Outcome, Outcome, Outcome]] = {
    Verdict.NULL_ROUTE: (T, T, T),
    Verdict.REACHABLE: (S, T, T),
    Verdict.BGP_WITHDRAW: (T, I, T),
    Verdict.FIREWALL_ACL: (T, T, R),
    Verdict.AMBIGUOUS: (T, T, S),
}

SCRIPT_RTT_MS = 42.0


# -- scripted transport ------------------------------------------------------

@dataclass
class TransportScript:
    """Outcome per (address, port, attempt); anything unlisted answers ``default``."""

    entries: dict[tuple[str, int, int], tuple[Outcome, float | None]] = field(default_factory=dict)
    default: Outcome = Outcome.TIMEOUT
    epoch: float = 1775520000.0  # 2026-04-07T00:00:00Z
    version: int = SCRIPT_VERSION

    def set(self, address: str, port: int, outcome: Outcome, attempt: int = 1, rtt_ms: float | None = None) -> None:
        outcome = Outcome(outcome)
        if rtt_ms is None and outcome in (Outcome.SYN_ACK, Outcome.RST):
            rtt_ms = SCRIPT_RTT_MS
        self.entries[(str(address), int(port), int(attempt))] = (outcome, rtt_ms)

    def lookup(self, address: str, port: int, attempt: int) -> tuple[Outcome, float | None]:
        return self.entries.get((address, port, attempt), (self.default, None))

    def dump(self, fh: TextIO) -> None:
        fh.write(json.dumps({"version": self.version, "default": self.default.value, "epoch": self.epoch},
                            sort_keys=True) + "\n")
        for (addr, port, attempt), (outcome, rtt) in sorted(
                self.entries.items(), key=lambda kv: (int(ipaddress.IPv4Address(kv[0][0])), kv[0][1], kv[0][2])):
            fh.write(json.dumps({"address": addr, "port": port, "attempt": attempt,
                                 "outcome": outcome.value, "rtt_ms": rtt}, sort_keys=True) + "\n")

    @classmethod
    def load(cls, fh: TextIO) -> "TransportScript":
        lines = [ln for ln in fh if ln.strip()]
        if not lines:
            raise ValueError("empty transport script")
        head = json.loads(lines[0])
        if head.get("version") != SCRIPT_VERSION:
            raise ValueError(f"unsupported script version {head.get('version')!r}")
        script = cls(default=Outcome(head.get("default", "TIMEOUT")), epoch=float(head.get("epoch", 0.0)))
        for ln in lines[1:]:
            d = json.loads(ln)
            script.entries[(d["address"], int(d["port"]), int(d.get("attempt", 1)))] = (
                Outcome(d["outcome"]), d.get("rtt_ms"))
        return script


class ScriptedTransport:
    """Replays a :class:`TransportScript` on a virtual clock.

    Sleeping advances the virtual clock instantly, so rate limiting is
    exercised without wall-clock delay. Every send is logged as
    ``(virtual_time, address, port, attempt)``.
    """

    def __init__(self, script: TransportScript, fail_open: bool = False,
                 raise_on: Iterable[tuple[str, int]] = ()):
        self.script = script
        self.fail_open = fail_open
        self.raise_on = set(raise_on)
        self.log: list[tuple[float, str, int, int]] = []
        self._t = 0.0

    async def open(self) -> None:
        if self.fail_open:
            raise ProbeSetupError("scripted setup failure")

    async def close(self) -> None:
        pass

    def clock(self) -> float:
        return self._t

    def now(self) -> float:
        return self.script.epoch + self._t

    async def sleep(self, seconds: float) -> None:
        self._t += seconds
        await asyncio.sleep(0)

    async def probe(self, address: str, port: int, timeout_ms: int, attempt: int):
        self.log.append((self._t, address, port, attempt))
        if (address, port) in self.raise_on:
            raise ConnectionResetError("scripted transport error")
        await asyncio.sleep(0)
        return self.script.lookup(address, port, attempt)


def max_sends_per_window(log: Sequence[tuple[float, ...]], window: float = 1.0) -> int:
    """Largest number of sends whose timestamps fall in any half-open window of ``window`` seconds."""
    times = sorted(t for t, *_ in log)
    best = 0
    j = 0
    for i, t in enumerate(times):
        while times[j] <= t - window:
            j += 1
        best = max(best, i - j + 1)
    return best


# -- MRT writer --------------------------------------------------------------

_MRT_HEADER = struct.Struct("!IHHI")


def _mrt_record(ts: int, mtype: int, subtype: int, body: bytes) -> bytes:
    return _MRT_HEADER.pack(ts, mtype, subtype, len(body)) + body


def _peer_index_table(peer_count: int, peer_as_base: int = 64600) -> bytes:
    out = bytearray(struct.pack("!IH", 0xC0000201, 0))
    out += struct.pack("!H", peer_count)
    for i in range(peer_count):
        out += struct.pack("!B", 0x02)  # IPv4 address, 4-byte AS
        out += struct.pack("!I", 0x0A000000 + i + 1)
        out += struct.pack("!I", 0xC6336400 + i + 1)  # 198.51.100.x
        out += struct.pack("!I", peer_as_base + i)
    return bytes(out)


def _as_path_attr(path: tuple[int, ...], origin: frozenset[int]) -> bytes:
    if not path:
        segments = []
    elif len(origin) > 1 or (origin and origin != frozenset(path[-1:])):
        k = len(origin)
        head, tail = path[:-k], path[-k:]
        if frozenset(tail) != origin or len(set(tail)) != k:
            raise ValueError(f"origin {sorted(origin)} is not the trailing AS_SET of path {path}")
        segments = [(2, head[i:i + 255]) for i in range(0, len(head), 255)] + [(1, tail)]
    else:
        segments = [(2, path[i:i + 255]) for i in range(0, len(path), 255)]
    value = b"".join(struct.pack("!BB", t, len(a)) + struct.pack(f"!{len(a)}I", *a) for t, a in segments)
    flags = 0x40 | (0x10 if len(value) > 255 else 0)
    if flags & 0x10:
        return struct.pack("!BBH", flags, 2, len(value)) + value
    return struct.pack("!BBB", flags, 2, len(value)) + value


def synth_rib(entries: Sequence[RouteEntry], peer_count: int | None = None, timestamp: int = 1767571200,
              extra_records: Sequence[tuple[int, int, bytes]] = ()) -> bytes:
    """Serialise entries as a TABLE_DUMP_V2 bview; consecutive same-prefix entries share one RIB record.

    ``extra_records`` are ``(type, subtype, body)`` triples appended verbatim,
    useful for exercising the parser's skip path.
    """
    for e in entries:
        if not isinstance(e.prefix, ipaddress.IPv4Network):
            raise ValueError(f"not an IPv4 network: {e.prefix!r}")
        if e.path and not e.origin:
            raise ValueError(f"{e.prefix}: empty origin with non-empty path")
    needed = max((e.peer_index for e in entries), default=-1) + 1
    if peer_count is None:
        peer_count = max(needed, 1)
    if peer_count < needed or peer_count > 0xFFFF:
        raise ValueError(f"peer_count {peer_count} cannot address peer index {needed - 1}")
    out = bytearray(_mrt_record(timestamp, 13, 1, _peer_index_table(peer_count)))
    origin_attr = struct.pack("!BBBB", 0x40, 1, 1, 0)
    seq = 0
    i = 0
    while i < len(entries):
        j = i
        while j < len(entries) and entries[j].prefix == entries[i].prefix:
            j += 1
        for start in range(i, j, 0xFFFF):
            group = entries[start:min(j, start + 0xFFFF)]
            net = group[0].prefix
            nbytes = (net.prefixlen + 7) // 8
            body = bytearray(struct.pack("!IB", seq, net.prefixlen))
            body += net.network_address.packed[:nbytes]
            body += struct.pack("!H", len(group))
            for e in group:
                attrs = origin_attr + _as_path_attr(e.path, e.origin)
                body += struct.pack("!HIH", e.peer_index, timestamp, len(attrs)) + attrs
            out += _mrt_record(timestamp, 13, 2, bytes(body))
            seq += 1
        i = j
    for mtype, subtype, body in extra_records:
        out += _mrt_record(timestamp, mtype, subtype, body)
    return bytes(out)


# -- coverage oracle and random universes -------------------------------------

def _interval(net) -> tuple[int, int]:
    net = ipaddress.IPv4Network(net)
    lo = int(net.network_address)
    return lo, lo + net.num_addresses - 1


def coverage_oracle(allocated: Iterable, announced: Iterable) -> set:
    """Covered allocated items by brute-force interval comparison over every pair.

    Items may be networks or objects with a ``cidr`` attribute; the returned
    set holds the original items.
    """
    ann = [_interval(a) for a in announced]
    covered = set()
    for item in allocated:
        net = getattr(item, "cidr", item)
        plo, phi = _interval(net)
        for alo, ahi in ann:
            equal = (alo, ahi) == (plo, phi)
            contains = alo <= plo and phi <= ahi
            inside = plo <= alo and ahi <= phi
            if equal or contains or inside:
                covered.add(item)
                break
    return covered


def random_cidr_in(rng: random.Random, outer: ipaddress.IPv4Network, min_len: int | None = None,
                   max_len: int = 32) -> ipaddress.IPv4Network:
    min_len = outer.prefixlen if min_len is None else min_len
    plen = rng.randint(min_len, max_len)
    base = int(outer.network_address)
    span = 1 << (32 - outer.prefixlen)
    size = 1 << (32 - plen)
    addr = base + rng.randrange(0, span, size)
    return ipaddress.IPv4Network((addr, plen))


def random_universe(seed: int, outer: str = "10.20.0.0/16", n_allocated: tuple[int, int] = (1, 40),
                    n_announced: tuple[int, int] = (0, 40)):
    """Seeded (allocated, announced) network lists drawn inside ``outer``."""
    rng = random.Random(seed)
    net = ipaddress.IPv4Network(outer)
    alloc = {random_cidr_in(rng, net, max_len=28) for _ in range(rng.randint(*n_allocated))}
    ann = {random_cidr_in(rng, net) for _ in range(rng.randint(*n_announced))}
    # a few announcements near allocated space so every relation shows up
    for a in list(alloc)[: rng.randint(0, len(alloc))]:
        choice = rng.random()
        if choice < 0.3:
            ann.add(a)
        elif choice < 0.6 and a.prefixlen < 32:
            ann.add(random_cidr_in(rng, a, min_len=a.prefixlen + 1))
        elif a.prefixlen > net.prefixlen:
            ann.add(a.supernet(new_prefix=rng.randint(net.prefixlen, a.prefixlen - 1)))
    return sorted(alloc), sorted(ann)


# -- planted ground truth ------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthPlan:
    planted: Mapping[ipaddress.IPv4Network, Verdict]
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise < 0.5:
            raise ValueError(f"noise rate must be in [0, 0.5), got {self.noise}")


def planted_run_verdicts(plan: GroundTruthPlan, runs: int) -> dict[ipaddress.IPv4Network, list[Verdict]]:
    """Per-prefix list of per-run verdicts: the planted one, except at ``floor(noise * runs)`` noised runs."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rng = random.Random(plan.seed)
    n_noise = int(plan.noise * runs)
    out = {}
    for prefix in sorted(plan.planted, key=lambda p: (int(p.network_address), p.prefixlen)):
        truth = Verdict(plan.planted[prefix])
        others = [v for v in Verdict if v is not truth]
        noisy = set(rng.sample(range(runs), n_noise))
        out[prefix] = [rng.choice(others) if r in noisy else truth for r in range(runs)]
    return out


def script_from_plan(plan: GroundTruthPlan, runs: int, ports: Sequence[int] = DEFAULT_PORTS) -> list[TransportScript]:
    """One transport script per run realising the planted verdicts through canonical outcome triples."""
    if tuple(ports) != DEFAULT_PORTS:
        raise ValueError("planted scripts use ports 80, 443, 179")
    per_prefix = planted_run_verdicts(plan, runs)
    scripts = [TransportScript(epoch=TransportScript.epoch + 3600.0 * r) for r in range(runs)]
    for prefix, verdicts in per_prefix.items():
        addr = str(derive_target(prefix).address)
        for r, v in enumerate(verdicts):
            for port, outcome in zip(ports, CANONICAL_TRIPLES[v]):
                if outcome is not Outcome.TIMEOUT:
                    scripts[r].set(addr, port, outcome)
    return scripts
