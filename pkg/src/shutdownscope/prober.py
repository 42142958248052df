"""Rate-limited TCP reachability sweeps from one vantage point.

The sweep engine talks to a transport object with this surface::

    async open() / async close()
    async probe(address: str, port: int, timeout_ms: int, attempt: int) -> (Outcome, rtt_ms | None)
    now() -> float           # wall-clock epoch seconds used for started_at
    clock() -> float         # monotonic seconds used by the rate limiter
    async sleep(seconds)

:class:`TcpTransport` does real connection attempts; the scripted replay
transport used for offline runs lives in :mod:`shutdownscope.harness`.
"""

from __future__ import annotations

import asyncio
import errno
import ipaddress
import json
import logging
import socket
import time
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, TextIO

log = logging.getLogger(__name__)

DEFAULT_PORTS = (80, 443, 179)


class Outcome(str, Enum):
    SYN_ACK = "SYN_ACK"
    RST = "RST"
    ICMP_UNREACHABLE = "ICMP_UNREACHABLE"
    TIMEOUT = "TIMEOUT"


class ProbeSetupError(RuntimeError):
    """The transport could not be initialised; no probe was sent."""


@dataclass(frozen=True)
class PortOutcome:
    kind: Outcome
    rtt_ms: float | None = None
    attempts: int = 1
    error: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Outcome(self.kind))
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.rtt_ms is not None and self.kind not in (Outcome.SYN_ACK, Outcome.RST):
            raise ValueError(f"{self.kind.value} outcome cannot carry an RTT")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "rtt_ms": self.rtt_ms, "attempts": self.attempts}
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PortOutcome":
        return cls(Outcome(d["kind"]), d.get("rtt_ms"), int(d.get("attempts", 1)), d.get("error"))


@dataclass(frozen=True)
class ProbeTarget:
    prefix: ipaddress.IPv4Network
    address: ipaddress.IPv4Address
    ports: tuple[int, ...] = DEFAULT_PORTS

    def __post_init__(self):
        if self.address not in self.prefix:
            raise ValueError(f"{self.address} is not inside {self.prefix}")


@dataclass(frozen=True)
class ProbeObservation:
    prefix: ipaddress.IPv4Network
    vantage_id: str
    run_id: int
    started_at: float
    outcomes: dict[int, PortOutcome]

    def to_json(self) -> str:
        return json.dumps(
            {
                "prefix": str(self.prefix),
                "vantage_id": self.vantage_id,
                "run_id": self.run_id,
                "started_at": self.started_at,
                "outcomes": {str(p): o.to_dict() for p, o in sorted(self.outcomes.items())},
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "ProbeObservation":
        d = json.loads(line)
        return cls(
            prefix=ipaddress.IPv4Network(d["prefix"]),
            vantage_id=str(d["vantage_id"]),
            run_id=int(d["run_id"]),
            started_at=float(d["started_at"]),
            outcomes={int(p): PortOutcome.from_dict(o) for p, o in d["outcomes"].items()},
        )


@dataclass
class SweepPolicy:
    timeout_ms: int = 3000
    retries: int = 1
    max_in_flight: int = 64
    rate: float = 100.0  # probes per second, all ports and attempts
    vantage_id: str = "local"
    run_id: int = 0
    ports: tuple[int, ...] = DEFAULT_PORTS

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.ports = tuple(self.ports)


def derive_target(prefix, ports: Sequence[int] = DEFAULT_PORTS) -> ProbeTarget:
    """Probe the sixth host address; tiny prefixes fall back to base + 1, a /32 to itself."""
    net = ipaddress.IPv4Network(prefix)
    base = int(net.network_address)
    if net.num_addresses >= 8:
        addr = base + 6
    elif net.num_addresses > 1:
        addr = base + 1
    else:
        addr = base
    return ProbeTarget(net, ipaddress.IPv4Address(addr), tuple(ports))


class RateLimiter:
    """Spaces acquisitions at least ``1/rate`` seconds apart.

    Safe under concurrent acquisition from many tasks of one event loop; the
    reservation is taken under a lock, so bursts cannot exceed one slot.
    """

    def __init__(self, rate: float, clock=time.monotonic, sleep=asyncio.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._next = None
        self._lock = asyncio.Lock()

    async def acquire(self) -> float:
        async with self._lock:
            now = self._clock()
            slot = now if self._next is None else max(now, self._next)
            self._next = slot + self.interval
            if slot > now:
                await self._sleep(slot - now)
            return slot


class TcpTransport:
    """Full TCP connection attempts through the host network stack.

    A refused connection is a RST; host/network unreachable errors come from
    ICMP, whatever the code. The kernel reports whichever signal arrived
    first, so a late ICMP after a RST never surfaces.
    """

    _ICMP_ERRNOS = {errno.EHOSTUNREACH, errno.ENETUNREACH, errno.EHOSTDOWN, errno.ENETDOWN}

    async def open(self) -> None:
        try:
            socket.socket(socket.AF_INET, socket.SOCK_STREAM).close()
        except OSError as exc:
            raise ProbeSetupError(f"cannot create TCP socket: {exc}") from exc

    async def close(self) -> None:
        pass

    def now(self) -> float:
        return time.time()

    def clock(self) -> float:
        return time.monotonic()

    async def sleep(self, seconds: float) -> None:
        await asyncio.sleep(seconds)

    async def probe(self, address: str, port: int, timeout_ms: int, attempt: int):
        t0 = time.perf_counter()
        try:
            _, writer = await asyncio.wait_for(
                asyncio.open_connection(address, port), timeout=timeout_ms / 1000.0
            )
        except asyncio.TimeoutError:
            return Outcome.TIMEOUT, None
        except ConnectionRefusedError:
            return Outcome.RST, (time.perf_counter() - t0) * 1000.0
        except OSError as exc:
            if exc.errno in self._ICMP_ERRNOS:
                return Outcome.ICMP_UNREACHABLE, None
            raise
        rtt = (time.perf_counter() - t0) * 1000.0
        writer.close()
        try:
            await writer.wait_closed()
        except OSError:
            pass
        return Outcome.SYN_ACK, rtt


async def _probe_port(transport, limiter: RateLimiter, sem: asyncio.Semaphore, address: str, port: int, policy: SweepPolicy, first_send: list) -> PortOutcome:
    outcome = Outcome.TIMEOUT
    rtt = None
    error = None
    attempts = 0
    for attempt in range(1, policy.retries + 2):
        attempts = attempt
        async with sem:
            await limiter.acquire()
            if first_send[0] is None:
                first_send[0] = transport.now()
            try:
                outcome, rtt = await transport.probe(address, port, policy.timeout_ms, attempt)
                outcome = Outcome(outcome)
                error = None
            except Exception as exc:  # noqa: BLE001 - any per-probe failure is a lost answer
                outcome, rtt, error = Outcome.TIMEOUT, None, f"{type(exc).__name__}: {exc}"
        if outcome is not Outcome.TIMEOUT:
            break
    if outcome not in (Outcome.SYN_ACK, Outcome.RST):
        rtt = None
    return PortOutcome(outcome, None if rtt is None else round(rtt, 3), attempts, error)


async def _probe_target(transport, limiter, sem, target: ProbeTarget, policy: SweepPolicy) -> ProbeObservation:
    first_send = [None]
    results = await asyncio.gather(
        *(_probe_port(transport, limiter, sem, str(target.address), p, policy, first_send) for p in policy.ports)
    )
    return ProbeObservation(
        prefix=target.prefix,
        vantage_id=policy.vantage_id,
        run_id=policy.run_id,
        started_at=round(first_send[0] if first_send[0] is not None else transport.now(), 3),
        outcomes=dict(zip(policy.ports, results)),
    )


async def sweep_async(targets: Sequence[ProbeTarget], transport, policy: SweepPolicy) -> list[ProbeObservation]:
    try:
        await transport.open()
    except ProbeSetupError:
        raise
    except Exception as exc:
        raise ProbeSetupError(str(exc)) from exc
    try:
        limiter = RateLimiter(policy.rate, clock=transport.clock, sleep=transport.sleep)
        sem = asyncio.Semaphore(policy.max_in_flight)
        return list(
            await asyncio.gather(*(_probe_target(transport, limiter, sem, t, policy) for t in targets))
        )
    finally:
        await transport.close()


def sweep(targets: Sequence[ProbeTarget], transport, policy: SweepPolicy) -> list[ProbeObservation]:
    """One observation per target, in target order; each port keeps its final attempt's outcome."""
    return asyncio.run(sweep_async(list(targets), transport, policy))


def read_targets(fh: TextIO, ports: Sequence[int] = DEFAULT_PORTS) -> list[ProbeTarget]:
    out = []
    for line in fh:
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(derive_target(line, ports))
    return out


def write_observations(observations: Iterable[ProbeObservation], fh: TextIO) -> None:
    for obs in observations:
        fh.write(obs.to_json())
        fh.write("\n")


def read_observations(fh: TextIO) -> list[ProbeObservation]:
    out = []
    for line_no, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            out.append(ProbeObservation.from_json(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {line_no}: malformed observation: {exc}") from exc
    return out
