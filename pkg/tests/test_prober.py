import asyncio
import io
import ipaddress
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shutdownscope.fixtures import observation_from_triple, planted_verdicts, replay_fixture
from shutdownscope.harness import (CANONICAL_TRIPLES, ScriptedTransport, TransportScript,
                                   max_sends_per_window)
from shutdownscope.prober import (Outcome, PortOutcome, ProbeObservation, ProbeSetupError, ProbeTarget,
                                  SweepPolicy, TcpTransport, derive_target, read_observations, read_targets,
                                  sweep, write_observations)

N = ipaddress.IPv4Network


@pytest.mark.parametrize("prefix,addr", [
    ("5.0.0.0/24", "5.0.0.6"),
    ("5.0.0.8/29", "5.0.0.14"),
    ("5.0.0.4/30", "5.0.0.5"),
    ("5.0.0.2/31", "5.0.0.3"),
    ("5.0.0.9/32", "5.0.0.9"),
])
def test_derive_target(prefix, addr):
    assert str(derive_target(prefix).address) == addr


def test_read_targets_skips_comments():
    ts = read_targets(io.StringIO("# header\n5.0.0.0/24  # first\n\n5.0.1.0/24\n"))
    assert [str(t.prefix) for t in ts] == ["5.0.0.0/24", "5.0.1.0/24"]


def test_validation():
    with pytest.raises(ValueError):
        ProbeTarget(N("5.0.0.0/24"), ipaddress.IPv4Address("6.0.0.1"))
    with pytest.raises(ValueError):
        PortOutcome(Outcome.TIMEOUT, 3.0)
    with pytest.raises(ValueError):
        PortOutcome(Outcome.RST, None, 0)
    for bad in ({"rate": 0}, {"timeout_ms": 0}, {"retries": -1}, {"max_in_flight": 0}):
        with pytest.raises(ValueError):
            SweepPolicy(**bad)


def _targets(n):
    return [derive_target(N((0x05000000 + 256 * i, 24))) for i in range(n)]


@pytest.mark.parametrize("rate", [32.0, 64.0])
def test_rate_never_exceeded(rate):
    transport = ScriptedTransport(TransportScript())
    sweep(_targets(40), transport, SweepPolicy(rate=rate, retries=1, max_in_flight=16))
    assert len(transport.log) == 40 * 3 * 2
    assert max_sends_per_window(transport.log, 1.0) <= rate


def test_max_sends_per_window_oracle():
    log = [(0.0,), (0.5,), (0.99,), (1.0,), (1.5,)]
    assert max_sends_per_window(log) == 3


class CountingTransport(ScriptedTransport):
    def __init__(self, script):
        super().__init__(script)
        self.in_flight = 0
        self.peak = 0

    async def probe(self, address, port, timeout_ms, attempt):
        self.in_flight += 1
        self.peak = max(self.peak, self.in_flight)
        for _ in range(5):
            await asyncio.sleep(0)
        self.in_flight -= 1
        return await super().probe(address, port, timeout_ms, attempt)


def test_in_flight_cap():
    transport = CountingTransport(TransportScript())
    sweep(_targets(30), transport, SweepPolicy(rate=1e6, max_in_flight=4))
    assert 1 < transport.peak <= 4


def test_retry_takes_final_answer():
    t = derive_target("5.0.0.0/24")
    addr = str(t.address)
    script = TransportScript()
    script.set(addr, 443, Outcome.SYN_ACK, attempt=2)
    obs, = sweep([t], ScriptedTransport(script), SweepPolicy(retries=1))
    assert obs.outcomes[443] == PortOutcome(Outcome.SYN_ACK, 42.0, 2)
    assert obs.outcomes[80] == PortOutcome(Outcome.TIMEOUT, None, 2)
    obs, = sweep([t], ScriptedTransport(script), SweepPolicy(retries=0))
    assert obs.outcomes[443] == PortOutcome(Outcome.TIMEOUT, None, 1)


def test_transport_error_is_annotated_timeout():
    t = derive_target("5.0.0.0/24")
    tr = ScriptedTransport(TransportScript(), raise_on=[(str(t.address), 179)])
    obs, = sweep([t], tr, SweepPolicy(retries=2))
    out = obs.outcomes[179]
    assert out.kind is Outcome.TIMEOUT and out.attempts == 3
    assert out.error.startswith("ConnectionResetError")
    assert obs.outcomes[80].error is None


def test_setup_failure_sends_nothing():
    tr = ScriptedTransport(TransportScript(), fail_open=True)
    with pytest.raises(ProbeSetupError):
        sweep(_targets(3), tr, SweepPolicy())
    assert tr.log == []


def test_deterministic_replay():
    prefixes, script = replay_fixture()
    targets = [derive_target(p) for p in prefixes]
    runs = []
    for _ in range(2):
        buf = io.StringIO()
        write_observations(sweep(targets, ScriptedTransport(script), SweepPolicy(vantage_id="amsterdam")), buf)
        runs.append(buf.getvalue())
    assert runs[0] == runs[1]


def test_sweep_matches_independent_observation_builder():
    prefixes, script = replay_fixture()
    planted = planted_verdicts("amsterdam")
    observations = sweep([derive_target(p) for p in prefixes], ScriptedTransport(script),
                         SweepPolicy(vantage_id="amsterdam", retries=1))
    assert [o.prefix for o in observations] == prefixes
    for obs in observations:
        expected = observation_from_triple(obs.prefix, "amsterdam", 0, obs.started_at,
                                           CANONICAL_TRIPLES[planted[obs.prefix]])
        assert obs == expected
        assert obs.started_at >= script.epoch


def test_script_dump_load_round_trip():
    _, script = replay_fixture()
    buf = io.StringIO()
    script.dump(buf)
    buf.seek(0)
    again = TransportScript.load(buf)
    assert again.entries == script.entries and again.epoch == script.epoch
    with pytest.raises(ValueError):
        TransportScript.load(io.StringIO('{"version": 99}\n'))


outcome_st = st.builds(
    lambda k, rtt, a: PortOutcome(k, rtt if k in (Outcome.SYN_ACK, Outcome.RST) else None, a),
    st.sampled_from(list(Outcome)),
    st.one_of(st.none(), st.floats(0, 1e5, allow_nan=False)),
    st.integers(1, 5),
)


@settings(max_examples=100)
@given(st.integers(0, 2**24 - 1), st.text(min_size=1, max_size=12), st.integers(0, 99),
       st.floats(0, 2e9, allow_nan=False), st.dictionaries(st.integers(1, 65535), outcome_st, max_size=4))
def test_observation_json_round_trip(net, vantage, run, ts, outcomes):
    obs = ProbeObservation(N((net << 8, 24)), vantage, run, ts, outcomes)
    buf = io.StringIO()
    write_observations([obs, obs], buf)
    buf.seek(0)
    assert read_observations(buf) == [obs, obs]


def test_malformed_observation_line():
    good = observation_from_triple("5.0.0.0/24", "x", 0, 1.0, CANONICAL_TRIPLES[next(iter(CANONICAL_TRIPLES))])
    text = good.to_json() + "\n" + '{"prefix": "5.0.0.0/24"}\n'
    with pytest.raises(ValueError, match="line 2"):
        read_observations(io.StringIO(text))


def test_tcp_transport_loopback():
    host = "127.0.0.6"  # derive_target picks base + 6 of 127.0.0.0/29
    listener = socket.socket()
    listener.bind((host, 0))
    listener.listen(8)
    closed = socket.socket()
    closed.bind((host, 0))
    closed_port = closed.getsockname()[1]
    closed.close()
    try:
        open_port = listener.getsockname()[1]
        obs, = sweep([derive_target("127.0.0.0/29", (open_port, closed_port))], TcpTransport(),
                     SweepPolicy(ports=(open_port, closed_port), timeout_ms=2000, retries=0))
    finally:
        listener.close()
    assert obs.outcomes[open_port].kind is Outcome.SYN_ACK
    assert obs.outcomes[closed_port].kind is Outcome.RST
    assert obs.outcomes[open_port].rtt_ms is not None
