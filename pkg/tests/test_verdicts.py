import io
import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shutdownscope.fixtures import observation_from_triple
from shutdownscope.harness import CANONICAL_TRIPLES
from shutdownscope.prober import Outcome, PortOutcome, ProbeObservation
from shutdownscope.verdicts import (ConsensusRecord, PortConfigError, Verdict, build_consensus, classify,
                                    classify_observation, consensus, cross_vantage_spread, distribution,
                                    read_consensus_csv, write_consensus_csv, write_table4)

S, R, I, T = Outcome.SYN_ACK, Outcome.RST, Outcome.ICMP_UNREACHABLE, Outcome.TIMEOUT
NR, RE, BW, FA, AM = (Verdict.NULL_ROUTE, Verdict.REACHABLE, Verdict.BGP_WITHDRAW, Verdict.FIREWALL_ACL,
                      Verdict.AMBIGUOUS)


def oracle(a, b, c):
    """Independent restatement: evaluate each rule as a predicate over the triple and take the first hit."""
    web, bgp = {a, b}, c
    rules = [
        (NR, {a, b, c} == {T}),
        (RE, S in web),
        (BW, I in {a, b, c}),
        (FA, web == {T} and bgp == R),
        (RE, R in web),
    ]
    return next((v for v, hit in rules if hit), AM)


@pytest.mark.parametrize("triple", list(itertools.product(list(Outcome), repeat=3)))
def test_all_64_triples(triple):
    assert classify(*triple) is oracle(*triple)


@pytest.mark.parametrize("triple,expected", [
    ((T, T, T), NR),
    ((S, I, T), RE),      # SYN-ACK beats ICMP
    ((R, I, T), BW),      # ICMP beats RST
    ((T, T, R), FA),
    ((R, T, R), RE),
    ((T, T, S), AM),
    ((T, T, I), BW),
])
def test_precedence_examples(triple, expected):
    assert classify(*triple) is expected


def test_canonical_triples_round_trip():
    for verdict, triple in CANONICAL_TRIPLES.items():
        assert classify(*triple) is verdict


def test_classify_accepts_port_outcomes():
    assert classify(PortOutcome(S, 1.0), PortOutcome(T), PortOutcome(T)) is RE


def test_consensus_rules():
    assert consensus([NR, NR, RE]) == (NR, pytest.approx(2 / 3))
    assert consensus([NR, RE]) == (AM, 0.5)
    assert consensus([NR, RE, BW]) == (AM, pytest.approx(1 / 3))
    assert consensus([FA]) == (FA, 1.0)
    with pytest.raises(ValueError):
        consensus([])


@given(st.lists(st.sampled_from(list(Verdict)), min_size=1, max_size=40), st.randoms())
def test_consensus_order_independent(runs, rnd):
    shuffled = list(runs)
    rnd.shuffle(shuffled)
    assert consensus(runs) == consensus(shuffled)
    v, support = consensus(runs)
    if v is not AM:
        assert runs.count(v) * 2 > len(runs)


def _obs(prefix, vantage, run, verdict):
    return observation_from_triple(prefix, vantage, run, 0.0, CANONICAL_TRIPLES[verdict])


def test_build_consensus_and_distribution():
    obs = []
    for run, (a, b, c) in enumerate([(NR, RE, FA), (NR, RE, BW), (RE, RE, FA)]):
        obs += [_obs("5.0.0.0/24", "x", run, a), _obs("5.0.1.0/24", "x", run, b), _obs("5.0.2.0/24", "x", run, c)]
        obs += [_obs("5.0.0.0/24", "y", run, NR)]
    recs = build_consensus(obs)
    by = {(r.vantage_id, str(r.prefix)): r for r in recs}
    assert by[("x", "5.0.0.0/24")].consensus is NR
    assert by[("x", "5.0.1.0/24")].support == 1.0
    assert by[("x", "5.0.2.0/24")].consensus is FA
    dx = distribution([r for r in recs if r.vantage_id == "x"], "x")
    dy = distribution([r for r in recs if r.vantage_id == "y"], "y")
    assert dx.counts[NR] == 1 and dx.total == 3 and dx.runs == 3
    assert cross_vantage_spread([dx, dy], NR) == pytest.approx(100 - 100 / 3)
    with pytest.raises(ValueError):
        distribution(recs, "x")
    with pytest.raises(ValueError):
        cross_vantage_spread([dx], NR)


def test_mixed_ports_rejected():
    a = _obs("5.0.0.0/24", "x", 0, NR)
    b = ProbeObservation(a.prefix, "x", 1, 0.0, {80: PortOutcome(T), 443: PortOutcome(T)})
    with pytest.raises(PortConfigError):
        build_consensus([a, b])
    with pytest.raises(PortConfigError):
        classify_observation(b)


def test_consensus_csv_round_trip():
    recs = [ConsensusRecord.from_runs("5.0.0.0/24", "x", [NR, NR, RE]),
            ConsensusRecord.from_runs("5.0.1.0/24", "x", [NR, RE])]
    buf = io.StringIO()
    write_consensus_csv(recs, buf)
    buf.seek(0)
    assert read_consensus_csv(buf) == recs


def test_consensus_csv_detects_tampering():
    buf = io.StringIO()
    write_consensus_csv([ConsensusRecord.from_runs("5.0.0.0/24", "x", [NR, NR, RE])], buf)
    text = buf.getvalue().replace("NULL_ROUTE", "REACHABLE")
    with pytest.raises(ValueError, match="disagrees"):
        read_consensus_csv(io.StringIO(text))


def test_table4_format():
    d = distribution([ConsensusRecord.from_runs("5.0.0.0/24", "x", [NR])], "x")
    buf = io.StringIO()
    write_table4([d], buf)
    header, row = buf.getvalue().splitlines()
    assert header.startswith("vantage,runs,NR_count,NR_pct")
    assert row.startswith("x,1,1,100.0,0,0.0")


def test_consensus_worked_examples():
    v, s = consensus([NR] * 30 + [RE] * 4)
    assert v is NR and round(s, 3) == 0.882
    assert consensus([NR] * 5 + [BW] * 5) == (AM, 0.5)
    assert consensus([RE]) == (RE, 1.0)


def test_spread_arithmetic():
    one = distribution([ConsensusRecord.from_runs("5.0.0.0/24", "a", [NR])], "a")
    two = distribution([ConsensusRecord.from_runs("5.0.0.0/24", "b", [NR])], "b")
    assert cross_vantage_spread([one, two], NR) == 0.0
