import ipaddress
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shutdownscope.coverage import (UniverseMismatch, compute_coverage, diff_coverage, table3_row,
                                    within_event_variation)
from shutdownscope.harness import coverage_oracle, random_universe
from shutdownscope.prefixtrie import PrefixTrie

N = ipaddress.IPv4Network
D1, D2 = date(2019, 11, 17), date(2019, 11, 20)


def test_trie_queries():
    t = PrefixTrie([N("10.0.0.0/8"), N("10.1.0.0/16"), N("192.168.4.0/24")])
    assert len(t) == 3
    assert N("10.1.0.0/16") in t and N("10.2.0.0/16") not in t
    assert t.covering(N("10.1.2.0/24")) == [N("10.0.0.0/8"), N("10.1.0.0/16")]
    assert t.has_within(N("192.168.0.0/16")) and not t.has_within(N("172.16.0.0/12"))
    assert t.longest_match(ipaddress.IPv4Address("10.1.9.9")) == N("10.1.0.0/16")
    assert t.longest_match(ipaddress.IPv4Address("8.8.8.8")) is None


def test_trie_default_route_relates_to_all():
    t = PrefixTrie([N("0.0.0.0/0")])
    assert t.related(N("5.0.0.0/24"))


@pytest.mark.parametrize("announced,expected", [
    (["5.0.0.0/23"], True),      # exact
    (["5.0.0.0/16"], True),      # aggregate
    (["5.0.1.128/25"], True),    # more-specific
    (["5.0.2.0/24"], False),     # adjacent
    ([], False),
])
def test_relation_semantics(announced, expected):
    r = compute_coverage([N("5.0.0.0/23")], [N(a) for a in announced], D1)
    assert (r.covered_count == 1) is expected


def test_empty_universe_rejected():
    with pytest.raises(ValueError):
        compute_coverage([], [N("5.0.0.0/8")], D1)


def test_diff_and_threshold():
    alloc = [N(f"5.0.{i}.0/24") for i in range(20)]
    before = compute_coverage(alloc, alloc, D1)
    after = compute_coverage(alloc, alloc[1:], D2)  # -5 pp exactly
    d = diff_coverage(before, after)
    assert d.net_pp == pytest.approx(-5.0) and d.withdrawal
    assert d.net_withdrawn == 1 and d.to_dict()["lost"] == ["5.0.0.0/24"]
    after2 = compute_coverage(alloc, alloc[1:] + [N("5.0.0.128/25")], D2)
    assert not diff_coverage(before, after2).withdrawal


def test_diff_requires_same_universe():
    a = compute_coverage([N("5.0.0.0/24")], [], D1)
    b = compute_coverage([N("5.0.1.0/24")], [], D2)
    with pytest.raises(UniverseMismatch):
        diff_coverage(a, b)


def test_variation_and_row():
    alloc = [N(f"5.0.{i}.0/24") for i in range(4)]
    rs = [compute_coverage(alloc, alloc[:k], D1) for k in (1, 3)]
    assert within_event_variation(rs) == pytest.approx(50.0)
    assert table3_row(rs[1], "19", "during")["coverage_pct"] == "75.0"
    with pytest.raises(ValueError):
        within_event_variation([])


@settings(max_examples=200)
@given(st.integers(0, 10**9))
def test_trie_matches_bruteforce_oracle(seed):
    alloc, ann = random_universe(seed)
    r = compute_coverage(alloc, ann, D1)
    assert {p.cidr for p in r.covered_set} == coverage_oracle(alloc, ann)


@settings(max_examples=100)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_coverage_monotone_in_announcements(seed, extra_seed):
    alloc, ann = random_universe(seed)
    _, more = random_universe(extra_seed)
    small = compute_coverage(alloc, ann, D1)
    big = compute_coverage(alloc, set(ann) | set(more), D1)
    assert small.covered_set <= big.covered_set
