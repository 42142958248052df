import io
import ipaddress
import json
from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shutdownscope.registry import (AllocationRecord, country_asns, country_prefixes, decompose, dump_json,
                                    export_json, parse_delegated)

D = date(2026, 1, 5)

SAMPLE = """\
2.3|ripencc|20260105|7|19700101|20260105|+0100
ripencc|*|asn|*|3|summary
ripencc|*|ipv4|*|4|summary
ripencc|IR|asn|58224|1|20100101|allocated|abc
ripencc|IR|asn|64500|3|20100101|assigned|abc
ripencc|ir|ipv4|5.0.0.0|768|20100101|allocated|abc
ripencc|IR|ipv4|5.1.0.0|256|20100101|reserved|abc
ripencc|TR|ipv4|6.0.0.0|1024|20100101|allocated|abc
ripencc|IR|ipv6|2a00::|32|20100101|allocated|abc
ripencc|IR|ipv4|not.an.ip|256|20100101|allocated|abc
ripencc|IR|ipv4|5.2.0.0|0|20100101|allocated|abc
ripencc|IR|asn|12
ripencc||ipv4|5.3.0.0|256|20100101|available|
"""


@pytest.fixture
def data():
    return parse_delegated(io.StringIO(SAMPLE), D)


def test_header_and_rejects(data):
    assert data.header.startswith("2.3|ripencc")
    assert [r.line_no for r in data.rejects] == [10, 11, 12]
    assert all(r.snapshot_date == D for r in data.records)


def test_768_block_decomposes(data):
    nets = sorted(p.cidr for p in country_prefixes(data.records, "IR"))
    assert nets == [ipaddress.IPv4Network("5.0.0.0/23"), ipaddress.IPv4Network("5.0.2.0/24")]


def test_status_filter(data):
    with_reserved = country_prefixes(data.records, "IR", {"allocated", "assigned", "reserved"})
    assert ipaddress.IPv4Network("5.1.0.0/24") in {p.cidr for p in with_reserved}


def test_asn_ranges(data):
    assert country_asns(data.records, "IR") == {58224, 64500, 64501, 64502}
    assert country_asns(data.records, "TR") == set()


def test_export_json(data):
    doc = export_json(data, "ir")
    assert doc["country"] == "IR"
    assert doc["ipv4_record_count"] == 1 and doc["prefix_count"] == 2
    buf = io.StringIO()
    dump_json(data, "IR", buf)
    assert json.loads(buf.getvalue()) == doc


def test_record_validation():
    with pytest.raises(ValueError):
        AllocationRecord("r", "IR", "ipv4", 2**32 - 10, 256, "allocated", D)
    with pytest.raises(ValueError):
        AllocationRecord("r", "IR", "ipv6", 0, 1, "allocated", D)


@given(st.integers(0, 2**20), st.integers(1, 5000))
def test_decompose_is_exact_and_minimal(start, count):
    nets = decompose(start, count)
    # oracle: the set of addresses is exactly the interval
    covered = []
    for n in nets:
        lo = int(n.network_address)
        covered.extend(range(lo, lo + n.num_addresses))
    assert sorted(covered) == list(range(start, start + count))
    # minimality: no two adjacent blocks could be merged into one aligned block
    for a, b in zip(nets, nets[1:]):
        if a.prefixlen == b.prefixlen and a.prefixlen > 0:
            assert a.supernet() != b.supernet()
