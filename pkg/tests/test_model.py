import math

import pytest
from hypothesis import given, strategies as st

from longhaul.model import (UNRESPONSIVE, CandidateLink, Edge, GeoPoint, Granularity, Hop,
                            InvariantError, LhNetGraph, LongHaulLink, Relationship, RouterPair,
                            TraceRef, Traceroute, ensure_valid, validate)

from conftest import make_link


def test_unresponsive_hop_without_samples_is_valid():
    assert validate(Hop(0, UNRESPONSIVE, ())) == []


def test_mpls_on_unresponsive_hop_is_flagged():
    assert "mpls on unresponsive hop" in validate(Hop(0, UNRESPONSIVE, (), 3))


def test_same_continent_link_is_flagged():
    link = make_link("N1", "N2", "DE", "FR")
    assert "not intercontinental" in validate(link)


def test_valid_intercontinental_link():
    assert validate(make_link("N1", "N2", "US", "DE")) == []


def test_responsive_hop_needs_finite_nonnegative_rtts():
    assert validate(Hop(1, "1.2.3.4", ())) == ["responsive hop without rtt samples"]
    assert validate(Hop(1, "1.2.3.4", (-1.0,))) != []
    assert validate(Hop(1, "1.2.3.4", (math.nan,))) != []


def test_trace_indices_strictly_increasing():
    hops = (Hop(0, "1.1.1.1", (1.0,)), Hop(0, "1.1.1.2", (2.0,)))
    assert "hop indices not strictly increasing" in validate(Traceroute("m", "c", "d", hops))


def test_candidate_context_checks():
    hops = tuple(Hop(i, f"1.1.1.{i + 1}", (float(i),)) for i in range(3))
    t = Traceroute("m", "c", "9.9.9.9", hops)
    c = CandidateLink("1.1.1.2", "1.1.1.3", 1, 1.0, t.ref)
    # no hop after the far side
    assert "neighbouring hops not responsive" in validate(c, trace=t)
    assert "rtt difference must be positive" in validate(
        CandidateLink("1.1.1.1", "1.1.1.2", 0, 0.0, t.ref))


def test_pair_min_diff_checked_against_candidates():
    ref = TraceRef("m", "c", "d")
    cands = [CandidateLink("a", "b", 0, 60.0, ref), CandidateLink("c", "d", 0, 80.0, ref)]
    good = RouterPair("N1", "N2", frozenset({("a", "b"), ("c", "d")}), 60.0, 2)
    assert validate(good, candidates=cands) == []
    bad = RouterPair("N1", "N2", frozenset(), 80.0, 2)
    assert "min_diff does not match supporting candidates" in validate(bad, candidates=cands)
    assert "both ends alias to one router" in validate(RouterPair("N1", "N1", frozenset(), 1.0))


def test_router_graph_rejects_self_loops():
    g = LhNetGraph(Granularity.ROUTER, ("a",), (Edge("a", "a", 1, 60.0),))
    assert "self-loop at router granularity" in validate(g)
    g_as = LhNetGraph(Granularity.AS, ("a",), (Edge("a", "a", 1, 60.0),))
    assert validate(g_as) == []


def test_validate_is_total_on_garbage():
    odd = [Hop("x", None, None, None), Traceroute(None, None, None, (None,)),
           RouterPair(None, 3, None, "?", "?"), object(), None, 5]
    for rec in odd:
        out = validate(rec)
        assert isinstance(out, list) and out


def test_ensure_valid_raises_with_all_violations():
    with pytest.raises(InvariantError) as exc:
        ensure_valid(Hop(0, UNRESPONSIVE, (1.0,), 2))
    assert len(exc.value.violations) == 2


addresses = st.from_regex(r"10\.[0-9]{1,2}\.[0-9]{1,2}\.[0-9]{1,2}", fullmatch=True)
rtts = st.lists(st.floats(0, 1000, allow_nan=False), min_size=1, max_size=3).map(tuple)
hops = st.builds(Hop, st.integers(0, 40), addresses, rtts, st.integers(0, 4))
geos = st.builds(GeoPoint, st.floats(-90, 90), st.floats(-180, 180),
                 st.sampled_from(["US", "DE", "JP"]), st.sampled_from(["NA", "EU", "AS"]))
pairs = st.builds(RouterPair, st.text("N0123456789", min_size=1, max_size=4),
                  st.text("N0123456789", min_size=1, max_size=4),
                  st.frozensets(st.tuples(addresses, addresses), max_size=3),
                  st.floats(0, 500, allow_nan=False), st.integers(1, 50), st.integers(0, 50))
links = st.builds(LongHaulLink, pairs, st.none() | geos, st.none() | geos,
                  st.none() | st.integers(1, 2 ** 32 - 1), st.none() | st.integers(1, 2 ** 32 - 1),
                  st.booleans(), st.sampled_from(list(Relationship)))


@given(hops)
def test_hop_round_trip(h):
    assert Hop.from_dict(h.to_dict()) == h


@given(st.lists(hops, max_size=6))
def test_trace_round_trip(hs):
    t = Traceroute("mon", "cyc", "192.0.2.1", tuple(hs))
    assert Traceroute.from_dict(t.to_dict()) == t


@given(st.builds(CandidateLink, addresses, addresses, st.integers(0, 30),
                 st.floats(0.001, 500), st.builds(TraceRef, st.text(), st.text(), addresses),
                 st.integers(0, 3)))
def test_candidate_round_trip(c):
    assert CandidateLink.from_dict(c.to_dict()) == c


@given(links)
def test_link_round_trip(link):
    assert LongHaulLink.from_dict(link.to_dict()) == link


@given(links)
def test_validate_never_raises_on_links(link):
    assert isinstance(validate(link, threshold_ms=57.0), list)


def test_graph_round_trip():
    g = LhNetGraph(Granularity.COUNTRY, ("DE", "US"),
                   (Edge("DE", "US", 2, 70.0, frozenset({"DE", "US"})),), 1)
    assert LhNetGraph.from_dict(g.to_dict()) == g
    assert g.degree("US") == 1
