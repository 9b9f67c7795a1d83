import io
import json

import pytest
from hypothesis import given, strategies as st

from longhaul.ingest import (AliasConflictError, ParseStats, parse_alias_nodes, parse_as_rel,
                             parse_country_continent, parse_country_polygons, parse_facilities,
                             parse_ixp_addrs, parse_router_asn, parse_router_geo,
                             parse_traceroutes)
from longhaul.model import UNRESPONSIVE


def _trace_line(n_hops=3, star_at=None):
    hops = []
    for i in range(n_hops):
        if i == star_at:
            hops.append({"i": i, "addr": "*", "rtt": [], "mpls": 0})
        else:
            hops.append({"i": i, "addr": f"10.0.0.{i + 1}", "rtt": [1.0 + i, 1.5 + i], "mpls": 0})
    return json.dumps({"monitor": "m1", "cycle": "c1", "dst": "192.0.2.9", "hops": hops})


def _check_accounting(stats):
    assert stats.lines == stats.parsed + stats.comments + stats.skip_count


def test_three_responsive_hops():
    (t,) = parse_traceroutes([_trace_line(3)])
    assert len(t.hops) == 3 and all(h.responsive for h in t.hops)
    assert t.hops[1].rtt == 2.0


def test_star_hop_is_unresponsive():
    (t,) = parse_traceroutes([_trace_line(3, star_at=1)])
    assert t.hops[1].address == UNRESPONSIVE and not t.hops[1].responsive


def test_malformed_lines_are_counted_and_skipped():
    lines = [_trace_line(4) for _ in range(8)]
    lines.insert(3, "{not json")
    lines.insert(7, json.dumps({"monitor": "m", "cycle": "c", "dst": "x",
                                "hops": [{"i": 0, "addr": "300.1.1.1", "rtt": [1]}]}))
    stats = ParseStats()
    out = list(parse_traceroutes(lines, stats))
    assert len(out) == 8 and stats.skip_count == 2
    assert stats.skipped == {"bad_json": 1, "bad_schema": 1}
    _check_accounting(stats)


def test_traceroute_invariant_violations_are_skipped():
    bad = json.dumps({"monitor": "m", "cycle": "c", "dst": "d",
                      "hops": [{"i": 0, "addr": "*", "rtt": [], "mpls": 2}]})
    stats = ParseStats()
    assert list(parse_traceroutes([bad, "", "# c"], stats)) == []
    assert stats.skipped == {"invariant": 1} and stats.comments == 2


def test_alias_nodes():
    assert parse_alias_nodes(["node N1:  1.1.1.1 2.2.2.2"]) == {"1.1.1.1": "N1", "2.2.2.2": "N1"}
    assert parse_alias_nodes(["# comment"]) == {}
    with pytest.raises(AliasConflictError):
        parse_alias_nodes(["node N1: 1.1.1.1", "node N2: 1.1.1.1"])


def test_router_asn_and_geo():
    assert parse_router_asn(["node.AS N7 3356"]) == {"N7": 3356}
    assert parse_router_asn(["node.AS N7 3356 refinement"]) == {"N7": 3356}
    stats = ParseStats()
    geo = parse_router_geo(["node.geo N1: EU DE 50.1 8.6",
                            "node.geo N2:\tNA\tUS\tVA\tAshburn\t39.04\t-77.49\t\t\t",
                            "node.geo N3: EU FR 95.0 2.0",
                            "node.geo N4: AS JP 35.6 139.7"], stats)
    assert geo == {"N1": (50.1, 8.6, "DE"), "N2": (39.04, -77.49, "US"),
                   "N4": (35.6, 139.7, "JP")}
    assert stats.skipped == {"coord_range": 1}
    _check_accounting(stats)


def test_as_rel_is_symmetric():
    stats = ParseStats()
    rel = parse_as_rel(["174|9999|-1", "1|2|0", "1|2|7", "# x"], stats)
    assert rel[(174, 9999)] == "p2c" and rel[(9999, 174)] == "c2p"
    assert rel[(1, 2)] == rel[(2, 1)] == "p2p"
    assert stats.skipped == {"unknown_code": 1}
    _check_accounting(stats)


def test_ixp_and_continents():
    assert parse_ixp_addrs(["198.32.0.1", "nope"]) == {"198.32.0.1"}
    cc = parse_country_continent(["country,continent", "us,na", "DE,EU", "XX,ZZ"])
    assert cc == {"US": "NA", "DE": "EU"}


def test_facilities():
    stats = ParseStats()
    rows = ["fac_id,lat,lon,country,continent,net_count", "1,50.1,8.6,DE,EU,30",
            "2,abc,8.6,DE,EU,3", "3,40.7,-74.0,US,NA,12", "4,1.3,103.8,SG,AS,0"]
    facs = parse_facilities(rows, stats)
    assert [f.fac_id for f in facs] == ["1", "3", "4"]
    assert all(f.net_count >= 0 for f in facs)
    assert stats.skipped == {"non_numeric": 1}
    _check_accounting(stats)


def _fc(*features):
    return io.StringIO(json.dumps({"type": "FeatureCollection", "features": list(features)}))


SQUARE = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]


def test_square_polygon():
    polys = parse_country_polygons(_fc({"properties": {"ISO_A2": "AA"},
                                        "geometry": {"type": "Polygon", "coordinates": [SQUARE]}}))
    assert list(polys) == ["AA"] and len(polys["AA"]) == 1 and len(polys["AA"][0]) == 4


def test_multipolygon_and_degenerate():
    shifted = [[x + 5, y] for x, y in SQUARE]
    stats = ParseStats()
    polys = parse_country_polygons(_fc(
        {"properties": {"iso_a2": "BB"},
         "geometry": {"type": "MultiPolygon", "coordinates": [[SQUARE], [shifted]]}},
        {"properties": {"ISO_A2": "CC"},
         "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 1], [0, 0]]]}},
        {"properties": {"name": "nowhere"},
         "geometry": {"type": "Polygon", "coordinates": [SQUARE]}}), stats)
    assert len(polys["BB"]) == 2
    assert "CC" not in polys
    assert stats.skipped["no_country"] == 1
    _check_accounting(stats)


@given(st.lists(st.sampled_from(["# c", "", "node N1: 1.1.1.1", "node N2: 2.2.2.2 3.3.3.3",
                                 "garbage line"]), max_size=30))
def test_parse_accounting_and_determinism(lines):
    s1, s2 = ParseStats(), ParseStats()
    a = parse_alias_nodes(lines, s1)
    b = parse_alias_nodes(io.StringIO("".join(f"{x}\n" for x in lines)), s2)
    assert a == b and s1.to_dict() == s2.to_dict()
    _check_accounting(s1)
