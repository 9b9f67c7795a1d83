import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longhaul import lhnet
from longhaul.model import Granularity, Relationship

from conftest import make_link
from oracles import components_brute, shells_brute


def test_parallel_links_merge():
    g = lhnet.build_graph([make_link("a", "b", "US", "DE", 70), make_link("b", "a", "DE", "US", 90)],
                          Granularity.ROUTER)
    (e,) = g.edges
    assert e.multiplicity == 2 and e.mean_min_diff_ms == 80


def test_intra_as_self_loop_excluded_from_degree():
    g = lhnet.build_graph([make_link("a", "b", "US", "DE", nasn=7, fasn=7),
                           make_link("c", "d", "US", "DE", nasn=7, fasn=8)], "as")
    assert any(e.is_loop for e in g.edges)
    assert g.degree("7") == 1 and g.degree("8") == 1


def test_unmapped_ends_excluded_with_counter():
    g = lhnet.build_graph([make_link("a", "b", "US", "DE", fasn=None)], "as")
    assert g.excluded_links == 1 and g.vertices == ()


def test_three_link_fixture():
    links = [make_link("a", "b", "US", "DE", nasn=1, fasn=2),
             make_link("b", "c", "DE", "JP", nasn=2, fasn=3),
             make_link("d", "c", "BR", "JP", nasn=4, fasn=3)]
    g = lhnet.build_graph(links, Granularity.COUNTRY)
    assert g.vertices == ("BR", "DE", "JP", "US")
    assert {(e.u, e.v) for e in g.edges} == {("DE", "US"), ("DE", "JP"), ("BR", "JP")}
    assert lhnet.degree_distribution(g) == {1: 2, 2: 2}


def test_star_degrees_and_ccdf():
    g = lhnet.from_edge_list([("h", "a"), ("h", "b"), ("h", "c")])
    assert lhnet.degree_distribution(g) == {1: 3, 3: 1}
    assert lhnet.ccdf(g) == [(1, 1.0), (3, 0.25)]
    assert lhnet.ccdf(lhnet.from_edge_list([])) == []


def test_super_routers():
    hub = [make_link("H", f"r{cc}", "US", cc) for cc in ("DE", "FR", "GB", "NL", "SG")]
    mono = [make_link("M", f"m{i}", "US", "DE") for i in range(100)]
    links = hub + mono
    g = lhnet.build_graph(links, Granularity.ROUTER)
    rows = lhnet.super_routers(g, links)
    assert [r.router for r in rows] == ["H"]
    assert rows[0].countries == ("DE", "FR", "GB", "NL", "SG") and rows[0].degree == 5
    with pytest.raises(ValueError):
        lhnet.super_routers(lhnet.build_graph(links, "as"), links)


def test_core_examples():
    tri = lhnet.k_core(lhnet.from_edge_list([("a", "b"), ("b", "c"), ("c", "a")]))
    assert tri.shell == {"a": 2, "b": 2, "c": 2} and tri.top_core == {"a", "b", "c"}
    path = lhnet.k_core(lhnet.from_edge_list([("a", "b"), ("b", "c"), ("c", "d")]))
    assert set(path.shell.values()) == {1}
    iso = lhnet.k_core(lhnet.from_edge_list([], vertices=["z"]))
    assert iso.shell == {"z": 0} and iso.top_core == {"z"}


def test_component_examples():
    rep, member = lhnet.connected_components(lhnet.from_edge_list([("a", "b"), ("c", "d")]))
    assert rep.components == 2 and rep.max_vertices == 2 and rep.max_edges == 1
    assert member["a"] == member["b"] != member["c"]
    full = lhnet.from_edge_list([(u, v) for u in "abcd" for v in "abcd" if u < v])
    assert lhnet.connected_components(full)[0].components == 1


def _random_graph(rng, n):
    vs = [f"v{i}" for i in range(n)]
    p = rng.random() * 0.3
    edges = [(u, v) for i, u in enumerate(vs) for v in vs[i + 1:] if rng.random() < p]
    edges += [(u, u) for u in vs if rng.random() < 0.02]
    edges += [e for e in edges if rng.random() < 0.1]  # parallel duplicates
    return vs, edges


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
def test_core_and_components_match_brute_force(seed, n):
    rng = random.Random(seed)
    vs, edges = _random_graph(rng, n)
    g = lhnet.from_edge_list(edges, vs)
    core = lhnet.k_core(g)
    assert core.shell == shells_brute(vs, edges)
    assert all(core.shell[v] <= g.degree(v) for v in vs)
    assert core.top_core == {v for v in vs if core.shell[v] == core.max_shell}
    rep, member = lhnet.connected_components(g)
    groups = {}
    for v, c in member.items():
        groups.setdefault(c, set()).add(v)
    assert {frozenset(s) for s in groups.values()} == components_brute(vs, edges)
    assert sum(rep.sizes) == rep.vertices == len(vs)
    assert rep.max_vertices <= rep.vertices and rep.max_edges <= rep.edges
    assert sum(g.degree(v) for v in vs) == 2 * len(g.simple_edges)


def test_powerlaw_recovers_alpha():
    sample = np.random.default_rng(2024).zipf(2.5, 10_000)
    fit = lhnet.fit_powerlaw(sample, bootstrap=0)
    assert abs(fit.alpha - 2.5) <= 0.1
    assert fit.loglik_ratio_vs_lognormal > 0
    assert fit.xmin >= sample.min() and fit.alpha > 1


def test_geometric_tail_prefers_lognormal():
    sample = np.random.default_rng(5).geometric(0.05, 5_000)
    fit = lhnet.fit_powerlaw(sample, bootstrap=0)
    assert fit.loglik_ratio_vs_lognormal < 0


def test_powerlaw_errors_and_bootstrap():
    with pytest.raises(lhnet.InsufficientDataError):
        lhnet.fit_powerlaw([3] * 50)
    with pytest.raises(lhnet.InsufficientDataError):
        lhnet.fit_powerlaw([1, 2, 3])
    sample = np.random.default_rng(3).zipf(2.2, 2000)
    a = lhnet.fit_powerlaw(sample, bootstrap=20, seed=1)
    b = lhnet.fit_powerlaw(sample, bootstrap=20, seed=1)
    assert a == b and 0 <= a.p_value_proxy <= 1


def test_degree_variation():
    g = lhnet.from_edge_list([("a", "b"), ("b", "c")])
    same = lhnet.degree_variation(g, g)
    assert set(same.delta.values()) == {0} and same.mean == 0
    g2 = lhnet.from_edge_list([("a", "b"), ("b", "c"), ("n", "a"), ("n", "b"), ("n", "c"),
                               ("n", "x")])
    dv = lhnet.degree_variation(g, g2)
    assert dv.delta["n"] == 4
    # deltas a:+1 b:+1 c:+1 n:+4 x:+1
    assert dv.mean == pytest.approx(8 / 5)
    with pytest.raises(ValueError):
        lhnet.degree_variation(g, lhnet.from_edge_list([], granularity=Granularity.AS))


def test_as_latency_variation():
    t1 = [make_link("a", "b", "US", "DE", 60, nasn=10, fasn=20),
          make_link("c", "d", "US", "DE", 80, nasn=10, fasn=10),
          make_link("e", "f", "US", "DE", 99, nasn=30, fasn=31)]
    t2 = [make_link("a", "b", "US", "DE", 100, nasn=10, fasn=21)]
    rows = {r.asn: r for r in lhnet.as_latency_variation(t1, t2)}
    assert set(rows) == {10}
    r = rows[10]
    assert (r.mean_ms_t1, r.mean_ms_t2, r.delta_links) == (70, 100, -1)


def test_topcore_membership():
    tri = lhnet.k_core(lhnet.from_edge_list([("a", "b"), ("b", "c"), ("c", "a"), ("c", "d")]))
    pth = lhnet.k_core(lhnet.from_edge_list([("a", "d")]))
    rows = lhnet.topcore_membership({"s1": tri, "s2": tri, "s3": pth}, 2)
    assert rows == [("a", 3, ("s1", "s2", "s3")), ("b", 2, ("s1", "s2")),
                    ("c", 2, ("s1", "s2"))]


def test_tabulate_examples():
    links = [make_link(f"u{i}", f"e{i}", "US", "DE") for i in range(3)]
    t = lhnet.tabulate(links)
    assert t["continent_matrix"].rows == [("NA", "EU", 3, 1.0)]
    mixed = [make_link(f"u{i}", f"e{i}", "US", "DE", mpls=(i == 0)) for i in range(4)]
    rows = [r for r in lhnet.tabulate(mixed)["mpls_cdf"].rows if r[0] == "country"]
    assert rows == [("country", "DE", "US", 1, 4, 0.25, 1.0)]


link_strategy = st.builds(
    make_link, st.sampled_from("abcdef"), st.sampled_from("ghijkl"),
    st.sampled_from(["US", "CA", "BR"]), st.sampled_from(["DE", "JP", "AU", "ZA"]),
    st.floats(57, 200), st.sampled_from([1, 2, 3, None]), st.sampled_from([1, 4, 5, None]),
    st.booleans(), st.sampled_from(list(Relationship)))


@given(st.lists(link_strategy, min_size=1, max_size=30))
def test_tabulate_partitions_sum_to_one(links):
    t = lhnet.tabulate(links)
    for name, col in (("continent_matrix", 3), ("compass", 2), ("relationships", 2)):
        assert sum(r[col] for r in t[name].rows) == pytest.approx(1.0, abs=1e-9)
    for level in ("country", "continent", "as"):
        cdf = [r[6] for r in t["mpls_cdf"].rows if r[0] == level]
        if cdf:
            assert cdf[-1] == pytest.approx(1.0) and cdf == sorted(cdf)
