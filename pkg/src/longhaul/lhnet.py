"""The long-haul network at router, AS and country granularity, and its analyses."""
from __future__ import annotations

import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

from .geo import COMPASS_AXES, UndefinedBearingError, compass_axis, initial_bearing_deg
from .model import Edge, Granularity, LhNetGraph, LongHaulLink, Relationship


# --------------------------------------------------------------------------
# construction


def _endpoints(link: LongHaulLink, granularity: Granularity) -> tuple[str, str] | None:
    if granularity is Granularity.ROUTER:
        return link.near_router, link.far_router
    if granularity is Granularity.AS:
        if link.near_asn is None or link.far_asn is None:
            return None
        return str(link.near_asn), str(link.far_asn)
    if link.near_geo is None or link.far_geo is None:
        return None
    return link.near_geo.country, link.far_geo.country


def build_graph(links: Iterable[LongHaulLink], granularity: Granularity | str) -> LhNetGraph:
    """Collapse links onto node pairs at ``granularity``.

    Links whose ends lack the needed annotation are counted in
    ``excluded_links``.  Self-loops (e.g. intra-AS links) become loop edges
    that do not count toward degree.
    """
    granularity = Granularity(granularity)
    acc: dict[tuple[str, str], list] = {}
    vertices = set()
    excluded = 0
    for link in links:
        ends = _endpoints(link, granularity)
        if ends is None:
            excluded += 1
            continue
        u, v = ends
        key = (u, v) if u <= v else (v, u)
        vertices.update(key)
        slot = acc.setdefault(key, [0, 0.0, set()])
        slot[0] += 1
        slot[1] += link.min_diff_ms
        for g in (link.near_geo, link.far_geo):
            if g is not None:
                slot[2].add(g.country)
    edges = tuple(Edge(u, v, m, total / m, frozenset(cc))
                  for (u, v), (m, total, cc) in sorted(acc.items()))
    return LhNetGraph(granularity, tuple(sorted(vertices)), edges, excluded)


def from_edge_list(pairs: Iterable[tuple[str, str]], vertices: Iterable[str] = (),
                   granularity: Granularity = Granularity.ROUTER) -> LhNetGraph:
    """Plain graph from node pairs (testing and ad-hoc use)."""
    acc: Counter = Counter()
    nodes = set(vertices)
    for u, v in pairs:
        acc[(u, v) if u <= v else (v, u)] += 1
        nodes.update((u, v))
    edges = tuple(Edge(u, v, m, 0.0) for (u, v), m in sorted(acc.items()))
    return LhNetGraph(granularity, tuple(sorted(nodes)), edges)


# --------------------------------------------------------------------------
# degrees


def degree_distribution(graph: LhNetGraph) -> dict[int, int]:
    counts = Counter(graph.degree(v) for v in graph.vertices)
    return dict(sorted(counts.items()))


def ccdf(values: Iterable[int] | LhNetGraph) -> list[tuple[int, float]]:
    """``(x, P[X >= x])`` at every distinct observed value, ascending."""
    if isinstance(values, LhNetGraph):
        values = [values.degree(v) for v in values.vertices]
    counts = Counter(values)
    n = sum(counts.values())
    out, remaining = [], n
    for x in sorted(counts):
        out.append((x, remaining / n))
        remaining -= counts[x]
    return out


@dataclass(frozen=True)
class SuperRouter:
    router: str
    degree: int
    countries: tuple[str, ...]
    asn: int | None
    location: tuple[float, float, str] | None


def router_countries(links: Iterable[LongHaulLink]) -> dict[str, set[str]]:
    """Countries of the opposite end, over each router's LHLs."""
    out: dict[str, set[str]] = defaultdict(set)
    for link in links:
        if link.far_geo is not None:
            out[link.near_router].add(link.far_geo.country)
        if link.near_geo is not None:
            out[link.far_router].add(link.near_geo.country)
    return out


def super_routers(router_graph: LhNetGraph, links: Sequence[LongHaulLink],
                  min_countries: int = 5) -> list[SuperRouter]:
    if router_graph.granularity is not Granularity.ROUTER:
        raise ValueError("super routers need the router-level graph")
    countries = router_countries(links)
    info: dict[str, tuple] = {}
    for link in links:
        for r, asn, g in ((link.near_router, link.near_asn, link.near_geo),
                          (link.far_router, link.far_asn, link.far_geo)):
            if r not in info or info[r][1] is None:
                info[r] = (asn, None if g is None else (g.lat, g.lon, g.country))
    rows = [SuperRouter(r, router_graph.degree(r), tuple(sorted(cc)), *info.get(r, (None, None)))
            for r, cc in countries.items() if len(cc) >= min_countries]
    rows.sort(key=lambda s: (-len(s.countries), -s.degree, s.router))
    return rows


# --------------------------------------------------------------------------
# cores and components


@dataclass(frozen=True)
class CoreDecomposition:
    shell: dict[str, int]
    top_core: frozenset[str]

    @property
    def max_shell(self) -> int:
        return max(self.shell.values(), default=0)


def k_core(graph: LhNetGraph) -> CoreDecomposition:
    """Shell index of every vertex by bucketed peeling (multiplicity and loops ignored)."""
    adj = graph.adjacency
    degree = {v: len(adj[v]) for v in graph.vertices}
    max_deg = max(degree.values(), default=0)
    buckets: list[set[str]] = [set() for _ in range(max_deg + 1)]
    for v, d in degree.items():
        buckets[d].add(v)
    shell: dict[str, int] = {}
    k = d = 0
    for _ in range(len(degree)):
        # removing one vertex lowers neighbour degrees by at most one
        d = max(d - 1, 0)
        while not buckets[d]:
            d += 1
        k = max(k, d)
        v = buckets[d].pop()
        shell[v] = k
        for u in adj[v]:
            if u in shell:
                continue
            du = degree[u]
            if du > d:
                buckets[du].discard(u)
                degree[u] = du - 1
                buckets[du - 1].add(u)
    top = max(shell.values(), default=0)
    return CoreDecomposition(dict(sorted(shell.items())),
                             frozenset(v for v, s in shell.items() if s == top))


@dataclass(frozen=True)
class ComponentReport:
    components: int
    vertices: int
    edges: int
    max_vertices: int
    max_edges: int
    sizes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"components": self.components, "vertices": self.vertices, "edges": self.edges,
                "max_component_vertices": self.max_vertices,
                "max_component_edges": self.max_edges}


def connected_components(graph: LhNetGraph) -> tuple[ComponentReport, dict[str, int]]:
    """Undirected components; ids are assigned in sorted-vertex order.

    Edge counts use distinct non-loop vertex pairs.
    """
    adj = graph.adjacency
    member: dict[str, int] = {}
    n_comp = 0
    for root in graph.vertices:
        if root in member:
            continue
        cid = n_comp
        n_comp += 1
        member[root] = cid
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in adj[v]:
                if u not in member:
                    member[u] = cid
                    queue.append(u)
    sizes = Counter(member.values())
    edge_counts = Counter(member[e.u] for e in graph.simple_edges)
    best = min(range(n_comp), key=lambda c: (-sizes[c], -edge_counts[c], c), default=None)
    report = ComponentReport(
        n_comp, len(graph.vertices), len(graph.simple_edges),
        sizes[best] if best is not None else 0,
        edge_counts[best] if best is not None else 0,
        tuple(sorted(sizes.values(), reverse=True)))
    return report, member


# --------------------------------------------------------------------------
# power-law fitting


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class PowerlawFit:
    alpha: float
    xmin: int
    loglik_ratio_vs_lognormal: float
    p_value_proxy: float | None
    n_tail: int
    ks: float
    lognormal_mu: float
    lognormal_sigma: float

    def to_dict(self) -> dict:
        return dict(vars(self))


def _alpha_mle(logsum: float, n: int, xmin: int) -> float:
    def nll(a):
        return a * logsum + n * math.log(special.zeta(a, xmin))

    res = optimize.minimize_scalar(nll, bounds=(1.0 + 1e-6, 10.0), method="bounded",
                                   options={"xatol": 1e-7})
    return float(res.x)


def _ks(tail: np.ndarray, alpha: float, xmin: int) -> float:
    xs, counts = np.unique(tail, return_counts=True)
    emp = np.cumsum(counts) / len(tail)
    model = 1.0 - special.zeta(alpha, xs + 1.0) / special.zeta(alpha, xmin)
    return float(np.max(np.abs(emp - model)))


def _scan(data: np.ndarray, min_tail: int) -> tuple[float, int, float]:
    """Best ``(alpha, xmin, ks)`` over candidate cutoffs."""
    data = np.sort(data)
    logs = np.log(data)
    suffix = np.cumsum(logs[::-1])[::-1]
    best = None
    for xmin in np.unique(data):
        start = int(np.searchsorted(data, xmin, side="left"))
        tail = data[start:]
        if len(tail) < min_tail or tail[-1] == xmin:
            continue
        alpha = _alpha_mle(float(suffix[start]), len(tail), int(xmin))
        ks = _ks(tail, alpha, int(xmin))
        if best is None or ks < best[2]:
            best = (alpha, int(xmin), ks)
    if best is None:
        raise InsufficientDataError("no cutoff leaves a non-degenerate tail")
    return best


def _log_discrete_lognormal(x: np.ndarray, mu: float, sigma: float, xmin: int) -> np.ndarray:
    lo = (np.log(x - 0.5) - mu) / sigma
    hi = (np.log(x + 0.5) - mu) / sigma
    # mass on [x-0.5, x+0.5) from whichever tail keeps precision
    right = lo > 0
    a = np.where(right, stats.norm.logsf(lo), stats.norm.logcdf(hi))
    b = np.where(right, stats.norm.logsf(hi), stats.norm.logcdf(lo))
    mass = a + np.log1p(-np.exp(np.minimum(b - a, -1e-300)))
    norm = stats.norm.logsf((math.log(xmin - 0.5) - mu) / sigma)
    return mass - norm


def _fit_lognormal(tail: np.ndarray, xmin: int) -> tuple[float, float, float]:
    logs = np.log(tail)
    x0 = (float(logs.mean()), math.log(max(float(logs.std()), 0.1)))

    def nll(p):
        ll = _log_discrete_lognormal(tail, p[0], math.exp(p[1]), xmin)
        total = -float(ll.sum())
        return total if math.isfinite(total) else 1e300

    res = optimize.minimize(nll, x0, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 4000})
    return float(res.x[0]), math.exp(float(res.x[1])), -float(res.fun)


def _sample_powerlaw(rng: np.random.Generator, n: int, alpha: float, xmin: int) -> np.ndarray:
    # standard discrete approximation by rounding the continuous inverse CDF
    r = rng.random(n)
    return np.floor((xmin - 0.5) * (1.0 - r) ** (-1.0 / (alpha - 1.0)) + 0.5)


def fit_powerlaw(degrees: Iterable[int], bootstrap: int = 100, seed: int = 0,
                 min_tail: int = 10) -> PowerlawFit:
    """Discrete power-law fit with KS-selected cutoff, compared against a lognormal.

    ``loglik_ratio_vs_lognormal`` is positive when the power law explains
    the tail better.  ``p_value_proxy`` is the share of ``bootstrap``
    synthetic datasets (power-law tail, empirical body) whose refit KS
    distance is at least the observed one; ``None`` when ``bootstrap == 0``.
    """
    data = np.asarray([d for d in degrees if d >= 1], dtype=float)
    if len(data) < 10:
        raise InsufficientDataError("need at least 10 observations >= 1")
    if np.all(data == data[0]):
        raise InsufficientDataError("degenerate sample: all values identical")
    alpha, xmin, ks = _scan(data, min_tail)
    tail = data[data >= xmin]
    ll_pl = -alpha * float(np.log(tail).sum()) - len(tail) * math.log(special.zeta(alpha, xmin))
    mu, sigma, ll_ln = _fit_lognormal(tail, xmin)

    p = None
    if bootstrap > 0:
        rng = np.random.default_rng(seed)
        body = data[data < xmin]
        hits = 0
        for _ in range(bootstrap):
            n_tail = rng.binomial(len(data), len(tail) / len(data))
            synth = _sample_powerlaw(rng, n_tail, alpha, xmin)
            if len(body):
                synth = np.concatenate([synth, rng.choice(body, len(data) - n_tail)])
            try:
                _, _, ks_b = _scan(synth, min_tail)
            except InsufficientDataError:
                continue
            hits += ks_b >= ks
        p = hits / bootstrap
    return PowerlawFit(alpha, xmin, ll_pl - ll_ln, p, int(len(tail)), ks, mu, sigma)


# --------------------------------------------------------------------------
# longitudinal comparisons


@dataclass(frozen=True)
class DegreeVariation:
    delta: dict[str, int]
    mean: float
    cdf: list[tuple[int, float]]


def degree_variation(g1: LhNetGraph, g2: LhNetGraph) -> DegreeVariation:
    """Per-node degree change from ``g1`` to ``g2``; absent nodes have degree 0."""
    if g1.granularity is not g2.granularity:
        raise ValueError(f"granularity mismatch: {g1.granularity.value} vs {g2.granularity.value}")
    nodes = sorted(set(g1.vertices) | set(g2.vertices))
    delta = {v: g2.degree(v) - g1.degree(v) for v in nodes}
    counts = Counter(delta.values())
    cdf, seen = [], 0
    for x in sorted(counts):
        seen += counts[x]
        cdf.append((x, seen / len(nodes)))
    mean = sum(delta.values()) / len(nodes) if nodes else 0.0
    return DegreeVariation(delta, mean, cdf)


@dataclass(frozen=True)
class AsLatencyRow:
    asn: int
    mean_ms_t1: float
    mean_ms_t2: float
    links_t1: int
    links_t2: int

    @property
    def delta_links(self) -> int:
        return self.links_t2 - self.links_t1


def _per_as(links: Iterable[LongHaulLink]) -> dict[int, list[float]]:
    out: dict[int, list[float]] = defaultdict(list)
    for link in links:
        for asn in {link.near_asn, link.far_asn} - {None}:
            out[asn].append(link.min_diff_ms)
    return out


def as_latency_variation(links_t1: Iterable[LongHaulLink], links_t2: Iterable[LongHaulLink]
                         ) -> list[AsLatencyRow]:
    a, b = _per_as(links_t1), _per_as(links_t2)
    return [AsLatencyRow(asn, float(np.mean(a[asn])), float(np.mean(b[asn])),
                         len(a[asn]), len(b[asn]))
            for asn in sorted(a.keys() & b.keys())]


def topcore_membership(cores: Mapping[str, CoreDecomposition], min_snapshots: int
                       ) -> list[tuple[str, int, tuple[str, ...]]]:
    """Nodes in the top core of at least ``min_snapshots`` snapshots."""
    seen: dict[str, list[str]] = defaultdict(list)
    for snap, core in cores.items():
        for node in core.top_core:
            seen[node].append(snap)
    rows = [(node, len(snaps), tuple(snaps)) for node, snaps in seen.items()
            if len(snaps) >= min_snapshots]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


# --------------------------------------------------------------------------
# tabulations


@dataclass(frozen=True)
class Table:
    name: str
    header: tuple[str, ...]
    rows: list[tuple]


def _pair(a, b) -> tuple:
    return (a, b) if a <= b else (b, a)


def _cdf_rows(values: Iterable[float]) -> list[tuple[float, float]]:
    vals = sorted(values)
    n = len(vals)
    return [(v, (i + 1) / n) for i, v in enumerate(vals)]


def _mpls_rows(level: str, grouped: Mapping[tuple, list[bool]]) -> tuple[list[tuple], float]:
    """Per-pair adoption rows plus the link-weighted mean adoption."""
    stats_ = sorted(((sum(v) / len(v), len(v), k) for k, v in grouped.items()),
                    key=lambda s: (s[0], s[2]))
    total = sum(w for _, w, _ in stats_)
    rows, cum = [], 0
    for adoption, weight, key in stats_:
        cum += weight
        rows.append((level, key[0], key[1], sum(grouped[key]), weight, adoption, cum / total))
    mean = sum(a * w for a, w, _ in stats_) / total if total else 0.0
    return rows, mean


def tabulate(links: Sequence[LongHaulLink], top_n: int = 10) -> dict[str, Table]:
    """CSV-ready summary tables over finalized links."""
    geo_links = [l for l in links if l.near_geo is not None and l.far_geo is not None]
    tables: dict[str, Table] = {}

    matrix = Counter((l.near_geo.continent, l.far_geo.continent) for l in geo_links)
    n = sum(matrix.values())
    tables["continent_matrix"] = Table(
        "continent_matrix", ("near_continent", "far_continent", "links", "fraction"),
        [(a, b, c, c / n) for (a, b), c in sorted(matrix.items())])

    dest: dict[str, Counter] = defaultdict(Counter)
    for l in geo_links:
        dest[l.near_geo.continent][l.far_geo.country] += 1
    rows = []
    for region in sorted(dest):
        total = sum(dest[region].values())
        ranked = sorted(dest[region].items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        rows.extend((region, rank, cc, c, c / total) for rank, (cc, c) in enumerate(ranked, 1))
    tables["preferred_destinations"] = Table(
        "preferred_destinations", ("region", "rank", "country", "links", "fraction"), rows)

    axes: Counter = Counter()
    for l in geo_links:
        try:
            b = initial_bearing_deg((l.near_geo.lat, l.near_geo.lon), (l.far_geo.lat, l.far_geo.lon))
        except UndefinedBearingError:
            continue
        axes[compass_axis(b)] += 1
    n_axes = sum(axes.values())
    tables["compass"] = Table("compass", ("axis", "links", "fraction"),
                              [(a, axes[a], axes[a] / n_axes if n_axes else 0.0)
                               for a in COMPASS_AXES])

    rels = Counter(l.relationship for l in links)
    tables["relationships"] = Table(
        "relationships", ("relationship", "links", "fraction"),
        [(r.value, rels[r], rels[r] / len(links) if links else 0.0) for r in Relationship])

    rows = [("all", "all", v, p) for v, p in _cdf_rows(l.min_diff_ms for l in links)]
    per_pair: dict[tuple[str, str], list[float]] = defaultdict(list)
    for l in geo_links:
        per_pair[_pair(l.near_geo.continent, l.far_geo.continent)].append(l.min_diff_ms)
    for (a, b), vals in sorted(per_pair.items()):
        rows.extend((a, b, v, p) for v, p in _cdf_rows(vals))
    tables["latency_cdf"] = Table("latency_cdf", ("continent_a", "continent_b", "min_diff_ms",
                                                  "cdf"), rows)

    groups = {
        "country": defaultdict(list), "continent": defaultdict(list), "as": defaultdict(list)}
    for l in geo_links:
        groups["country"][_pair(l.near_geo.country, l.far_geo.country)].append(l.mpls_visible)
        groups["continent"][_pair(l.near_geo.continent, l.far_geo.continent)].append(
            l.mpls_visible)
    for l in links:
        if l.near_asn is not None and l.far_asn is not None:
            groups["as"][_pair(str(l.near_asn), str(l.far_asn))].append(l.mpls_visible)
    rows, means = [], []
    for level in ("country", "continent", "as"):
        r, mean = _mpls_rows(level, groups[level])
        rows.extend(r)
        means.append((level, len(groups[level]), mean))
    tables["mpls_cdf"] = Table("mpls_cdf", ("level", "a", "b", "mpls_links", "links", "adoption",
                                            "weighted_cdf"), rows)
    tables["mpls_summary"] = Table("mpls_summary", ("level", "pairs", "weighted_mean_adoption"),
                                   means)
    return tables
