"""Domain types shared by every pipeline stage.

Values are frozen dataclasses. Construction never raises on a broken
invariant; call :func:`validate` (returns the violations) or
:func:`ensure_valid` (raises :class:`InvariantError`) where it matters.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, NamedTuple

UNRESPONSIVE = "*"

CONTINENTS = frozenset({"AF", "AN", "AS", "EU", "NA", "OC", "SA"})


class InvariantError(ValueError):
    """Raised by :func:`ensure_valid` when a value breaks its invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class Relationship(str, enum.Enum):
    INTRA_DOMAIN = "intra_domain"
    P2C = "p2c"
    P2P = "p2p"
    IXP = "ixp"
    UNKNOWN = "unknown"
    UNMAPPED = "unmapped"


class Granularity(str, enum.Enum):
    ROUTER = "router"
    AS = "as"
    COUNTRY = "country"


class TraceRef(NamedTuple):
    monitor: str
    cycle: str
    dst: str


class GeoPoint(NamedTuple):
    lat: float
    lon: float
    country: str
    continent: str | None = None


@dataclass(frozen=True)
class Hop:
    index: int
    address: str
    rtt_ms: tuple[float, ...] = ()
    mpls_labels: int = 0

    @property
    def responsive(self) -> bool:
        return self.address != UNRESPONSIVE

    @property
    def rtt(self) -> float | None:
        """Representative RTT: the minimum sample, ``None`` when unresponsive."""
        if not self.responsive or not self.rtt_ms:
            return None
        return min(self.rtt_ms)

    def to_dict(self) -> dict[str, Any]:
        return {"i": self.index, "addr": self.address, "rtt": list(self.rtt_ms),
                "mpls": self.mpls_labels}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Hop:
        return cls(int(d["i"]), str(d["addr"]), tuple(float(x) for x in d.get("rtt", ())),
                   int(d.get("mpls", 0)))


@dataclass(frozen=True)
class Traceroute:
    monitor_id: str
    cycle_id: str
    dst: str
    hops: tuple[Hop, ...]

    @property
    def ref(self) -> TraceRef:
        return TraceRef(self.monitor_id, self.cycle_id, self.dst)

    def rtt_series(self) -> list[float | None]:
        return [h.rtt for h in self.hops]

    def to_dict(self) -> dict[str, Any]:
        return {"monitor": self.monitor_id, "cycle": self.cycle_id, "dst": self.dst,
                "hops": [h.to_dict() for h in self.hops]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Traceroute:
        return cls(str(d["monitor"]), str(d["cycle"]), str(d["dst"]),
                   tuple(Hop.from_dict(h) for h in d["hops"]))


@dataclass(frozen=True)
class CandidateLink:
    near_ip: str
    far_ip: str
    near_index: int
    rtt_diff_ms: float
    trace_ref: TraceRef
    # label-stack entries quoted by the far-side hop; kept so MPLS tagging
    # works from the candidate cache without the original traces
    far_mpls: int = 0

    @property
    def far_index(self) -> int:
        return self.near_index + 1

    def to_dict(self) -> dict[str, Any]:
        return {"near_ip": self.near_ip, "far_ip": self.far_ip, "near_index": self.near_index,
                "rtt_diff_ms": self.rtt_diff_ms, "trace": list(self.trace_ref),
                "far_mpls": self.far_mpls}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CandidateLink:
        return cls(d["near_ip"], d["far_ip"], int(d["near_index"]), float(d["rtt_diff_ms"]),
                   TraceRef(*d["trace"]), int(d.get("far_mpls", 0)))


@dataclass(frozen=True)
class RouterPair:
    near_router: str
    far_router: str
    ip_pairs: frozenset[tuple[str, str]]
    min_diff_ms: float
    sample_count: int = 1
    mpls_samples: int = 0

    @property
    def key(self) -> tuple[str, str]:
        """Orientation-free identity of the pair."""
        a, b = self.near_router, self.far_router
        return (a, b) if a <= b else (b, a)

    @property
    def addresses(self) -> frozenset[str]:
        return frozenset(ip for pair in self.ip_pairs for ip in pair)

    def to_dict(self) -> dict[str, Any]:
        return {"near_router": self.near_router, "far_router": self.far_router,
                "ip_pairs": sorted(list(p) for p in self.ip_pairs),
                "min_diff_ms": self.min_diff_ms, "sample_count": self.sample_count,
                "mpls_samples": self.mpls_samples}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RouterPair:
        return cls(d["near_router"], d["far_router"],
                   frozenset((a, b) for a, b in d["ip_pairs"]), float(d["min_diff_ms"]),
                   int(d["sample_count"]), int(d.get("mpls_samples", 0)))


def _geo_dict(g: GeoPoint | None) -> list | None:
    return None if g is None else [g.lat, g.lon, g.country, g.continent]


def _geo_from(v: list | None) -> GeoPoint | None:
    return None if v is None else GeoPoint(float(v[0]), float(v[1]), v[2], v[3])


@dataclass(frozen=True)
class LongHaulLink:
    pair: RouterPair
    near_geo: GeoPoint | None
    far_geo: GeoPoint | None
    near_asn: int | None = None
    far_asn: int | None = None
    mpls_visible: bool = False
    relationship: Relationship = Relationship.UNMAPPED

    @property
    def near_router(self) -> str:
        return self.pair.near_router

    @property
    def far_router(self) -> str:
        return self.pair.far_router

    @property
    def min_diff_ms(self) -> float:
        return self.pair.min_diff_ms

    @property
    def key(self) -> tuple[str, str]:
        return self.pair.key

    def to_dict(self) -> dict[str, Any]:
        return {"pair": self.pair.to_dict(), "near_geo": _geo_dict(self.near_geo),
                "far_geo": _geo_dict(self.far_geo), "near_asn": self.near_asn,
                "far_asn": self.far_asn, "mpls_visible": self.mpls_visible,
                "relationship": self.relationship.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LongHaulLink:
        return cls(RouterPair.from_dict(d["pair"]), _geo_from(d["near_geo"]),
                   _geo_from(d["far_geo"]), d["near_asn"], d["far_asn"],
                   bool(d["mpls_visible"]), Relationship(d["relationship"]))


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    multiplicity: int
    mean_min_diff_ms: float
    countries: frozenset[str] = frozenset()

    @property
    def is_loop(self) -> bool:
        return self.u == self.v

    def to_dict(self) -> dict[str, Any]:
        return {"u": self.u, "v": self.v, "multiplicity": self.multiplicity,
                "mean_min_diff_ms": self.mean_min_diff_ms, "countries": sorted(self.countries)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Edge:
        return cls(d["u"], d["v"], int(d["multiplicity"]), float(d["mean_min_diff_ms"]),
                   frozenset(d["countries"]))


@dataclass(frozen=True)
class LhNetGraph:
    """Undirected LHL multigraph collapsed to one edge per vertex pair.

    Node IDs are strings at every granularity (ASNs are stringified).
    """

    granularity: Granularity
    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]
    excluded_links: int = 0

    @cached_property
    def adjacency(self) -> dict[str, frozenset[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.is_loop:
                continue
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
        return {v: frozenset(n) for v, n in adj.items()}

    def degree(self, node: str) -> int:
        return len(self.adjacency.get(node, ()))

    @property
    def simple_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if not e.is_loop)

    def to_dict(self) -> dict[str, Any]:
        return {"granularity": self.granularity.value, "vertices": list(self.vertices),
                "edges": [e.to_dict() for e in self.edges],
                "excluded_links": self.excluded_links}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LhNetGraph:
        return cls(Granularity(d["granularity"]), tuple(d["vertices"]),
                   tuple(Edge.from_dict(e) for e in d["edges"]), int(d.get("excluded_links", 0)))


# --------------------------------------------------------------------------
# invariant checks


def _finite_nonneg(x: Any) -> bool:
    try:
        return math.isfinite(x) and x >= 0
    except TypeError:
        return False


def _check_hop(h: Hop) -> Iterable[str]:
    if not isinstance(h.index, int) or h.index < 0:
        yield "hop index must be a non-negative integer"
    rtts = h.rtt_ms if isinstance(h.rtt_ms, (tuple, list)) else None
    if rtts is None:
        yield "rtt samples must be a sequence"
        rtts = ()
    if h.address == UNRESPONSIVE:
        if rtts:
            yield "rtt on unresponsive hop"
        if h.mpls_labels != 0:
            yield "mpls on unresponsive hop"
    else:
        if not rtts:
            yield "responsive hop without rtt samples"
        if not all(_finite_nonneg(x) for x in rtts):
            yield "rtt samples must be finite and non-negative"
        if not isinstance(h.mpls_labels, int) or h.mpls_labels < 0:
            yield "mpls label count must be a non-negative integer"


def _check_trace(t: Traceroute) -> Iterable[str]:
    last = -1
    for h in t.hops:
        for v in _check_hop(h):
            yield f"hop {getattr(h, 'index', '?')}: {v}"
        if isinstance(h.index, int):
            if h.index <= last:
                yield "hop indices not strictly increasing"
            last = h.index


def _check_candidate(c: CandidateLink, trace: Traceroute | None) -> Iterable[str]:
    if not (isinstance(c.rtt_diff_ms, (int, float)) and c.rtt_diff_ms > 0):
        yield "rtt difference must be positive"
    if trace is None:
        return
    by_index = {h.index: h for h in trace.hops}
    near, far = by_index.get(c.near_index), by_index.get(c.near_index + 1)
    if near is None or far is None or near.address != c.near_ip or far.address != c.far_ip:
        yield "candidate hops not consecutive in source trace"
    before, after = by_index.get(c.near_index - 1), by_index.get(c.near_index + 2)
    if before is None or not before.responsive or after is None or not after.responsive:
        yield "neighbouring hops not responsive"


def _check_pair(p: RouterPair, candidates: Iterable[CandidateLink] | None) -> Iterable[str]:
    if p.near_router == p.far_router:
        yield "both ends alias to one router"
    if not isinstance(p.sample_count, int) or p.sample_count < 1:
        yield "sample count must be at least 1"
    if candidates is not None:
        diffs = [c.rtt_diff_ms for c in candidates]
        if diffs and min(diffs) != p.min_diff_ms:
            yield "min_diff does not match supporting candidates"


def _check_link(link: LongHaulLink, threshold_ms: float | None,
                distances: Any | None) -> Iterable[str]:
    yield from _check_pair(link.pair, None)
    ng, fg = link.near_geo, link.far_geo
    if ng is None or fg is None:
        yield "missing geolocation"
    else:
        for g in (ng, fg):
            if g.continent not in CONTINENTS:
                yield f"unknown continent {g.continent!r}"
            if not (-90 <= g.lat <= 90 and -180 <= g.lon <= 180):
                yield "coordinates out of range"
        if ng.continent == fg.continent:
            yield "not intercontinental"
    if threshold_ms is not None and link.min_diff_ms < threshold_ms:
        yield "below threshold"
    if distances is not None and ng is not None and fg is not None:
        from .geo import sol_violates

        try:
            if sol_violates(link.min_diff_ms, ng.country, fg.country, distances):
                yield "violates speed of light"
        except KeyError:
            pass
    if not isinstance(link.relationship, Relationship):
        yield "unknown relationship tag"


def _check_graph(g: LhNetGraph) -> Iterable[str]:
    seen = set()
    vertices = set(g.vertices)
    for e in g.edges:
        key = (e.u, e.v) if e.u <= e.v else (e.v, e.u)
        if key in seen:
            yield f"duplicate edge {key}"
        seen.add(key)
        if e.u not in vertices or e.v not in vertices:
            yield f"edge {key} references an unknown vertex"
        if e.is_loop and g.granularity is Granularity.ROUTER:
            yield "self-loop at router granularity"
        if e.multiplicity < 1:
            yield "edge multiplicity must be positive"


def validate(record: Any, **context: Any) -> list[str]:
    """Every invariant ``record`` breaks, as human-readable tags.

    Optional context: ``trace`` for candidates, ``candidates`` for router
    pairs, ``threshold_ms`` and ``distances`` for long-haul links.
    Never raises.
    """
    checks = {
        Hop: lambda r: _check_hop(r),
        Traceroute: lambda r: _check_trace(r),
        CandidateLink: lambda r: _check_candidate(r, context.get("trace")),
        RouterPair: lambda r: _check_pair(r, context.get("candidates")),
        LongHaulLink: lambda r: _check_link(r, context.get("threshold_ms"),
                                            context.get("distances")),
        LhNetGraph: lambda r: _check_graph(r),
    }
    check = checks.get(type(record))
    if check is None:
        return [f"unsupported record type {type(record).__name__}"]
    try:
        return list(check(record))
    except Exception as exc:  # malformed field combinations are data, not failures
        return [f"malformed record: {exc.__class__.__name__}: {exc}"]


def ensure_valid(record: Any, **context: Any) -> Any:
    violations = validate(record, **context)
    if violations:
        raise InvariantError(violations)
    return record


__all__ = [
    "UNRESPONSIVE", "CONTINENTS", "InvariantError", "Relationship", "Granularity", "TraceRef",
    "GeoPoint", "Hop", "Traceroute", "CandidateLink", "RouterPair", "LongHaulLink", "Edge",
    "LhNetGraph", "validate", "ensure_valid",
]
