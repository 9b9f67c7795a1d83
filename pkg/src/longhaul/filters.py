"""Candidate -> router pair -> long-haul link filtering.

Each filter is a pure predicate on one pair, so the stages commute; the
pipeline order only decides which counter a doubly-disqualified pair is
charged to.
"""
from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .geo import CountryDistanceTable, sol_violates
from .ingest import SidecarBundle
from .model import CandidateLink, GeoPoint, Hop, LongHaulLink, Relationship, RouterPair

DEFAULT_THRESHOLD_MS = 57.0

STAGES = ("threshold", "intercontinental", "sol")


def aggregate_router_pairs(candidates: Iterable[CandidateLink], alias_map: Mapping[str, str],
                           counters: Counter | None = None) -> list[RouterPair]:
    """Group candidates by their (unordered) pair of routers.

    Unaliased addresses stand in as their own router.  A pair keeps the
    orientation of the first candidate seen for it.
    """
    counters = counters if counters is not None else Counter()
    acc: dict[tuple[str, str], dict] = {}
    for c in candidates:
        near = alias_map.get(c.near_ip, c.near_ip)
        far = alias_map.get(c.far_ip, c.far_ip)
        if near == far:
            counters["same_router"] += 1
            continue
        key = (near, far) if near <= far else (far, near)
        slot = acc.get(key)
        if slot is None:
            acc[key] = {"near": near, "far": far, "ips": {(c.near_ip, c.far_ip)},
                        "min": c.rtt_diff_ms, "n": 1, "mpls": int(c.far_mpls > 0)}
            continue
        slot["ips"].add((c.near_ip, c.far_ip))
        slot["min"] = min(slot["min"], c.rtt_diff_ms)
        slot["n"] += 1
        slot["mpls"] += int(c.far_mpls > 0)
    return [RouterPair(s["near"], s["far"], frozenset(s["ips"]), s["min"], s["n"], s["mpls"])
            for s in acc.values()]


def passes_threshold(pair: RouterPair, threshold_ms: float) -> bool:
    return pair.min_diff_ms >= threshold_ms


def _check_threshold(threshold_ms: float) -> None:
    if not threshold_ms > 0:
        raise ValueError(f"threshold must be positive, got {threshold_ms}")


def apply_threshold(pairs: Iterable[RouterPair], threshold_ms: float = DEFAULT_THRESHOLD_MS,
                    counters: Counter | None = None) -> list[RouterPair]:
    _check_threshold(threshold_ms)
    counters = counters if counters is not None else Counter()
    out = []
    for p in pairs:
        if passes_threshold(p, threshold_ms):
            out.append(p)
        else:
            counters["below_threshold"] += 1
    return out


@dataclass
class Coverage:
    routers: int = 0
    geolocated: int = 0
    as_mapped: int = 0

    @property
    def geolocated_fraction(self) -> float:
        return self.geolocated / self.routers if self.routers else 0.0

    @property
    def as_mapped_fraction(self) -> float:
        return self.as_mapped / self.routers if self.routers else 0.0

    def to_dict(self) -> dict:
        return {"routers": self.routers, "geolocated": self.geolocated,
                "as_mapped": self.as_mapped, "geolocated_fraction": self.geolocated_fraction,
                "as_mapped_fraction": self.as_mapped_fraction}


def _geo_of(router: str, sidecars: SidecarBundle) -> GeoPoint | None:
    g = sidecars.router_geo.get(router)
    if g is None:
        return None
    lat, lon, cc = g
    return GeoPoint(lat, lon, cc, sidecars.country_continent.get(cc))


def augment(pairs: Iterable[RouterPair], sidecars: SidecarBundle,
            coverage: Coverage | None = None) -> list[LongHaulLink]:
    """Attach per-end geolocation, continent and ASN.

    The returned links are not yet filtered; ends without annotations carry
    ``None``.
    """
    pairs = list(pairs)
    out = []
    routers = set()
    for p in pairs:
        routers.update((p.near_router, p.far_router))
        out.append(LongHaulLink(p, _geo_of(p.near_router, sidecars),
                                _geo_of(p.far_router, sidecars),
                                sidecars.router_asn.get(p.near_router),
                                sidecars.router_asn.get(p.far_router)))
    if coverage is not None:
        coverage.routers = len(routers)
        coverage.geolocated = sum(r in sidecars.router_geo for r in routers)
        coverage.as_mapped = sum(r in sidecars.router_asn for r in routers)
    return out


def geolocated(link: LongHaulLink) -> bool:
    return (link.near_geo is not None and link.far_geo is not None
            and link.near_geo.continent is not None and link.far_geo.continent is not None)


def is_intercontinental(link: LongHaulLink) -> bool:
    return geolocated(link) and link.near_geo.continent != link.far_geo.continent


def filter_intercontinental(links: Iterable[LongHaulLink], counters: Counter | None = None
                            ) -> list[LongHaulLink]:
    counters = counters if counters is not None else Counter()
    out = []
    for link in links:
        if not geolocated(link):
            counters["ungeolocated"] += 1
        elif link.near_geo.continent == link.far_geo.continent:
            counters["intra_continental"] += 1
        else:
            out.append(link)
    return out


def sol_feasible(link: LongHaulLink, table: CountryDistanceTable) -> bool:
    """False only for a provable violation; unknown countries count as feasible."""
    if link.near_geo is None or link.far_geo is None:
        return True
    try:
        return not sol_violates(link.min_diff_ms, link.near_geo.country, link.far_geo.country,
                                table)
    except KeyError:
        return True


def filter_sol(links: Iterable[LongHaulLink], table: CountryDistanceTable,
               counters: Counter | None = None, diagnostics: Counter | None = None
               ) -> list[LongHaulLink]:
    counters = counters if counters is not None else Counter()
    diagnostics = diagnostics if diagnostics is not None else Counter()
    out = []
    for link in links:
        if link.near_geo is None or link.far_geo is None:
            diagnostics["sol_unchecked"] += 1
            out.append(link)
            continue
        try:
            bad = sol_violates(link.min_diff_ms, link.near_geo.country, link.far_geo.country,
                               table)
        except KeyError:
            diagnostics["sol_unchecked"] += 1
            out.append(link)
            continue
        if bad:
            counters["sol_violation"] += 1
        else:
            out.append(link)
    return out


def tag_mpls(link: LongHaulLink, far_hops: Iterable[Hop] | None = None) -> LongHaulLink:
    """Mark the link when any supporting far-side reply quoted a label stack.

    Without ``far_hops`` the per-sample labels folded into the router pair
    during aggregation are used.
    """
    if far_hops is None:
        visible = link.pair.mpls_samples > 0
    else:
        visible = any(h.mpls_labels > 0 for h in far_hops)
    return dataclasses.replace(link, mpls_visible=visible)


def classify_relationship(link: LongHaulLink, as_rel: Mapping[tuple[int, int], str],
                          ixp_addrs: frozenset[str] | set[str] = frozenset()) -> Relationship:
    a, b = link.near_asn, link.far_asn
    if a is not None and b is not None:
        if a == b:
            return Relationship.INTRA_DOMAIN
        rel = as_rel.get((a, b))
        if rel in ("p2c", "c2p"):
            return Relationship.P2C
        if rel == "p2p":
            return Relationship.P2P
    if ixp_addrs and not link.pair.addresses.isdisjoint(ixp_addrs):
        return Relationship.IXP
    if a is None or b is None:
        return Relationship.UNMAPPED
    return Relationship.UNKNOWN


# --------------------------------------------------------------------------
# stage driver


@dataclass
class FilterResult:
    links: list[LongHaulLink]
    stage_counts: dict[str, int]
    dropped: Counter = field(default_factory=Counter)
    diagnostics: Counter = field(default_factory=Counter)
    coverage: Coverage = field(default_factory=Coverage)

    def to_dict(self) -> dict:
        return {"stage_counts": self.stage_counts, "dropped": dict(sorted(self.dropped.items())),
                "diagnostics": dict(sorted(self.diagnostics.items())),
                "coverage": self.coverage.to_dict()}


def run_filters(candidates: Sequence[CandidateLink], sidecars: SidecarBundle,
                table: CountryDistanceTable, threshold_ms: float = DEFAULT_THRESHOLD_MS,
                stages: Sequence[str] = STAGES) -> FilterResult:
    """Aggregate, threshold, augment, filter and tag, in that order.

    ``stages`` selects which of the three filters apply; the others pass
    everything through.  Pair-level drops are charged to exactly one counter
    in ``dropped``, so ``router_pairs == survivors + sum(dropped)``.
    """
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown filter stages {sorted(unknown)}")
    _check_threshold(threshold_ms)
    diagnostics: Counter = Counter()
    dropped: Counter = Counter()
    pairs = aggregate_router_pairs(candidates, sidecars.alias_map, diagnostics)
    counts = {"candidates": len(candidates), "router_pairs": len(pairs)}
    if "threshold" in stages:
        pairs = apply_threshold(pairs, threshold_ms, dropped)
    counts["threshold"] = len(pairs)
    coverage = Coverage()
    links = augment(pairs, sidecars, coverage)
    if "intercontinental" in stages:
        links = filter_intercontinental(links, dropped)
    counts["intercontinental"] = len(links)
    if "sol" in stages:
        links = filter_sol(links, table, dropped, diagnostics)
    counts["sol"] = len(links)
    links = [dataclasses.replace(tag_mpls(link), relationship=classify_relationship(
        link, sidecars.as_rel, sidecars.ixp_addrs)) for link in links]
    return FilterResult(links, counts, dropped, diagnostics, coverage)
