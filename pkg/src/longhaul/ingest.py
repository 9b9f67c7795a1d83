"""Parsers for traceroute corpora and the sidecar datasets.

Every parser reads one text stream sequentially.  Records that cannot be
used are skipped and counted in a :class:`ParseStats`; only an unreadable
stream or a broken alias map (one IP on two routers) is fatal.
"""
from __future__ import annotations

import csv
import ipaddress
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .model import UNRESPONSIVE, Hop, InvariantError, Traceroute, ensure_valid

log = logging.getLogger(__name__)

P2C = "p2c"
C2P = "c2p"
P2P = "p2p"


class AliasConflictError(ValueError):
    """The same address is listed under two different router IDs."""


@dataclass
class ParseStats:
    """Line accounting: ``lines == parsed + comments + sum(skipped.values())``."""

    lines: int = 0
    parsed: int = 0
    comments: int = 0
    skipped: Counter = field(default_factory=Counter)

    def skip(self, reason: str, lineno: int | None = None, detail: str = "") -> None:
        self.skipped[reason] += 1
        log.debug("line %s skipped (%s) %s", lineno, reason, detail)

    @property
    def skip_count(self) -> int:
        return sum(self.skipped.values())

    def to_dict(self) -> dict:
        return {"lines": self.lines, "parsed": self.parsed, "comments": self.comments,
                "skipped": dict(sorted(self.skipped.items()))}


@dataclass(frozen=True)
class Facility:
    fac_id: str
    lat: float
    lon: float
    country: str
    continent: str
    net_count: int


@dataclass
class SidecarBundle:
    alias_map: dict[str, str] = field(default_factory=dict)
    router_asn: dict[str, int] = field(default_factory=dict)
    router_geo: dict[str, tuple[float, float, str]] = field(default_factory=dict)
    as_rel: dict[tuple[int, int], str] = field(default_factory=dict)
    ixp_addrs: frozenset[str] = frozenset()
    country_continent: dict[str, str] = field(default_factory=dict)
    facility_locations: list[Facility] = field(default_factory=list)
    country_polygons: dict[str, list[list[tuple[float, float]]]] = field(default_factory=dict)


def _lines(stream: IO[str] | Iterable[str], stats: ParseStats) -> Iterator[tuple[int, str]]:
    """Yield ``(lineno, stripped)`` for content lines, counting comments/blanks."""
    for lineno, raw in enumerate(stream, 1):
        stats.lines += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            stats.comments += 1
            continue
        yield lineno, line


def _is_ipv4(s: str) -> bool:
    try:
        ipaddress.IPv4Address(s)
    except ValueError:
        return False
    return True


# --------------------------------------------------------------------------
# traceroutes


def _hop_from_json(obj: dict) -> Hop:
    addr = obj["addr"]
    if addr == UNRESPONSIVE:
        return Hop(int(obj["i"]), UNRESPONSIVE, (), int(obj.get("mpls", 0) or 0))
    if not _is_ipv4(addr):
        raise ValueError(f"not an IPv4 address: {addr!r}")
    rtts = tuple(float(x) for x in obj["rtt"])
    return Hop(int(obj["i"]), addr, rtts, int(obj.get("mpls", 0) or 0))


def parse_traceroutes(stream: IO[str] | Iterable[str],
                      stats: ParseStats | None = None) -> Iterator[Traceroute]:
    """Yield traceroutes from the normalized JSONL schema, in input order.

    Each line is ``{"monitor", "cycle", "dst", "hops": [{"i", "addr",
    "rtt", "mpls"}]}`` with ``"*"`` marking an unresponsive hop.
    """
    stats = stats if stats is not None else ParseStats()
    for lineno, line in _lines(stream, stats):
        try:
            obj = json.loads(line)
            trace = Traceroute(str(obj["monitor"]), str(obj["cycle"]), str(obj["dst"]),
                               tuple(_hop_from_json(h) for h in obj["hops"]))
            ensure_valid(trace)
        except json.JSONDecodeError as exc:
            stats.skip("bad_json", lineno, str(exc))
            continue
        except InvariantError as exc:
            stats.skip("invariant", lineno, str(exc))
            continue
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            stats.skip("bad_schema", lineno, repr(exc))
            continue
        stats.parsed += 1
        yield trace


# --------------------------------------------------------------------------
# ITDK-style sidecars

_NODE_RE = re.compile(r"^node\s+(N\d+):\s*(.*)$")
_AS_RE = re.compile(r"^node\.AS\s+(N\d+):?\s+(\d+)(?:\s+.*)?$")
_GEO_RE = re.compile(r"^node\.geo\s+(N\d+):\s*(.*)$")


def parse_alias_nodes(stream: IO[str] | Iterable[str],
                      stats: ParseStats | None = None) -> dict[str, str]:
    """``node N<id>: <ip> <ip> ...`` lines to an address -> router map."""
    stats = stats if stats is not None else ParseStats()
    alias: dict[str, str] = {}
    for lineno, line in _lines(stream, stats):
        m = _NODE_RE.match(line)
        if m is None:
            stats.skip("bad_format", lineno, line)
            continue
        node, addrs = m.group(1), m.group(2).split()
        for ip in addrs:
            prev = alias.get(ip)
            if prev is not None and prev != node:
                raise AliasConflictError(f"line {lineno}: {ip} listed under {prev} and {node}")
            alias[ip] = node
        stats.parsed += 1
    return alias


def parse_router_asn(stream: IO[str] | Iterable[str],
                     stats: ParseStats | None = None) -> dict[str, int]:
    """``node.AS N<id> <asn> [method]`` lines."""
    stats = stats if stats is not None else ParseStats()
    out: dict[str, int] = {}
    for lineno, line in _lines(stream, stats):
        m = _AS_RE.match(line)
        if m is None:
            stats.skip("bad_format", lineno, line)
            continue
        out[m.group(1)] = int(m.group(2))
        stats.parsed += 1
    return out


def _geo_fields(rest: str) -> tuple[str, float, float]:
    if "\t" in rest:
        # real ITDK: continent, country, region, city, lat, lon, ...
        cols = [c.strip() for c in rest.strip("\t").split("\t")]
        return cols[1], float(cols[4]), float(cols[5])
    cols = rest.split()
    return cols[1], float(cols[-2]), float(cols[-1])


def parse_router_geo(stream: IO[str] | Iterable[str],
                     stats: ParseStats | None = None) -> dict[str, tuple[float, float, str]]:
    """``node.geo N<id>: <continent> <country> ... <lat> <lon>`` lines.

    Tab-separated lines follow the ITDK column order (continent, country,
    region, city, lat, lon, ...); space-separated lines take the last two
    tokens as lat/lon.  Returns router -> (lat, lon, country).
    """
    stats = stats if stats is not None else ParseStats()
    out: dict[str, tuple[float, float, str]] = {}
    for lineno, line in _lines(stream, stats):
        m = _GEO_RE.match(line)
        if m is None:
            stats.skip("bad_format", lineno, line)
            continue
        try:
            country, lat, lon = _geo_fields(m.group(2))
        except (IndexError, ValueError):
            stats.skip("bad_format", lineno, line)
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            stats.skip("coord_range", lineno, line)
            continue
        out[m.group(1)] = (lat, lon, country.upper())
        stats.parsed += 1
    return out


def parse_as_rel(stream: IO[str] | Iterable[str],
                 stats: ParseStats | None = None) -> dict[tuple[int, int], str]:
    """``A|B|-1`` (A provides transit to B) and ``A|B|0`` (peers), both directions."""
    stats = stats if stats is not None else ParseStats()
    rel: dict[tuple[int, int], str] = {}
    for lineno, line in _lines(stream, stats):
        parts = line.split("|")
        try:
            a, b, code = int(parts[0]), int(parts[1]), parts[2].strip()
        except (IndexError, ValueError):
            stats.skip("bad_format", lineno, line)
            continue
        if code == "-1":
            rel[(a, b)], rel[(b, a)] = P2C, C2P
        elif code == "0":
            rel[(a, b)] = rel[(b, a)] = P2P
        else:
            stats.skip("unknown_code", lineno, line)
            continue
        stats.parsed += 1
    return rel


def parse_ixp_addrs(stream: IO[str] | Iterable[str],
                    stats: ParseStats | None = None) -> frozenset[str]:
    stats = stats if stats is not None else ParseStats()
    out = set()
    for lineno, line in _lines(stream, stats):
        ip = line.split()[0]
        if not _is_ipv4(ip):
            stats.skip("bad_address", lineno, line)
            continue
        out.add(ip)
        stats.parsed += 1
    return frozenset(out)


def _csv_rows(stream: IO[str] | Iterable[str], stats: ParseStats,
              required: Iterable[str]) -> Iterator[tuple[int, dict[str, str]]]:
    rows = csv.reader(stream)
    header = None
    for lineno, row in enumerate(rows, 1):
        stats.lines += 1
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            stats.comments += 1
            continue
        if header is None:
            header = [c.strip() for c in row]
            missing = set(required) - set(header)
            if missing:
                raise ValueError(f"CSV header lacks columns {sorted(missing)}")
            stats.comments += 1
            continue
        if len(row) != len(header):
            stats.skip("bad_format", lineno, ",".join(row))
            continue
        yield lineno, {k: v.strip() for k, v in zip(header, row)}


def parse_country_continent(stream: IO[str] | Iterable[str],
                            stats: ParseStats | None = None) -> dict[str, str]:
    """Headered CSV ``country,continent``."""
    from .model import CONTINENTS

    stats = stats if stats is not None else ParseStats()
    out = {}
    for lineno, row in _csv_rows(stream, stats, ("country", "continent")):
        cont = row["continent"].upper()
        if cont not in CONTINENTS or not row["country"]:
            stats.skip("bad_value", lineno, str(row))
            continue
        out[row["country"].upper()] = cont
        stats.parsed += 1
    return out


def parse_facilities(stream: IO[str] | Iterable[str],
                     stats: ParseStats | None = None) -> list[Facility]:
    """Headered CSV ``fac_id,lat,lon,country,continent,net_count``."""
    stats = stats if stats is not None else ParseStats()
    out = []
    cols = ("fac_id", "lat", "lon", "country", "continent", "net_count")
    for lineno, row in _csv_rows(stream, stats, cols):
        try:
            lat, lon = float(row["lat"]), float(row["lon"])
            nets = int(row["net_count"])
        except ValueError:
            stats.skip("non_numeric", lineno, str(row))
            continue
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            stats.skip("coord_range", lineno, str(row))
            continue
        if nets < 0:
            stats.skip("bad_value", lineno, str(row))
            continue
        out.append(Facility(row["fac_id"], lat, lon, row["country"].upper(),
                            row["continent"].upper(), nets))
        stats.parsed += 1
    return out


# --------------------------------------------------------------------------
# polygons

_COUNTRY_KEYS = ("ISO_A2", "iso_a2", "ISO3166-1-Alpha-2", "iso_3166_1_alpha_2", "country", "cc")


def _feature_country(props: dict) -> str | None:
    for k in _COUNTRY_KEYS:
        v = props.get(k)
        if isinstance(v, str) and len(v) == 2 and v.isalpha():
            return v.upper()
    return None


def _clean_ring(coords: list) -> list[tuple[float, float]] | None:
    ring = [(float(p[0]), float(p[1])) for p in coords]
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if len(set(ring)) < 3:
        return None
    return ring


def parse_country_polygons(stream: IO[str], stats: ParseStats | None = None
                           ) -> dict[str, list[list[tuple[float, float]]]]:
    """GeoJSON FeatureCollection to country -> rings of ``(lon, lat)``.

    Outer rings and holes are both kept: an enclave touches its host
    country along a hole.  Counts are per feature, not per line.
    """
    stats = stats if stats is not None else ParseStats()
    doc = json.load(stream)
    out: dict[str, list[list[tuple[float, float]]]] = {}
    for n, feat in enumerate(doc.get("features", []), 1):
        stats.lines += 1
        country = _feature_country(feat.get("properties") or {})
        if country is None:
            stats.skip("no_country", n)
            continue
        geom = feat.get("geometry") or {}
        if geom.get("type") == "Polygon":
            polys = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            stats.skip("bad_geometry", n)
            continue
        rings = []
        for poly in polys:
            for coords in poly:
                ring = _clean_ring(coords)
                if ring is None:
                    log.debug("feature %d: degenerate ring dropped", n)
                    continue
                rings.append(ring)
        if not rings:
            stats.skip("degenerate_ring", n)
            continue
        out.setdefault(country, []).extend(rings)
        stats.parsed += 1
    return out
