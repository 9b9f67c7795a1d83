"""Spherical geodesy and the latency/distance conversions behind the filters."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_KM = 6371.0088
SPEED_OF_LIGHT_KMS = 299792.458
PROPAGATION_SPEED_KMS = 2.0 / 3.0 * SPEED_OF_LIGHT_KMS

DEFAULT_DENSIFY_KM = 10.0

COMPASS_AXES = ("N-S", "NNE-SSW", "ENE-WSW", "E-W", "ESE-WNW", "SSE-NNW")

Ring = Sequence[tuple[float, float]]  # (lon, lat) vertices, closure point dropped


class UndefinedBearingError(ValueError):
    pass


def haversine_km(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Great-circle distance between two ``(lat, lon)`` points in degrees."""
    lat1, lon1 = map(math.radians, p1)
    lat2, lon2 = map(math.radians, p2)
    a = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def rtt_for_distance_ms(km: float) -> float:
    """Round-trip propagation time over ``km`` of fibre at 2/3 c."""
    return 2.0 * km / PROPAGATION_SPEED_KMS * 1000.0


def max_distance_for_rtt_km(ms: float) -> float:
    return ms / 1000.0 * PROPAGATION_SPEED_KMS / 2.0


def initial_bearing_deg(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Forward azimuth from ``p1`` to ``p2``, clockwise from north, in [0, 360)."""
    if p1 == p2:
        raise UndefinedBearingError("bearing between identical points is undefined")
    lat1, lon1 = map(math.radians, p1)
    lat2, lon2 = map(math.radians, p2)
    dlon = lon2 - lon1
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    if x == 0.0 and y == 0.0:
        raise UndefinedBearingError("bearing undefined (coincident or antipodal points)")
    return math.degrees(math.atan2(y, x)) % 360.0


def compass_axis(bearing: float) -> str:
    """Fold a bearing onto one of the six axes of a 12-wind rose.

    Sectors are 30 degrees wide, centred on 0, 30, ..., 150 after folding
    mod 180; a bearing sitting exactly on a boundary goes to the upper sector.
    """
    folded = bearing % 180.0
    return COMPASS_AXES[int(((folded + 15.0) % 180.0) // 30.0)]


# --------------------------------------------------------------------------
# country distances


def _unit_vectors(lonlat: np.ndarray) -> np.ndarray:
    lon = np.radians(lonlat[:, 0])
    lat = np.radians(lonlat[:, 1])
    return np.column_stack((np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)))


def _slerp_edge(a: np.ndarray, b: np.ndarray, densify_km: float) -> np.ndarray:
    """Points on the a->b great circle, excluding b, at most ``densify_km`` apart.

    The subdivision count is a power of two so finer steps always yield a
    superset of the coarser samples.
    """
    omega = math.acos(max(-1.0, min(1.0, float(np.dot(a, b)))))
    length = omega * EARTH_RADIUS_KM
    s = math.sin(omega)
    if length <= densify_km or s < 1e-12:
        return a[None, :]
    n = 1 << math.ceil(math.log2(length / densify_km))
    t = np.arange(n) / n
    return (np.sin((1 - t) * omega)[:, None] * a + np.sin(t * omega)[:, None] * b) / s


def boundary_points(rings: Iterable[Ring], densify_km: float = DEFAULT_DENSIFY_KM) -> np.ndarray:
    """Unit vectors along every ring edge, densified to ``densify_km`` spacing."""
    if densify_km <= 0:
        raise ValueError("densify_km must be positive")
    chunks = []
    for ring in rings:
        verts = _unit_vectors(np.asarray(ring, dtype=float))
        for i in range(len(verts)):
            chunks.append(_slerp_edge(verts[i], verts[(i + 1) % len(verts)], densify_km))
    if not chunks:
        raise ValueError("country has no boundary points")
    return np.vstack(chunks)


def _chord_to_km(chord: float) -> float:
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, chord / 2.0))


def _min_distance(tree_a: cKDTree, pts_b: np.ndarray) -> float:
    # chord length is monotone in arc length, so the nearest neighbour in
    # 3-space is the nearest on the sphere
    d, _ = tree_a.query(pts_b, k=1)
    return _chord_to_km(float(d.min()))


def min_country_distance_km(poly_a: Iterable[Ring], poly_b: Iterable[Ring],
                            densify_km: float = DEFAULT_DENSIFY_KM) -> float:
    """Smallest great-circle distance between two countries' boundary samples."""
    pts_a = boundary_points(poly_a, densify_km)
    pts_b = boundary_points(poly_b, densify_km)
    return _min_distance(cKDTree(pts_a), pts_b)


@dataclass(frozen=True)
class CountryDistanceTable:
    """Symmetric country -> country minimum distance (km).  Diagonal is 0."""

    km: Mapping[tuple[str, str], float]
    countries: frozenset[str]

    def __post_init__(self):
        # store one canonical orientation per pair whatever the caller passed
        km = {((a, b) if a < b else (b, a)): float(d) for (a, b), d in self.km.items() if a != b}
        object.__setattr__(self, "km", km)
        object.__setattr__(self, "countries",
                           frozenset(self.countries) | {c for pair in km for c in pair})

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        if a == b:
            if a not in self.countries:
                raise KeyError(a)
            return 0.0
        return self.km[(a, b) if a < b else (b, a)]

    def __contains__(self, pair: tuple[str, str]) -> bool:
        try:
            self[pair]
        except KeyError:
            return False
        return True

    def rows(self) -> list[tuple[str, str, float]]:
        return [(a, b, d) for (a, b), d in sorted(self.km.items())]

    @classmethod
    def from_polygons(cls, polygons: Mapping[str, Iterable[Ring]],
                      densify_km: float = DEFAULT_DENSIFY_KM) -> CountryDistanceTable:
        names = sorted(polygons)
        points = {c: boundary_points(polygons[c], densify_km) for c in names}
        trees = {c: cKDTree(points[c]) for c in names}
        km = {}
        for a, b in combinations(names, 2):
            # query the smaller set against the larger tree
            if len(points[a]) < len(points[b]):
                km[(a, b)] = _min_distance(trees[b], points[a])
            else:
                km[(a, b)] = _min_distance(trees[a], points[b])
        return cls(km, frozenset(names))

    def write_csv(self, path: Path, digest: str = "", densify_km: float | None = None) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# digest={digest} densify_km={densify_km!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["country_a", "country_b", "km"])
            for country in sorted(self.countries):
                w.writerow([country, country, repr(0.0)])
            for a, b, d in self.rows():
                w.writerow([a, b, repr(d)])

    @classmethod
    def read_csv(cls, path: Path) -> tuple[CountryDistanceTable, str, str]:
        """Returns ``(table, digest, densify)`` as recorded in the cache header."""
        with open(path, newline="") as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(kv.split("=", 1) for kv in header if "=" in kv)
            km, countries = {}, set()
            for row in csv.DictReader(fh):
                a, b, d = row["country_a"], row["country_b"], float(row["km"])
                countries.update((a, b))
                if a != b:
                    km[(a, b) if a < b else (b, a)] = d
        return cls(km, frozenset(countries)), meta.get("digest", ""), meta.get("densify_km", "")


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_distance_table(polygons_path: Path, cache_path: Path | None,
                        densify_km: float = DEFAULT_DENSIFY_KM,
                        polygons: Mapping[str, Iterable[Ring]] | None = None
                        ) -> CountryDistanceTable:
    """Read the cached table when its digest matches the polygon file, else rebuild."""
    digest = file_digest(polygons_path)
    if cache_path is not None and cache_path.exists():
        table, cached_digest, cached_densify = CountryDistanceTable.read_csv(cache_path)
        if cached_digest == digest and cached_densify == repr(float(densify_km)):
            return table
    if polygons is None:
        from .ingest import parse_country_polygons

        with open(polygons_path) as fh:
            polygons = parse_country_polygons(fh)
    table = CountryDistanceTable.from_polygons(polygons, densify_km)
    if cache_path is not None:
        table.write_csv(cache_path, digest, float(densify_km))
    return table


def sol_violates(rtt_diff_ms: float, country_a: str, country_b: str,
                 table: CountryDistanceTable) -> bool:
    """True when ``rtt_diff_ms`` is too short to cover the two countries' gap.

    Raises ``KeyError`` if either country is missing from ``table``.
    """
    return max_distance_for_rtt_km(rtt_diff_ms) < table[(country_a, country_b)]


# --------------------------------------------------------------------------
# threshold calibration


@dataclass(frozen=True)
class DistanceDistribution:
    """Sorted distances (km) with integer sample weights."""

    km: np.ndarray
    weight: np.ndarray

    @property
    def total(self) -> int:
        return int(self.weight.sum())

    def quantile(self, q: float) -> float:
        """Smallest distance whose cumulative weight reaches ``q`` of the total."""
        cum = np.cumsum(self.weight)
        idx = int(np.searchsorted(cum, q * cum[-1], side="left"))
        return float(self.km[min(idx, len(self.km) - 1)])

    def histogram(self, bin_km: float = 500.0, max_km: float | None = None
                  ) -> list[tuple[float, float, int]]:
        top = max_km if max_km is not None else float(self.km.max()) if len(self.km) else 0.0
        edges = np.arange(0.0, top + bin_km, bin_km)
        if len(edges) < 2:
            edges = np.array([0.0, bin_km])
        counts, _ = np.histogram(self.km, bins=edges, weights=self.weight)
        return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


@dataclass(frozen=True)
class Calibration:
    threshold_km: float
    threshold_ms: float
    quantile: float
    intra: DistanceDistribution
    inter: DistanceDistribution


def _facility_pair_distances(facilities: Sequence) -> tuple[np.ndarray, ...]:
    lat = np.radians([f.lat for f in facilities])
    lon = np.radians([f.lon for f in facilities])
    nets = np.asarray([f.net_count for f in facilities], dtype=np.int64)
    cont = np.asarray([f.continent for f in facilities])
    i, j = np.triu_indices(len(facilities), k=1)
    a = (np.sin((lat[j] - lat[i]) / 2) ** 2
         + np.cos(lat[i]) * np.cos(lat[j]) * np.sin((lon[j] - lon[i]) / 2) ** 2)
    km = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))
    return km, nets[i] * nets[j], cont[i] == cont[j]


def _distribution(km: np.ndarray, w: np.ndarray) -> DistanceDistribution:
    keep = w > 0
    km, w = km[keep], w[keep]
    order = np.argsort(km, kind="stable")
    return DistanceDistribution(km[order], w[order])


def calibrate_threshold(facilities: Sequence, quantile: float = 0.95) -> Calibration:
    """Network-pair weighted quantile of intra-continental facility distances.

    Each pair of distinct facilities contributes ``net_a * net_b`` samples of
    its great-circle distance.  The inter-continental distribution is returned
    alongside for histogram output.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    if len({f.continent for f in facilities}) < 2:
        raise ValueError("facilities must span at least two continents")
    km, w, same = _facility_pair_distances(facilities)
    intra = _distribution(km[same], w[same])
    inter = _distribution(km[~same], w[~same])
    if intra.total == 0:
        raise ValueError("no intra-continental facility pairs with networks present")
    threshold = intra.quantile(quantile)
    return Calibration(threshold, rtt_for_distance_ms(threshold), quantile, intra, inter)
