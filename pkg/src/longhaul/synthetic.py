"""Synthetic corpus with planted ground truth, for tests and demos.

Countries are 2x2 degree squares.  Every planted link is a single jump
between two routers on an otherwise smooth path; its intended fate is
known from the geometry alone:

* ``inter``: different continents, jump above the propagation bound of
  the country centres, so it must survive.
* ``intra``: same continent, jump >= 60 ms; dropped as intra-continental.
* ``sol``: different continents, 60 ms <= jump below the propagation
  bound of the squares' closest approach; dropped by the speed check.
* ``short``: feasible jumps of at most 40 ms between neighbours on
  different continents; only the latency threshold removes them.

The closest approach is bounded below by the centre distance minus both
half-diagonals, which keeps the labels independent of the geodesy code.
"""
from __future__ import annotations

import ipaddress
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .geo import EARTH_RADIUS_KM, rtt_for_distance_ms

# country -> (continent, centre lat, centre lon)
COUNTRIES = {
    "US": ("NA", 40.0, -100.0), "CA": ("NA", 56.0, -106.0), "MX": ("NA", 23.0, -102.0),
    "DE": ("EU", 51.0, 10.0), "FR": ("EU", 46.0, 2.0), "GB": ("EU", 53.0, -2.0),
    "ES": ("EU", 40.0, -4.0), "JP": ("AS", 36.0, 138.0), "SG": ("AS", 1.3, 103.8),
    "IN": ("AS", 22.0, 79.0), "AU": ("OC", -25.0, 134.0), "NZ": ("OC", -41.0, 174.0),
    "BR": ("SA", -10.0, -52.0), "AR": ("SA", -34.0, -64.0), "ZA": ("AF", -29.0, 24.0),
    "KE": ("AF", 0.0, 38.0), "MA": ("AF", 32.0, -6.0),
}
# neighbours across a continental boundary, for below-threshold decoys
SHORT_PAIRS = (("ES", "MA"), ("MA", "ES"), ("FR", "MA"))
HALF_SIDE_DEG = 1.0


def _centre_km(a: str, b: str) -> float:
    _, la1, lo1 = COUNTRIES[a]
    _, la2, lo2 = COUNTRIES[b]
    p1, p2, dl = math.radians(la1), math.radians(la2), math.radians(lo2 - lo1)
    h = (math.sin((p2 - p1) / 2) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2)
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _half_diag_km() -> float:
    # at the equator, where a degree of longitude is longest
    return EARTH_RADIUS_KM * math.radians(HALF_SIDE_DEG) * math.sqrt(2)


def closest_approach_lower_km(a: str, b: str) -> float:
    return max(0.0, _centre_km(a, b) - 2 * _half_diag_km())


def _square(lat: float, lon: float) -> list[list[float]]:
    h = HALF_SIDE_DEG
    return [[lon - h, lat - h], [lon + h, lat - h], [lon + h, lat + h], [lon - h, lat + h],
            [lon - h, lat - h]]


def polygons_geojson(countries=COUNTRIES) -> dict:
    feats = [{"type": "Feature", "properties": {"ISO_A2": cc},
              "geometry": {"type": "Polygon", "coordinates": [_square(lat, lon)]}}
             for cc, (_, lat, lon) in sorted(countries.items())]
    return {"type": "FeatureCollection", "features": feats}


@dataclass
class Router:
    rid: str
    country: str
    ips: list[str]
    asn: int
    lat: float
    lon: float


@dataclass
class Planted:
    kind: str
    near: str
    far: str
    jump_ms: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.near, self.far) if self.near <= self.far else (self.far, self.near)


@dataclass
class GroundTruth:
    config: Path
    snapshots: dict[str, list[Planted]] = field(default_factory=dict)

    def keys(self, snapshot: str, kind: str) -> set[tuple[str, str]]:
        return {p.key for p in self.snapshots[snapshot] if p.kind == kind}


class _World:
    def __init__(self, rng: random.Random, routers_per_country: int):
        self.rng = rng
        self._ip = int(ipaddress.IPv4Address("10.0.0.1"))
        self._dst = int(ipaddress.IPv4Address("172.16.0.1"))
        self.routers: dict[str, Router] = {}
        self.by_country: dict[str, list[Router]] = {}
        self.as_of_country = {}
        asn = 64500
        for cc in sorted(COUNTRIES):
            self.as_of_country[cc] = [asn, asn + 1, asn + 2]
            asn += 3
        n = 1
        for cc in sorted(COUNTRIES):
            _, lat, lon = COUNTRIES[cc]
            rs = []
            for _ in range(routers_per_country):
                ips = [self.next_ip() for _ in range(rng.randint(1, 3))]
                r = Router(f"N{n}", cc, ips, rng.choice(self.as_of_country[cc]),
                           lat + rng.uniform(-0.8, 0.8), lon + rng.uniform(-0.8, 0.8))
                n += 1
                rs.append(r)
                self.routers[r.rid] = r
            self.by_country[cc] = rs

    def next_ip(self) -> str:
        self._ip += 1
        return str(ipaddress.IPv4Address(self._ip))

    def next_dst(self) -> str:
        self._dst += 1
        return str(ipaddress.IPv4Address(self._dst))


def _samples(rng: random.Random, base: float, n: int = 3) -> list[float]:
    return [round(base + rng.expovariate(2.0), 3) for _ in range(n)]


def _path_rtts(rng: random.Random, hops: int, start: float) -> list[float]:
    out, t = [], start
    for _ in range(hops):
        t += rng.uniform(0.2, 1.5)
        out.append(t)
    return out


def _trace(rng, world: _World, monitor: str, cycle: str, src_cc: str, dst_cc: str,
           jump: tuple[Router, Router, float] | None, spike: bool, mpls_far: bool) -> dict:
    src = rng.sample(world.by_country[src_cc], 3)
    dst = rng.sample(world.by_country[dst_cc], 3)
    routers = src + ([jump[0], jump[1]] if jump else []) + dst
    # drop accidental repeats so the far end of the jump is unique on the path
    seen, path = set(), []
    for r in routers:
        if r.rid not in seen:
            seen.add(r.rid)
            path.append(r)
    if jump:
        ni = path.index(jump[0])
        fi = path.index(jump[1])
        if fi != ni + 1 or ni < 1 or fi > len(path) - 2:
            return {}
    rtts = _path_rtts(rng, len(path), 0.5)
    if jump:
        # bounded congestion noise: a pair's label must hold under any subsample
        extra = jump[2] + min(abs(rng.gauss(0.0, 1.0)), 2.0)
        # the increment of the jump itself carries the planted delay
        rtts = rtts[:fi] + [v + extra - (rtts[fi] - rtts[ni]) for v in rtts[fi:]]
    hops = []
    spike_at = None
    if spike:
        lo, hi = 1, (len(path) - 2 if not jump else ni - 2)
        if hi >= lo:
            spike_at = rng.randint(lo, hi)
    for i, (r, base) in enumerate(zip(path, rtts)):
        samples = _samples(rng, base)
        if i == spike_at:
            samples = [round(s + rng.uniform(70.0, 120.0), 3) for s in samples]
        mpls = 1 if (jump and mpls_far and r is jump[1]) else 0
        hops.append({"i": i, "addr": rng.choice(r.ips), "rtt": samples, "mpls": mpls})
    if not jump and rng.random() < 0.2:
        k = rng.randint(1, len(hops) - 1)
        hops[k] = {"i": k, "addr": "*", "rtt": [], "mpls": 0}
    return {"monitor": monitor, "cycle": cycle, "dst": world.next_dst(), "hops": hops}


def _plant(rng: random.Random, world: _World, n_inter: int, n_intra: int, n_sol: int,
           n_short: int) -> list[Planted]:
    ccs = sorted(COUNTRIES)
    inter_pairs = [(a, b) for a in ccs for b in ccs if COUNTRIES[a][0] != COUNTRIES[b][0]]
    intra_pairs = [(a, b) for a in ccs for b in ccs
                   if a != b and COUNTRIES[a][0] == COUNTRIES[b][0]]
    sol_pairs = [(a, b) for a, b in inter_pairs
                 if rtt_for_distance_ms(closest_approach_lower_km(a, b)) >= 75.0]
    used: set[tuple[str, str]] = set()
    busy: set[str] = set()
    out: list[Planted] = []

    def pick(pairs):
        # each router ends at most one planted link so the truth is unambiguous
        while True:
            a, b = rng.choice(pairs)
            n = rng.choice(world.by_country[a])
            f = rng.choice(world.by_country[b])
            key = tuple(sorted((n.rid, f.rid)))
            if key not in used and n.rid not in busy and f.rid not in busy:
                used.add(key)
                busy.update(key)
                return a, b, n, f

    for _ in range(n_inter):
        a, b, n, f = pick(inter_pairs)
        floor = rtt_for_distance_ms(_centre_km(a, b)) + 5.0
        out.append(Planted("inter", n.rid, f.rid, round(max(62.0, floor) + rng.uniform(0, 20), 3)))
    for _ in range(n_intra):
        a, b, n, f = pick(intra_pairs)
        out.append(Planted("intra", n.rid, f.rid, round(rng.uniform(60.0, 90.0), 3)))
    for _ in range(n_sol):
        a, b, n, f = pick(sol_pairs)
        ceiling = rtt_for_distance_ms(closest_approach_lower_km(a, b)) - 8.0
        out.append(Planted("sol", n.rid, f.rid, round(rng.uniform(60.0, ceiling), 3)))
    for _ in range(n_short):
        a, b, n, f = pick(SHORT_PAIRS)
        floor = max(12.0, rtt_for_distance_ms(_centre_km(a, b)) + 5.0)
        out.append(Planted("short", n.rid, f.rid, round(rng.uniform(floor, 40.0), 3)))
    return out


def _write_sidecars(d: Path, world: _World, rng: random.Random) -> dict[str, str]:
    rs = sorted(world.routers.values(), key=lambda r: int(r.rid[1:]))
    ixp_ips = []
    with open(d / "nodes.txt", "w") as fh:
        fh.write("# synthetic alias sets\n")
        for r in rs:
            fh.write(f"node {r.rid}:  {' '.join(r.ips)}\n")
    with open(d / "nodes.as.txt", "w") as fh:
        for r in rs:
            if rng.random() < 0.95:
                fh.write(f"node.AS {r.rid} {r.asn} synthetic\n")
    with open(d / "nodes.geo.txt", "w") as fh:
        for r in rs:
            cont = COUNTRIES[r.country][0]
            fh.write(f"node.geo {r.rid}:\t{cont}\t{r.country}\t\t\t{r.lat:.5f}\t{r.lon:.5f}\n")
            if rng.random() < 0.05:
                ixp_ips.append(r.ips[0])
    asns = sorted({a for v in world.as_of_country.values() for a in v})
    with open(d / "as-rel.txt", "w") as fh:
        fh.write("# provider|customer|-1, peer|peer|0\n")
        for i, a in enumerate(asns):
            for b in asns[i + 1:]:
                u = rng.random()
                if u < 0.15:
                    fh.write(f"{a}|{b}|-1\n")
                elif u < 0.3:
                    fh.write(f"{a}|{b}|0\n")
    (d / "ixp.txt").write_text("".join(f"{ip}\n" for ip in ixp_ips))
    with open(d / "country_continent.csv", "w") as fh:
        fh.write("country,continent\n")
        for cc, (cont, _, _) in sorted(COUNTRIES.items()):
            fh.write(f"{cc},{cont}\n")
    with open(d / "facilities.csv", "w") as fh:
        fh.write("fac_id,lat,lon,country,continent,net_count\n")
        k = 0
        for cc, (cont, lat, lon) in sorted(COUNTRIES.items()):
            for _ in range(4):
                k += 1
                fh.write(f"F{k},{lat + rng.uniform(-0.9, 0.9):.5f},"
                         f"{lon + rng.uniform(-0.9, 0.9):.5f},{cc},{cont},{rng.randint(1, 40)}\n")
    (d / "countries.geojson").write_text(json.dumps(polygons_geojson()))
    return {"nodes": "nodes.txt", "nodes_as": "nodes.as.txt", "nodes_geo": "nodes.geo.txt",
            "as_rel": "as-rel.txt", "ixp": "ixp.txt", "country_continent": "country_continent.csv",
            "facilities": "facilities.csv", "polygons": "countries.geojson"}


def generate(out: Path | str, seed: int = 0, n_inter: int = 100, n_intra: int = 200,
             n_sol: int = 100, n_short: int = 50, traces_per_link: int = 8, background: int = 1800,
             snapshots: int = 1, spike_rate: float = 0.15, routers_per_country: int = 120,
             cycles: int = 2) -> GroundTruth:
    """Write a corpus, its sidecars and ``config.json`` under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    world = _World(rng, routers_per_country)
    planted = _plant(rng, world, n_inter, n_intra, n_sol, n_short)
    inputs = _write_sidecars(out, world, rng)
    monitors = [f"mon-{i:02d}" for i in range(12)]
    ccs = sorted(COUNTRIES)
    truth = GroundTruth(out / "config.json")
    snap_files: dict[str, list[str]] = {}
    for s in range(snapshots):
        sid = f"s{s + 1}"
        present = [p for p in planted if s == 0 or rng.random() < 0.9]
        truth.snapshots[sid] = present
        traces = []
        for p in present:
            near, far = world.routers[p.near], world.routers[p.far]
            made = 0
            while made < traces_per_link:
                t = _trace(rng, world, rng.choice(monitors), "", near.country, far.country,
                           (near, far, p.jump_ms), rng.random() < spike_rate,
                           rng.random() < 0.3)
                if t:
                    traces.append(t)
                    made += 1
        for _ in range(background):
            a = rng.choice(ccs)
            same = [c for c in ccs if COUNTRIES[c][0] == COUNTRIES[a][0]]
            traces.append(_trace(rng, world, rng.choice(monitors), "", a, rng.choice(same),
                                 None, rng.random() < spike_rate, False))
        rng.shuffle(traces)
        files = []
        for c in range(cycles):
            name = f"{sid}-cycle{c + 1}.jsonl"
            with open(out / name, "w") as fh:
                for t in traces[c::cycles]:
                    t["cycle"] = f"{sid}-c{c + 1}"
                    fh.write(json.dumps(t, sort_keys=True) + "\n")
            files.append(name)
        snap_files[sid] = files
    cfg = {"snapshots": snap_files, "inputs": inputs, "out_dir": "out",
           "seed": seed, "powerlaw_bootstrap": 20,
           "topcore_min_snapshots": max(1, snapshots - 1)}
    truth.config.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return truth
