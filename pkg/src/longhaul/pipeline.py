"""End-to-end orchestration, longitudinal driving and sensitivity analyses."""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import filters, lhnet
from .config import REQUIRED_FOR_FILTER, ConfigError, PipelineConfig, check_readable
from .detect import LevelShiftConfig, detect_corpus, downsample, keep_trace
from .geo import CountryDistanceTable, calibrate_threshold, file_digest, load_distance_table
from .ingest import (ParseStats, SidecarBundle, parse_alias_nodes, parse_as_rel,
                     parse_country_continent, parse_country_polygons, parse_facilities,
                     parse_ixp_addrs, parse_router_asn, parse_router_geo, parse_traceroutes)
from .model import CandidateLink, Granularity, LongHaulLink, Traceroute
from .reports import (read_candidates, read_links_jsonl, write_csv, write_json,
                      write_jsonl, write_links_csv)

log = logging.getLogger(__name__)

GRANULARITIES = (Granularity.ROUTER, Granularity.AS, Granularity.COUNTRY)


# --------------------------------------------------------------------------
# loading


def _parse_file(fn, path: Path, stats: ParseStats):
    with open(path, encoding="utf-8") as fh:
        return fn(fh, stats)


def load_sidecars(cfg: PipelineConfig, need: Iterable[str] = REQUIRED_FOR_FILTER
                  ) -> tuple[SidecarBundle, dict[str, dict]]:
    missing = [k for k in need if k not in cfg.inputs]
    if missing:
        raise ConfigError(f"missing required inputs {missing}")
    check_readable(list(cfg.inputs.values()))
    parsers = {"nodes": ("alias_map", parse_alias_nodes),
               "nodes_as": ("router_asn", parse_router_asn),
               "nodes_geo": ("router_geo", parse_router_geo),
               "as_rel": ("as_rel", parse_as_rel),
               "ixp": ("ixp_addrs", parse_ixp_addrs),
               "country_continent": ("country_continent", parse_country_continent),
               "facilities": ("facility_locations", parse_facilities),
               "polygons": ("country_polygons", parse_country_polygons)}
    bundle = SidecarBundle()
    report = {}
    for name, path in sorted(cfg.inputs.items()):
        attr, fn = parsers[name]
        stats = ParseStats()
        setattr(bundle, attr, _parse_file(fn, path, stats))
        report[name] = stats.to_dict()
    return bundle, report


def load_table(cfg: PipelineConfig, sidecars: SidecarBundle) -> CountryDistanceTable:
    cache = cfg.distance_cache or (cfg.out_dir / "country_distances.csv")
    cache.parent.mkdir(parents=True, exist_ok=True)
    return load_distance_table(cfg.inputs["polygons"], cache, cfg.densify_km,
                               sidecars.country_polygons)


def iter_snapshot(cfg: PipelineConfig, snapshot: str, stats: ParseStats) -> Iterator[Traceroute]:
    """Traceroutes of every merged cycle of ``snapshot``, in file order."""
    for path in cfg.snapshots[snapshot]:
        with open(path, encoding="utf-8") as fh:
            yield from parse_traceroutes(fh, stats)


def input_digests(cfg: PipelineConfig, snapshot: str | None = None) -> dict[str, str]:
    out = {f"input:{k}": file_digest(p) for k, p in sorted(cfg.inputs.items())}
    snaps = [snapshot] if snapshot is not None else list(cfg.snapshots)
    for s in snaps:
        for p in cfg.snapshots[s]:
            out[f"traces:{s}:{p.name}"] = file_digest(p)
    return out


def snapshot_ids(cfg: PipelineConfig, only: Sequence[str] | None) -> list[str]:
    snaps = list(only) if only else list(cfg.snapshots)
    unknown = [s for s in snaps if s not in cfg.snapshots]
    if unknown:
        raise ConfigError(f"unknown snapshots {unknown}")
    return snaps


# --------------------------------------------------------------------------
# stages


def detect_snapshot(cfg: PipelineConfig, snapshot: str) -> tuple[list[CandidateLink], dict]:
    """Parse, down-sample and detect; caches candidates under the snapshot directory."""
    check_readable(list(cfg.snapshots[snapshot]))
    parse_stats = ParseStats()
    traces = downsample(iter_snapshot(cfg, snapshot, parse_stats), cfg.sample_fraction, cfg.seed)
    candidates, dstats = detect_corpus(traces, LevelShiftConfig(cfg.window, cfg.c), cfg.jobs)
    meta = {"parse": parse_stats.to_dict(), "detect": dstats.to_dict(),
            "detector": {"window": cfg.window, "c": cfg.c,
                         "sample_fraction": cfg.sample_fraction, "seed": cfg.seed}}
    sdir = cfg.snapshot_dir(snapshot)
    sdir.mkdir(parents=True, exist_ok=True)
    write_jsonl(cfg.candidates_path(snapshot), candidates)
    write_json(sdir / "detect.json", meta)
    return candidates, meta


def cached_candidates(cfg: PipelineConfig, snapshot: str) -> tuple[list[CandidateLink], dict]:
    """Cached candidates when their detector settings match ``cfg``, else re-detect."""
    path = cfg.candidates_path(snapshot)
    meta_path = cfg.snapshot_dir(snapshot) / "detect.json"
    if path.exists() and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        want = {"window": cfg.window, "c": cfg.c, "sample_fraction": cfg.sample_fraction,
                "seed": cfg.seed}
        if meta.get("detector") == want:
            return read_candidates(path), meta
    return detect_snapshot(cfg, snapshot)


def filter_snapshot(cfg: PipelineConfig, snapshot: str, candidates: Sequence[CandidateLink],
                    sidecars: SidecarBundle, table: CountryDistanceTable, detect_meta: dict,
                    sidecar_stats: dict) -> filters.FilterResult:
    result = filters.run_filters(candidates, sidecars, table, cfg.threshold_ms)
    sdir = cfg.snapshot_dir(snapshot)
    sdir.mkdir(parents=True, exist_ok=True)
    write_links_csv(sdir / "lhl.csv", result.links)
    write_jsonl(sdir / "lhl.jsonl", result.links)
    dstats = detect_meta.get("detect", {})
    stages = [("hop_pairs", dstats.get("hop_pairs", 0)),
              ("candidates", result.stage_counts["candidates"]),
              ("router_pairs", result.stage_counts["router_pairs"]),
              ("threshold", result.stage_counts["threshold"]),
              ("intercontinental", result.stage_counts["intercontinental"]),
              ("sol", result.stage_counts["sol"])]
    manifest = {
        "snapshot": snapshot,
        "config_digest": cfg.digest(),
        "config": cfg.semantic_dict(),
        "inputs": input_digests(cfg, snapshot),
        "parse": {"traceroutes": detect_meta.get("parse", {}), "sidecars": sidecar_stats},
        "detect": dstats,
        "stages": [{"stage": s, "survivors": n} for s, n in stages],
        "survivors": len(result.links),
        **result.to_dict(),
    }
    write_json(sdir / "manifest.json", manifest)
    return result


def _fit_or_error(values: list[int], cfg: PipelineConfig) -> dict:
    try:
        return lhnet.fit_powerlaw(values, bootstrap=cfg.powerlaw_bootstrap, seed=cfg.seed
                                  ).to_dict()
    except lhnet.InsufficientDataError as exc:
        return {"error": str(exc)}


def analyze_links(cfg: PipelineConfig, snapshot: str, links: Sequence[LongHaulLink]) -> dict:
    """Write every per-snapshot report and return the JSON summary."""
    sdir = cfg.snapshot_dir(snapshot)
    sdir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"snapshot": snapshot, "links": len(links), "granularities": {}}
    for g in GRANULARITIES:
        graph = lhnet.build_graph(links, g)
        core = lhnet.k_core(graph)
        comp, member = lhnet.connected_components(graph)
        name = g.value
        write_csv(sdir / f"{name}.nodes.csv", ("node", "degree", "shell", "component"),
                  [(v, graph.degree(v), core.shell[v], member[v]) for v in graph.vertices])
        write_csv(sdir / f"{name}.edges.csv",
                  ("u", "v", "multiplicity", "mean_min_diff_ms", "countries"),
                  [(e.u, e.v, e.multiplicity, e.mean_min_diff_ms, e.countries)
                   for e in graph.edges])
        write_csv(sdir / f"{name}.degree_distribution.csv", ("degree", "count"),
                  lhnet.degree_distribution(graph).items())
        write_csv(sdir / f"{name}.degree_ccdf.csv", ("degree", "ccdf"), lhnet.ccdf(graph))
        sizes = defaultdict(lambda: [0, 0])
        for v, c in member.items():
            sizes[c][0] += 1
        for e in graph.simple_edges:
            sizes[member[e.u]][1] += 1
        write_csv(sdir / f"{name}.components.csv", ("component", "vertices", "edges"),
                  [(c, n, m) for c, (n, m) in sorted(sizes.items())])
        degrees = [graph.degree(v) for v in graph.vertices]
        summary["granularities"][name] = {
            "vertices": len(graph.vertices), "edges": len(graph.simple_edges),
            "self_loops": len(graph.edges) - len(graph.simple_edges),
            "excluded_links": graph.excluded_links,
            "components": comp.to_dict(),
            "max_shell": core.max_shell, "top_core": sorted(core.top_core),
            "powerlaw": _fit_or_error(degrees, cfg),
        }
        if g is Granularity.ROUTER:
            supers = lhnet.super_routers(graph, links, cfg.min_countries)
            write_csv(sdir / "router.super_routers.csv",
                      ("router", "degree", "n_countries", "countries", "asn", "lat", "lon",
                       "country"),
                      [(s.router, s.degree, len(s.countries), s.countries, s.asn,
                        *(s.location or (None, None, None))) for s in supers])
            footprint = [len(cc) for cc in lhnet.router_countries(links).values()]
            write_csv(sdir / "router.country_footprint_ccdf.csv", ("countries", "ccdf"),
                      lhnet.ccdf(footprint))
            summary["super_routers"] = len(supers)
    for kind, table in lhnet.tabulate(links).items():
        write_csv(sdir / f"links.{kind}.csv", table.header, table.rows)
    mpls = sum(l.mpls_visible for l in links)
    summary["mpls_links"] = mpls
    summary["mpls_fraction"] = mpls / len(links) if links else 0.0
    write_json(sdir / "summary.json", summary)
    return summary


def run(cfg: PipelineConfig, snapshots: Sequence[str] | None = None) -> dict[str, dict]:
    """parse -> downsample -> detect -> filter -> tag -> graphs -> reports."""
    snaps = snapshot_ids(cfg, snapshots)
    check_readable([p for s in snaps for p in cfg.snapshots[s]] + list(cfg.inputs.values()))
    sidecars, side_stats = load_sidecars(cfg)
    table = load_table(cfg, sidecars)
    out = {}
    for snap in snaps:
        candidates, meta = detect_snapshot(cfg, snap)
        result = filter_snapshot(cfg, snap, candidates, sidecars, table, meta, side_stats)
        log.info("%s: %d candidates -> %d long-haul links", snap, len(candidates),
                 len(result.links))
        analyze_links(cfg, snap, result.links)
        out[snap] = json_manifest(cfg, snap)
    return out


def json_manifest(cfg: PipelineConfig, snapshot: str) -> dict:
    return json.loads((cfg.snapshot_dir(snapshot) / "manifest.json").read_text())


def load_links(cfg: PipelineConfig, snapshot: str) -> list[LongHaulLink]:
    path = cfg.snapshot_dir(snapshot) / "lhl.jsonl"
    if not path.exists():
        raise ConfigError(f"no filtered links for snapshot {snapshot!r}; run 'filter' first")
    return read_links_jsonl(path)


# --------------------------------------------------------------------------
# longitudinal


def longitudinal(cfg: PipelineConfig, snapshots: Sequence[str] | None = None) -> dict:
    snaps = snapshot_ids(cfg, snapshots)
    if len(snaps) < 2:
        raise ConfigError("longitudinal analysis needs at least two snapshots")
    links = {s: load_links(cfg, s) for s in snaps}
    ldir = cfg.out_dir / "longitudinal"
    ldir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"snapshots": snaps, "degree_variation": {}, "topcore": {}}
    graphs = {g: {s: lhnet.build_graph(links[s], g) for s in snaps} for g in GRANULARITIES}
    steps = list(zip(snaps, snaps[1:]))
    if (snaps[0], snaps[-1]) not in steps:
        steps.append((snaps[0], snaps[-1]))
    for g in GRANULARITIES:
        name = g.value
        comp_rows, fit_rows, cores = [], [], {}
        for s in snaps:
            graph = graphs[g][s]
            rep, _ = lhnet.connected_components(graph)
            comp_rows.append((s, rep.components, rep.vertices, rep.edges, rep.max_vertices,
                              rep.max_edges))
            fit = _fit_or_error([graph.degree(v) for v in graph.vertices], cfg)
            fit_rows.append((s, fit.get("alpha"), fit.get("xmin"),
                             fit.get("loglik_ratio_vs_lognormal"), fit.get("p_value_proxy"),
                             fit.get("error")))
            cores[s] = lhnet.k_core(graph)
        write_csv(ldir / f"{name}.components.csv",
                  ("snapshot", "components", "vertices", "edges", "max_vertices",
                   "max_edges"), comp_rows)
        write_csv(ldir / f"{name}.powerlaw.csv",
                  ("snapshot", "alpha", "xmin", "loglik_ratio_vs_lognormal", "p_value_proxy",
                   "error"), fit_rows)
        members = lhnet.topcore_membership(cores, cfg.topcore_min_snapshots)
        write_csv(ldir / f"{name}.topcore.csv", ("node", "snapshots_in_top_core", "snapshots"),
                  members)
        summary["topcore"][name] = [m[0] for m in members]
        var_rows, cdf_rows, means = [], [], {}
        for a, b in steps:
            dv = lhnet.degree_variation(graphs[g][a], graphs[g][b])
            var_rows.extend((a, b, node, d) for node, d in dv.delta.items())
            cdf_rows.extend((a, b, x, p) for x, p in dv.cdf)
            means[f"{a}->{b}"] = dv.mean
        write_csv(ldir / f"{name}.degree_variation.csv", ("from", "to", "node", "delta"),
                  var_rows)
        write_csv(ldir / f"{name}.degree_variation_cdf.csv", ("from", "to", "delta", "cdf"),
                  cdf_rows)
        summary["degree_variation"][name] = means
    lat_rows = []
    for a, b in steps:
        for r in lhnet.as_latency_variation(links[a], links[b]):
            lat_rows.append((a, b, r.asn, r.mean_ms_t1, r.mean_ms_t2, r.links_t1, r.links_t2,
                             r.delta_links))
    write_csv(ldir / "as.latency_variation.csv",
              ("from", "to", "asn", "mean_ms_from", "mean_ms_to", "links_from", "links_to",
               "delta_links"), lat_rows)
    rel_rows = []
    for s in snaps:
        table = lhnet.tabulate(links[s])["relationships"]
        rel_rows.extend((s, *row) for row in table.rows)
    write_csv(ldir / "links.relationships.csv", ("snapshot", "relationship", "links",
                                                 "fraction"), rel_rows)
    write_json(ldir / "summary.json", summary)
    return summary


# --------------------------------------------------------------------------
# sensitivity


def _router_graph_sets(links: Sequence[LongHaulLink]) -> tuple[set[str], set[tuple[str, str]]]:
    nodes = {r for l in links for r in (l.near_router, l.far_router)}
    return nodes, {l.key for l in links}


def subsample_candidates(candidates: Sequence[CandidateLink], fraction: float, seed: int
                         ) -> list[CandidateLink]:
    """Keep the candidates of each source traceroute with probability ``fraction``."""
    return [c for c in candidates if keep_trace(c.trace_ref, fraction, seed)]


@dataclass(frozen=True)
class DownsampleRow:
    fraction: float
    node_recall: float
    edge_recall: float
    node_recall_cv: float
    repeats: int


def _ratio(n: int, d: int) -> float:
    return n / d if d else 1.0


def sensitivity_downsample(candidates: Sequence[CandidateLink], sidecars: SidecarBundle,
                           table: CountryDistanceTable, fractions: Sequence[float],
                           repeats: int, seed: int, threshold_ms: float
                           ) -> list[DownsampleRow]:
    """Mean node/edge recall of the router-level LHnet when traces with
    discontinuities are down-sampled, relative to using all of them."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise ConfigError("fractions must lie in (0, 1]")
    full = filters.run_filters(candidates, sidecars, table, threshold_ms).links
    full_nodes, full_edges = _router_graph_sets(full)
    rows = []
    for f in fractions:
        nr, er = [], []
        for r in range(repeats):
            sub = subsample_candidates(candidates, f, seed + r)
            nodes, edges = _router_graph_sets(
                filters.run_filters(sub, sidecars, table, threshold_ms).links)
            nr.append(_ratio(len(nodes), len(full_nodes)))
            er.append(_ratio(len(edges), len(full_edges)))
        mean = float(np.mean(nr))
        cv = float(np.std(nr) / mean) if mean else 0.0
        rows.append(DownsampleRow(f, mean, float(np.mean(er)), cv, repeats))
    return rows


@dataclass(frozen=True)
class ThresholdRow:
    threshold_ms: float
    vertices: int
    edges: int
    vertices_delta_pct: float
    edges_delta_pct: float


def _pct(v: int, ref: int) -> float:
    if v == ref:
        return 0.0
    return (v - ref) / ref * 100.0 if ref else float("inf")


def sensitivity_threshold(candidates: Sequence[CandidateLink], sidecars: SidecarBundle,
                          table: CountryDistanceTable, thresholds: Sequence[float],
                          default_ms: float) -> list[ThresholdRow]:
    if any(not t > 0 for t in [*thresholds, default_ms]):
        raise ConfigError("thresholds must be positive")
    def counts(t):
        links = filters.run_filters(candidates, sidecars, table, t).links
        nodes, edges = _router_graph_sets(links)
        return len(nodes), len(edges)

    ref_v, ref_e = counts(default_ms)
    rows = []
    for t in thresholds:
        v, e = (ref_v, ref_e) if t == default_ms else counts(t)
        rows.append(ThresholdRow(t, v, e, _pct(v, ref_v), _pct(e, ref_e)))
    return rows


# --------------------------------------------------------------------------
# filter comparison


def js_divergence(hist_a: Sequence[float], hist_b: Sequence[float]) -> float:
    """Base-2 Jensen-Shannon divergence of two histograms on shared bins."""
    p = np.asarray(hist_a, dtype=float)
    q = np.asarray(hist_b, dtype=float)
    if p.shape != q.shape:
        raise ValueError("histograms must share the same binning")
    if p.size == 0 or p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("histograms must be non-empty with positive mass")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("histogram counts must be non-negative")
    p, q = p / p.sum(), q / q.sum()
    m = 0.5 * (p + q)

    def kl(x):
        nz = x > 0
        return float(np.sum(x[nz] * np.log2(x[nz] / m[nz])))

    return min(1.0, max(0.0, 0.5 * kl(p) + 0.5 * kl(q)))


VARIANTS = {"full": filters.STAGES,
            "geolocation_only": ("intercontinental", "sol"),
            "latency_only": ("threshold",)}


def latency_histogram(values: Sequence[float], n_bins: int, bin_ms: float = 1.0) -> np.ndarray:
    edges = np.arange(n_bins + 1) * bin_ms
    counts, _ = np.histogram(np.minimum(values, edges[-1] - 1e-9), bins=edges)
    return counts


def compare_filters(candidates: Sequence[CandidateLink], sidecars: SidecarBundle,
                    table: CountryDistanceTable, threshold_ms: float, bin_ms: float = 1.0
                    ) -> dict:
    """The full method against its geolocation-only and latency-only variants."""
    results = {name: filters.run_filters(candidates, sidecars, table, threshold_ms, stages)
               for name, stages in VARIANTS.items()}
    values = {name: [l.min_diff_ms for l in r.links] for name, r in results.items()}
    keys = {name: {l.key for l in r.links} for name, r in results.items()}
    top = max((max(v) for v in values.values() if v), default=0.0)
    n_bins = int(np.floor(top / bin_ms)) + 1
    hists = {name: latency_histogram(v, n_bins, bin_ms) for name, v in values.items()}
    js = {}
    names = list(VARIANTS)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            try:
                js[f"{a}|{b}"] = js_divergence(hists[a], hists[b])
            except ValueError:
                js[f"{a}|{b}"] = None
    return {"values": values, "histograms": hists, "keys": keys, "js": js,
            "subset": {n: keys["full"] <= keys[n] for n in names}, "bin_ms": bin_ms}


def write_comparison(out_dir: Path, snapshot: str, cmp: dict) -> None:
    d = out_dir / snapshot
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, vals in cmp["values"].items():
        vs = sorted(vals)
        rows.extend((name, v, (i + 1) / len(vs)) for i, v in enumerate(vs))
    write_csv(d / "links.compare_filters_cdf.csv", ("variant", "min_diff_ms", "cdf"), rows)
    bins = len(next(iter(cmp["histograms"].values())))
    write_csv(d / "links.compare_filters_hist.csv",
              ("bin_lo_ms", *cmp["histograms"].keys()),
              [(i * cmp["bin_ms"], *(int(h[i]) for h in cmp["histograms"].values()))
               for i in range(bins)])
    write_json(d / "compare_filters.json",
               {"js_divergence": cmp["js"], "full_subset_of": cmp["subset"],
                "survivors": {k: len(v) for k, v in cmp["values"].items()}})


def calibrate(cfg: PipelineConfig, bin_km: float = 500.0) -> dict:
    if "facilities" not in cfg.inputs:
        raise ConfigError("calibrate needs inputs.facilities")
    check_readable([cfg.inputs["facilities"]])
    stats = ParseStats()
    facs = _parse_file(parse_facilities, cfg.inputs["facilities"], stats)
    cal = calibrate_threshold(facs, cfg.calibrate_quantile)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    top = max(float(cal.intra.km.max(initial=0)), float(cal.inter.km.max(initial=0)))
    for name, dist in (("intra", cal.intra), ("inter", cal.inter)):
        write_csv(cfg.out_dir / f"calibration.{name}_histogram.csv",
                  ("bin_lo_km", "bin_hi_km", "network_pairs"), dist.histogram(bin_km, top))
    summary = {"quantile": cal.quantile, "threshold_km": cal.threshold_km,
               "threshold_ms": cal.threshold_ms, "facilities": len(facs),
               "intra_pairs_weight": cal.intra.total, "inter_pairs_weight": cal.inter.total,
               "parse": stats.to_dict()}
    write_json(cfg.out_dir / "calibration.json", summary)
    return summary


__all__ = ["run", "detect_snapshot", "cached_candidates", "filter_snapshot", "analyze_links",
           "longitudinal", "sensitivity_downsample", "sensitivity_threshold", "js_divergence",
           "compare_filters", "write_comparison", "calibrate", "load_sidecars", "load_table",
           "load_links", "snapshot_ids"]
