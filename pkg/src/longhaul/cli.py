"""``longhaul`` command line."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, PipelineConfig, load_config
from .filters import DEFAULT_THRESHOLD_MS
from .reports import dumps, write_csv

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="longhaul", description="Intercontinental long-haul link "
                                "inference and long-haul network analysis.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", type=Path, required=True)
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold-ms", type=float)
    common.add_argument("--sample-fraction", type=float)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out-dir", type=Path)
    snaps = argparse.ArgumentParser(add_help=False)
    snaps.add_argument("--snapshot", action="append", dest="snapshots",
                       help="restrict to this snapshot id (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common],
                   help="derive the latency threshold from facility distances")
    sub.add_parser("detect", parents=[common, snaps], help="parse, down-sample and detect")
    sub.add_parser("filter", parents=[common, snaps],
                   help="aggregate and filter cached candidates into long-haul links")
    sub.add_parser("analyze", parents=[common, snaps], help="graph reports from filtered links")
    sub.add_parser("run", parents=[common, snaps], help="detect, filter and analyze")
    sub.add_parser("longitudinal", parents=[common, snaps],
                   help="cross-snapshot comparisons of filtered links")
    sens = sub.add_parser("sensitivity", parents=[common, snaps],
                          help="down-sampling and threshold sweeps")
    sens.add_argument("--fractions", type=_floats, default=[1.0, 0.5, 0.25])
    sens.add_argument("--repeats", type=int, default=5)
    sens.add_argument("--thresholds", type=_floats,
                      default=[20.0, 30.0, 40.0, 50.0, DEFAULT_THRESHOLD_MS])
    sub.add_parser("compare-filters", parents=[common, snaps],
                   help="full method against single-filter variants")
    syn = sub.add_parser("synth", help="write a synthetic corpus with planted links")
    syn.add_argument("out", type=Path)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--snapshots", type=int, default=1)
    return p


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, threshold_ms=args.threshold_ms,
                              sample_fraction=args.sample_fraction, jobs=args.jobs,
                              out_dir=args.out_dir)


def _each_filtered(cfg: PipelineConfig, snaps):
    sidecars, side_stats = pipeline.load_sidecars(cfg)
    table = pipeline.load_table(cfg, sidecars)
    for snap in pipeline.snapshot_ids(cfg, snaps):
        cands, meta = pipeline.cached_candidates(cfg, snap)
        yield snap, cands, meta, sidecars, side_stats, table


def _dispatch(args: argparse.Namespace) -> object:
    if args.command == "synth":
        from .synthetic import generate

        truth = generate(args.out, seed=args.seed, snapshots=args.snapshots)
        return {"config": str(truth.config),
                "planted": {s: len(v) for s, v in truth.snapshots.items()}}
    cfg = _config(args)
    cmd = args.command
    snaps = getattr(args, "snapshots", None)
    if cmd == "calibrate":
        return pipeline.calibrate(cfg)
    if cmd == "run":
        return {s: m["stages"] for s, m in pipeline.run(cfg, snaps).items()}
    if cmd == "detect":
        return {s: pipeline.detect_snapshot(cfg, s)[1]["detect"]
                for s in pipeline.snapshot_ids(cfg, snaps)}
    if cmd == "filter":
        out = {}
        for snap, cands, meta, sidecars, side_stats, table in _each_filtered(cfg, snaps):
            res = pipeline.filter_snapshot(cfg, snap, cands, sidecars, table, meta, side_stats)
            out[snap] = res.stage_counts
        return out
    if cmd == "analyze":
        return {s: pipeline.analyze_links(cfg, s, pipeline.load_links(cfg, s))
                for s in pipeline.snapshot_ids(cfg, snaps)}
    if cmd == "longitudinal":
        return pipeline.longitudinal(cfg, snaps)
    if cmd == "sensitivity":
        out = {}
        for snap, cands, _, sidecars, _, table in _each_filtered(cfg, snaps):
            down = pipeline.sensitivity_downsample(cands, sidecars, table, args.fractions,
                                                   args.repeats, cfg.seed, cfg.threshold_ms)
            sweep = pipeline.sensitivity_threshold(cands, sidecars, table, args.thresholds,
                                                   cfg.threshold_ms)
            d = cfg.snapshot_dir(snap)
            write_csv(d / "sensitivity.downsample.csv",
                      ("fraction", "node_recall", "edge_recall", "node_recall_cv", "repeats"),
                      [(r.fraction, r.node_recall, r.edge_recall, r.node_recall_cv, r.repeats)
                       for r in down])
            write_csv(d / "sensitivity.threshold.csv",
                      ("threshold_ms", "vertices", "edges", "vertices_delta_pct",
                       "edges_delta_pct"),
                      [(r.threshold_ms, r.vertices, r.edges, r.vertices_delta_pct,
                        r.edges_delta_pct) for r in sweep])
            out[snap] = {"downsample": [r.__dict__ for r in down],
                         "threshold": [r.__dict__ for r in sweep]}
        return out
    if cmd == "compare-filters":
        out = {}
        for snap, cands, _, sidecars, _, table in _each_filtered(cfg, snaps):
            cmp = pipeline.compare_filters(cands, sidecars, table, cfg.threshold_ms)
            pipeline.write_comparison(cfg.out_dir, snap, cmp)
            out[snap] = {"js_divergence": cmp["js"], "full_subset_of": cmp["subset"]}
        return out
    raise ConfigError(f"unknown command {cmd}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _dispatch(args)
    except (ValueError, OSError) as exc:
        # config errors, alias conflicts, malformed sidecar headers, unusable facilities
        print(f"longhaul: error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
