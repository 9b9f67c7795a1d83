"""Pipeline configuration: one declarative file (JSON or YAML) plus overrides."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .filters import DEFAULT_THRESHOLD_MS
from .geo import DEFAULT_DENSIFY_KM


class ConfigError(ValueError):
    pass


SIDE_INPUTS = ("nodes", "nodes_as", "nodes_geo", "country_continent", "polygons", "as_rel",
               "ixp", "facilities")
REQUIRED_FOR_FILTER = ("country_continent", "polygons")

# fields that never change results and stay out of the digest
_NON_SEMANTIC = {"jobs", "out_dir", "distance_cache"}


@dataclass(frozen=True)
class PipelineConfig:
    snapshots: dict[str, tuple[Path, ...]] = field(default_factory=dict)
    inputs: dict[str, Path] = field(default_factory=dict)
    out_dir: Path = Path("out")
    distance_cache: Path | None = None
    threshold_ms: float = DEFAULT_THRESHOLD_MS
    window: int = 2
    c: float = 1.0
    sample_fraction: float = 1.0
    seed: int = 0
    densify_km: float = DEFAULT_DENSIFY_KM
    min_countries: int = 5
    jobs: int = 1
    powerlaw_bootstrap: int = 100
    topcore_min_snapshots: int = 6
    calibrate_quantile: float = 0.95

    def __post_init__(self):
        problems = []
        if not self.threshold_ms > 0:
            problems.append("threshold_ms must be positive")
        if not (isinstance(self.window, int) and self.window >= 1):
            problems.append("window must be an integer >= 1")
        if not self.c > 0:
            problems.append("c must be positive")
        if not 0 < self.sample_fraction <= 1:
            problems.append("sample_fraction must lie in (0, 1]")
        if not self.densify_km > 0:
            problems.append("densify_km must be positive")
        if self.min_countries < 1:
            problems.append("min_countries must be >= 1")
        if self.jobs < 1:
            problems.append("jobs must be >= 1")
        if self.powerlaw_bootstrap < 0:
            problems.append("powerlaw_bootstrap must be >= 0")
        if self.topcore_min_snapshots < 1:
            problems.append("topcore_min_snapshots must be >= 1")
        if not 0 < self.calibrate_quantile < 1:
            problems.append("calibrate_quantile must lie in (0, 1)")
        unknown = set(self.inputs) - set(SIDE_INPUTS)
        if unknown:
            problems.append(f"unknown inputs {sorted(unknown)}")
        paths = [p.resolve() for ps in self.snapshots.values() for p in ps]
        paths += [p.resolve() for p in self.inputs.values()]
        if len(paths) != len(set(paths)):
            problems.append("input paths must be distinct")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_overrides(self, **kw: Any) -> PipelineConfig:
        kw = {k: v for k, v in kw.items() if v is not None}
        if "out_dir" in kw:
            kw["out_dir"] = Path(kw["out_dir"])
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def semantic_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {}
        for f in fields(self):
            if f.name in _NON_SEMANTIC:
                continue
            v = getattr(self, f.name)
            if f.name == "snapshots":
                v = {k: [p.name for p in ps] for k, ps in v.items()}
            elif f.name == "inputs":
                v = {k: p.name for k, p in sorted(v.items())}
            d[f.name] = v
        return d

    def digest(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def candidates_path(self, snapshot: str) -> Path:
        return self.out_dir / snapshot / "candidates.jsonl"

    def snapshot_dir(self, snapshot: str) -> Path:
        return self.out_dir / snapshot


_SCALARS = {f.name for f in fields(PipelineConfig)} - {"snapshots", "inputs", "out_dir",
                                                        "distance_cache"}


def _read_mapping(path: Path) -> dict:
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def load_config(path: Path | str) -> PipelineConfig:
    """Parse a config file.  Relative paths resolve against its directory.

    Keys: ``snapshots`` (id -> list of traceroute JSONL files, one per
    merged cycle), ``inputs`` (sidecar name -> path), ``out_dir``,
    ``distance_cache`` and any scalar field of :class:`PipelineConfig`.
    ``detector: {window, c}`` is accepted as a nested alias.
    """
    path = Path(path)
    try:
        raw = _read_mapping(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    base = path.parent
    resolve = (lambda p: Path(p) if Path(p).is_absolute() else base / p)
    raw = dict(raw)
    detector = raw.pop("detector", {}) or {}
    kw: dict[str, Any] = {}
    snaps = raw.pop("snapshots", {}) or {}
    if isinstance(snaps, list):
        snaps = {"snapshot": snaps}
    kw["snapshots"] = {str(k): tuple(resolve(p) for p in ([v] if isinstance(v, str) else v))
                       for k, v in snaps.items()}
    kw["inputs"] = {k: resolve(v) for k, v in (raw.pop("inputs", {}) or {}).items()}
    if "out_dir" in raw:
        kw["out_dir"] = resolve(raw.pop("out_dir"))
    if raw.get("distance_cache"):
        kw["distance_cache"] = resolve(raw.pop("distance_cache"))
    raw.pop("distance_cache", None)
    for k in ("window", "c"):
        if k in detector:
            kw[k] = detector[k]
    for k, v in raw.items():
        if k not in _SCALARS:
            raise ConfigError(f"unknown config key {k!r}")
        kw[k] = v
    return PipelineConfig(**kw)


def check_readable(paths: list[Path]) -> None:
    bad = []
    for p in paths:
        try:
            with open(p, "rb") as fh:
                fh.read(1)
        except OSError as exc:
            bad.append(f"{p}: {exc.strerror or exc}")
    if bad:
        raise ConfigError("unreadable inputs: " + "; ".join(bad))
