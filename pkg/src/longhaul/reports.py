"""Deterministic CSV/JSON serialization of links, candidates and report tables."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from .model import CandidateLink, GeoPoint, LongHaulLink, Relationship, RouterPair

LINK_COLUMNS = ("near_router", "far_router", "min_diff_ms", "samples", "near_cc", "far_cc",
                "near_cont", "far_cont", "near_asn", "far_asn", "mpls", "relationship",
                "near_lat", "near_lon", "far_lat", "far_lon")


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, (tuple, list, frozenset, set)):
        return ";".join(_cell(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v))
    return str(getattr(v, "value", v))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o: Any) -> Any:
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if hasattr(o, "value"):
        return o.value
    if hasattr(o, "item"):  # numpy scalars
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path: Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


# --------------------------------------------------------------------------
# long-haul links


def link_row(link: LongHaulLink) -> tuple:
    ng, fg = link.near_geo, link.far_geo
    return (link.near_router, link.far_router, link.min_diff_ms, link.pair.sample_count,
            ng and ng.country, fg and fg.country, ng and ng.continent, fg and fg.continent,
            link.near_asn, link.far_asn, link.mpls_visible, link.relationship,
            ng and ng.lat, ng and ng.lon, fg and fg.lat, fg and fg.lon)


def write_links_csv(path: Path, links: Iterable[LongHaulLink]) -> None:
    write_csv(path, LINK_COLUMNS, (link_row(l) for l in links))


def _opt(s: str, conv=str):
    return None if s == "" else conv(s)


def read_links_csv(path: Path) -> list[LongHaulLink]:
    """Links from the CSV form.  Address pairs are not part of it and come back empty."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            def geo(side):
                cc = _opt(r[f"{side}_cc"])
                if cc is None:
                    return None
                return GeoPoint(float(r[f"{side}_lat"]), float(r[f"{side}_lon"]), cc,
                                _opt(r[f"{side}_cont"]))
            mpls = r["mpls"] == "1"
            pair = RouterPair(r["near_router"], r["far_router"], frozenset(),
                              float(r["min_diff_ms"]), int(r["samples"]), int(mpls))
            out.append(LongHaulLink(pair, geo("near"), geo("far"), _opt(r["near_asn"], int),
                                    _opt(r["far_asn"], int), mpls,
                                    Relationship(r["relationship"])))
    return out


def write_jsonl(path: Path, records: Iterable[Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_links_jsonl(path: Path) -> list[LongHaulLink]:
    with open(path, encoding="utf-8") as fh:
        return [LongHaulLink.from_dict(json.loads(line)) for line in fh if line.strip()]


def read_candidates(path: Path) -> list[CandidateLink]:
    with open(path, encoding="utf-8") as fh:
        return [CandidateLink.from_dict(json.loads(line)) for line in fh if line.strip()]

