from __future__ import annotations

import json
from pathlib import Path

import pytest

from longhaul.model import GeoPoint, LongHaulLink, Relationship, RouterPair
from longhaul.synthetic import generate

CONTINENT_OF = {"US": "NA", "CA": "NA", "DE": "EU", "FR": "EU", "GB": "EU", "NL": "EU",
                "JP": "AS", "SG": "AS", "AU": "OC", "BR": "SA", "ZA": "AF"}
LOCATION_OF = {"US": (40.0, -100.0), "CA": (56.0, -106.0), "DE": (51.0, 10.0),
               "FR": (46.0, 2.0), "GB": (53.0, -2.0), "NL": (52.0, 5.0), "JP": (36.0, 138.0),
               "SG": (1.3, 103.8), "AU": (-25.0, 134.0), "BR": (-10.0, -52.0),
               "ZA": (-29.0, 24.0)}


def geo(cc: str) -> GeoPoint:
    lat, lon = LOCATION_OF[cc]
    return GeoPoint(lat, lon, cc, CONTINENT_OF[cc])


def make_link(near: str, far: str, ncc: str, fcc: str, diff: float = 80.0,
              nasn: int | None = 1, fasn: int | None = 2, mpls: bool = False,
              rel: Relationship = Relationship.UNKNOWN) -> LongHaulLink:
    pair = RouterPair(near, far, frozenset({(f"10.0.0.{len(near)}", f"10.0.1.{len(far)}")}),
                      diff, 1, int(mpls))
    return LongHaulLink(pair, geo(ncc), geo(fcc), nasn, fasn, mpls, rel)


def write_trace_file(path: Path, traces: list[dict]) -> Path:
    path.write_text("".join(json.dumps(t) + "\n" for t in traces))
    return path


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The planted-truth corpus with two snapshots, generated once per session."""
    return generate(tmp_path_factory.mktemp("corpus"), seed=7, snapshots=2)


@pytest.fixture(scope="session")
def corpus_run(corpus):
    """``corpus`` after one full single-worker run."""
    from longhaul.config import load_config
    from longhaul.pipeline import run

    cfg = load_config(corpus.config)
    manifests = run(cfg)
    return cfg, manifests


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines: dict[int, str] = {}

    def record(number: int, text: str):
        # call early with the statement, again with measured values
        lines[number] = text

    yield record
    failed = getattr(request.node, "_failed", False)
    for number, text in lines.items():
        _ACCEPTANCE.append(f"{'FAIL' if failed else 'PASS'} [{number}] {text}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and rep.failed:
        item._failed = True


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
