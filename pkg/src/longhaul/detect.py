"""Latency-discontinuity detection within single traceroutes.

A boundary between two consecutive responsive hops is scored by the
difference of the median RTT in the windows to its right and left.  Scores
that exceed ``c`` times the interquartile range of every score in the same
responsive run are level-shift candidates.  A single step produces a
ramp of elevated scores around it, so within each contiguous block of
candidate boundaries only the peak is flagged.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import islice
from statistics import median
from typing import Iterable, Iterator, Sequence

import numpy as np

from .model import CandidateLink, Traceroute


@dataclass(frozen=True)
class LevelShiftConfig:
    window: int = 2
    c: float = 1.0

    def __post_init__(self):
        if not isinstance(self.window, int) or self.window < 1:
            raise ValueError("window must be an integer >= 1")
        if not self.c > 0:
            raise ValueError("c must be positive")


def _runs(rtts: Sequence[float | None]) -> Iterator[tuple[int, list[float]]]:
    """Maximal stretches of non-missing values as ``(start, values)``."""
    start, vals = None, []
    for i, v in enumerate(rtts):
        if v is None:
            if start is not None:
                yield start, vals
            start, vals = None, []
        else:
            if start is None:
                start = i
            vals.append(v)
    if start is not None:
        yield start, vals


def _window_diffs(vals: list[float], w: int) -> list[float]:
    n = len(vals)
    return [median(vals[i + 1:i + 1 + w]) - median(vals[max(0, i + 1 - w):i + 1])
            for i in range(n - 1)]


def _candidates(diffs: list[float], c: float) -> list[bool]:
    d = np.asarray(diffs, dtype=float)
    q1, q3 = np.percentile(d, [25, 75])
    spread = q3 - q1
    if spread > 0:
        return [x > 0 and x > c * spread for x in diffs]
    spread = d.max() - d.min()
    if spread > 0:
        return [x > 0 and x > c * spread for x in diffs]
    # every score identical: only a lone boundary can stand out
    return [x > 0 and len(diffs) == 1 for x in diffs]


def _peaks(cand: list[bool], diffs: list[float], vals: list[float]) -> list[bool]:
    out = [False] * len(cand)
    i = 0
    while i < len(cand):
        if not cand[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(cand) and cand[j + 1]:
            j += 1
        best = max(range(i, j + 1), key=lambda k: (diffs[k], vals[k + 1] - vals[k], -k))
        out[best] = True
        i = j + 1
    return out


def level_shift_flags(rtts: Sequence[float | None], cfg: LevelShiftConfig = LevelShiftConfig()
                      ) -> list[bool]:
    """Flag positive level shifts; ``flags[k]`` covers the boundary ``k -> k+1``.

    ``None`` entries are unresponsive hops.  They split the series into runs
    that are scored independently, and boundaries touching them never flag.
    """
    flags = [False] * max(0, len(rtts) - 1)
    for start, vals in _runs(rtts):
        if len(vals) < 2:
            continue
        diffs = _window_diffs(vals, cfg.window)
        for k, hit in enumerate(_peaks(_candidates(diffs, cfg.c), diffs, vals)):
            if hit:
                flags[start + k] = True
    return flags


def _dense_hops(trace: Traceroute) -> list:
    """Hops laid out by index, with ``None`` where an index is missing."""
    if not trace.hops:
        return []
    first = trace.hops[0].index
    dense = [None] * (trace.hops[-1].index - first + 1)
    for h in trace.hops:
        dense[h.index - first] = h
    return dense


def dense_rtts(trace: Traceroute) -> list[float | None]:
    return [None if h is None else h.rtt for h in _dense_hops(trace)]


def extract_candidates(trace: Traceroute, flags: Sequence[bool]) -> list[CandidateLink]:
    """Candidates at flagged boundaries whose four surrounding hops all answered.

    ``flags`` index boundaries of :func:`dense_rtts` for this trace.
    """
    dense = _dense_hops(trace)
    rtts = [None if h is None else h.rtt for h in dense]
    out = []
    for k, hit in enumerate(flags):
        if not hit or k == 0 or k + 2 >= len(dense):
            continue
        if any(rtts[j] is None for j in (k - 1, k, k + 1, k + 2)):
            continue
        near, far = dense[k], dense[k + 1]
        diff = rtts[k + 1] - rtts[k]
        if diff <= 0:
            continue
        out.append(CandidateLink(near.address, far.address, near.index, diff, trace.ref,
                                 far.mpls_labels))
    return out


def detect_trace(trace: Traceroute, cfg: LevelShiftConfig = LevelShiftConfig()
                 ) -> list[CandidateLink]:
    return extract_candidates(trace, level_shift_flags(dense_rtts(trace), cfg))


# --------------------------------------------------------------------------
# sampling


def trace_uniform(seed: int, ref: tuple[str, ...]) -> float:
    """Deterministic U[0,1) draw keyed by ``(seed, trace identity)``.

    Keying by identity instead of stream position keeps selections stable
    under any partitioning of the corpus across workers.
    """
    key = "\x1f".join((str(seed), *ref)).encode()
    h = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0 ** 64


def keep_trace(ref: tuple[str, ...], fraction: float | Fraction, seed: int) -> bool:
    return fraction >= 1 or trace_uniform(seed, ref) < fraction


def _check_fraction(fraction: float | Fraction) -> None:
    if not 0 < fraction <= 1:
        raise ValueError(f"sample fraction must lie in (0, 1], got {fraction}")


def downsample(traces: Iterable[Traceroute], fraction: float | Fraction, seed: int
               ) -> Iterator[Traceroute]:
    """Keep each trace independently with probability ``fraction``."""
    _check_fraction(fraction)
    for t in traces:
        if keep_trace(t.ref, fraction, seed):
            yield t


# --------------------------------------------------------------------------
# corpus driver


@dataclass
class DetectStats:
    traces: int = 0
    hop_pairs: int = 0
    traces_with_candidates: int = 0
    candidates: int = 0

    def add(self, other: DetectStats) -> None:
        self.traces += other.traces
        self.hop_pairs += other.hop_pairs
        self.traces_with_candidates += other.traces_with_candidates
        self.candidates += other.candidates

    def to_dict(self) -> dict:
        return dict(vars(self))


def _detect_chunk(args: tuple[list[Traceroute], LevelShiftConfig]
                  ) -> tuple[list[CandidateLink], DetectStats]:
    chunk, cfg = args
    stats = DetectStats()
    out: list[CandidateLink] = []
    for t in chunk:
        found = detect_trace(t, cfg)
        stats.traces += 1
        stats.hop_pairs += max(0, len(t.hops) - 1)
        if found:
            stats.traces_with_candidates += 1
            stats.candidates += len(found)
            out.extend(found)
    return out, stats


def _chunks(items: Iterable, size: int) -> Iterator[list]:
    it = iter(items)
    while chunk := list(islice(it, size)):
        yield chunk


def detect_corpus(traces: Iterable[Traceroute], cfg: LevelShiftConfig = LevelShiftConfig(),
                  jobs: int = 1, chunk_size: int = 2000
                  ) -> tuple[list[CandidateLink], DetectStats]:
    """Run detection over a corpus; output order follows input order for any ``jobs``."""
    stats = DetectStats()
    candidates: list[CandidateLink] = []
    work = ((chunk, cfg) for chunk in _chunks(traces, chunk_size))
    if jobs <= 1:
        results = map(_detect_chunk, work)
        for found, s in results:
            candidates.extend(found)
            stats.add(s)
        return candidates, stats
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for found, s in pool.map(_detect_chunk, work):
            candidates.extend(found)
            stats.add(s)
    return candidates, stats
