"""Writing-system detection: one dominant ISO 15924 script per dataset."""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

SAMPLE_LINES = 100
MAX_CHUNK = 2000
MIN_FRACTION = 0.5
NOT_COUNTED = ("Zyyy", "Zinh", "Zzzz")
# kana present alongside Han reads as Japanese
_JAPANESE_PARTS = ("Hira", "Kana", "Hani")


class ScriptTable:
    """Codepoint -> script lookup over sorted ranges."""

    def __init__(self, starts, codes, names):
        self.starts = np.asarray(starts, dtype=np.uint32)
        self.codes = np.asarray(codes, dtype=np.int32)
        self.names = list(names)
        self.skip = np.array([n in NOT_COUNTED for n in self.names])

    @classmethod
    def from_lines(cls, lines):
        starts, codes, names, index = [], [], [], {}
        expected = 0
        for raw in lines:
            if not raw.strip() or raw.startswith("#"):
                continue
            lo, hi, name = raw.split()
            lo, hi = int(lo, 16), int(hi, 16)
            if lo != expected:
                # gaps are unassigned codepoints
                starts.append(expected)
                codes.append(index.setdefault("Zzzz", len(index)))
            starts.append(lo)
            codes.append(index.setdefault(name, len(index)))
            expected = hi
        names = [None] * len(index)
        for name, i in index.items():
            names[i] = name
        return cls(starts, codes, names)

    def script_ids(self, cps: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.starts, cps, side="right") - 1
        return self.codes[pos]

    def script_of(self, char: str) -> str:
        return self.names[int(self.script_ids(kernels.codepoints(char))[0])]

    def count(self, text: str) -> np.ndarray:
        """Per-script codepoint counts, indexed like ``names``; uncounted scripts zeroed."""
        counts = np.bincount(self.script_ids(kernels.codepoints(text)), minlength=len(self.names))
        counts[self.skip] = 0
        return counts


@lru_cache(maxsize=1)
def default_table() -> ScriptTable:
    with resources.files("corpuskit.data").joinpath("script_ranges.tsv").open(encoding="utf-8") as fh:
        return ScriptTable.from_lines(fh)


@dataclass
class ScriptVote:
    counts: dict = field(default_factory=dict)
    total: int = 0

    @classmethod
    def from_texts(cls, texts, table: Optional[ScriptTable] = None, max_chunk: int = MAX_CHUNK) -> "ScriptVote":
        table = table or default_table()
        acc = np.zeros(len(table.names), dtype=np.int64)
        for text in texts:
            acc += table.count(text[:max_chunk])
        counts = {table.names[i]: int(acc[i]) for i in np.flatnonzero(acc)}
        return cls(counts, int(acc.sum()))


def merge_composites(counts: Mapping[str, int]) -> dict:
    merged = dict(counts)
    if merged.get("Hira", 0) or merged.get("Kana", 0):
        merged["Jpan"] = sum(merged.pop(p, 0) for p in _JAPANESE_PARTS) + merged.get("Jpan", 0)
    return merged


def dominant_script(vote: ScriptVote, min_fraction: float = MIN_FRACTION) -> Optional[str]:
    """Argmax script if it holds at least ``min_fraction`` of the vote.

    Returns None (inconclusive) on an empty vote, on ties and when the
    share is below ``min_fraction``.
    """
    if vote.total <= 0 or not vote.counts:
        return None
    counts = merge_composites(vote.counts)
    best = max(counts.values())
    leaders = [s for s, c in counts.items() if c == best]
    if len(leaders) != 1:
        return None
    if best / vote.total < min_fraction:
        return None
    return leaders[0]


def sample_lines(lines: Sequence[str], k: int, seed: int) -> list:
    if len(lines) <= k:
        return list(lines)
    idx = sorted(random.Random(seed).sample(range(len(lines)), k))
    return [lines[i] for i in idx]


def detect_script(
    lines: Sequence[str],
    language: str,
    history: Optional[Mapping[str, str]] = None,
    defaults: Optional[Mapping[str, str]] = None,
    seed: int = 0,
    min_fraction: float = MIN_FRACTION,
    table: Optional[ScriptTable] = None,
) -> Optional[str]:
    """Pick one script for a dataset.

    Tries, in order: a seeded sample of up to 100 lines, the first line of
    that sample, the script previously detected for ``language``, the
    default-script map, and finally None.
    """
    script, _ = detect_script_steps(lines, language, history, defaults, seed, min_fraction, table)
    return script


def detect_script_steps(lines, language, history=None, defaults=None, seed=0,
                        min_fraction=MIN_FRACTION, table=None):
    sample = sample_from_text(lines, seed, min_fraction, table)
    if sample is not None:
        return sample
    return resolve_fallback(language, history, defaults)


def sample_from_text(lines, seed=0, min_fraction=MIN_FRACTION, table=None):
    """First two steps of the chain: returns (script, step) or None."""
    sample = sample_lines(lines, SAMPLE_LINES, seed)
    if sample:
        script = dominant_script(ScriptVote.from_texts(sample, table), min_fraction)
        if script is not None:
            return script, "sample"
        script = dominant_script(ScriptVote.from_texts(sample[:1], table), min_fraction)
        if script is not None:
            return script, "first_line"
    return None


def resolve_fallback(language, history=None, defaults=None):
    if history and language in history:
        return history[language], "history"
    if defaults and language in defaults:
        return defaults[language], "default_map"
    log.warning("no script detected for %r; using None", language)
    return None, "none"
