"""Resource tiers, per-category sample rates and train/valid splits."""
from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .record import DocumentRecord
from .stats import count_tokens

SAMPLE_STREAM = 0
EXTRA_STREAM = 1
SPLIT_STREAM = 2

KINDS = ("inst", "mono", "code", "curated")


class ResourceTier(str, enum.Enum):
    HIGH = "high"
    MEDIUM_HIGH = "medium-high"
    MEDIUM = "medium"
    MEDIUM_LOW = "medium-low"
    LOW = "low"


def classify_tier(token_count: int) -> ResourceTier:
    if token_count < 0:
        raise ValueError("token_count must be >= 0")
    if token_count > 1_000_000_000:
        return ResourceTier.HIGH
    if token_count > 100_000_000:
        return ResourceTier.MEDIUM_HIGH
    if token_count > 10_000_000:
        return ResourceTier.MEDIUM
    if token_count > 1_000_000:
        return ResourceTier.MEDIUM_LOW
    return ResourceTier.LOW


def mix_category(kind: str, token_count: int, language: Optional[str] = None) -> str:
    """Mix category name for a corpus, e.g. ``mono medium-low`` or ``inst medium-high+``."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if kind in ("code", "curated"):
        return kind
    tier = classify_tier(token_count).value
    if kind == "inst" and 500_000_000 < token_count < 1_000_000_000:
        tier = "medium-high+"
    name = f"{kind} {tier}"
    if kind == "mono" and language == "eng":
        name += " EN"
    return name


def round_half_away(value: Decimal) -> int:
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def expected_tokens(original: int, rate) -> int:
    return round_half_away(Decimal(str(rate)) * Decimal(original))


@dataclass
class MixRow:
    category: str
    original_tokens: int
    rate: float
    expected_tokens: int
    realized_tokens: int
    percentage: float = 0.0
    original_docs: int = 0
    realized_docs: int = 0


@dataclass
class MixPlan:
    rows: list = field(default_factory=list)
    seed: Optional[int] = None

    @classmethod
    def from_counts(cls, entries: Iterable[tuple], seed: Optional[int] = None) -> "MixPlan":
        """Build a plan from (category, original_tokens, rate[, realized_tokens]) tuples.

        Missing realized counts default to the expected count.
        """
        rows = []
        for entry in entries:
            category, original, rate = entry[:3]
            exp = expected_tokens(original, rate)
            realized = entry[3] if len(entry) > 3 and entry[3] is not None else exp
            rows.append(MixRow(category, original, rate, exp, realized))
        plan = cls(rows, seed)
        plan._fill_percentages()
        return plan

    def _fill_percentages(self) -> None:
        total = self.realized_total
        for row in self.rows:
            row.percentage = row.realized_tokens / total if total else 0.0

    @property
    def realized_total(self) -> int:
        return sum(r.realized_tokens for r in self.rows)

    @property
    def expected_total(self) -> int:
        return sum(r.expected_tokens for r in self.rows)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r), ensure_ascii=False) + "\n" for r in self.rows)

    def to_table(self) -> str:
        header = ("Data", "Original Counts", "Sample Rate", "Expected Counts", "Final Counts", "Percentage")
        body = [
            (r.category, f"{r.original_tokens:,}", f"{r.rate:g}", f"{r.expected_tokens:,}",
             f"{r.realized_tokens:,}", f"{100 * r.percentage:.2f}%")
            for r in self.rows
        ]
        body.append(("total", f"{sum(r.original_tokens for r in self.rows):,}", "",
                     f"{self.expected_total:,}", f"{self.realized_total:,}", "100.00%" if self.rows else "0.00%"))
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        lines = []
        for k, row in enumerate([header] + body):
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if k == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def copies_for(doc_ids: Sequence[int], rate: float, seed: int) -> np.ndarray:
    """How many times each document is emitted at ``rate``."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    ids = np.asarray(doc_ids, dtype=np.uint64)
    whole = math.floor(rate)
    frac = rate - whole
    if rate <= 1.0:
        return (kernels.uniform(seed, ids, SAMPLE_STREAM) < rate).astype(np.int64)
    if frac == 0:
        return np.full(len(ids), whole, dtype=np.int64)
    return whole + (kernels.uniform(seed, ids, EXTRA_STREAM) < frac).astype(np.int64)


def sample_documents(docs: Iterable[DocumentRecord], rate: float, seed: int,
                     batch: int = 8192) -> Iterator[DocumentRecord]:
    """Down- or up-sample a stream by a per-document seeded hash.

    ``rate <= 1`` keeps each document with probability ``rate``; ``rate > 1``
    emits ``floor(rate)`` adjacent copies plus one more with probability
    ``rate - floor(rate)``.  The decision for a document depends only on
    (seed, doc_id), never on stream order.
    """
    buf = []
    for doc in docs:
        buf.append(doc)
        if len(buf) >= batch:
            yield from _emit(buf, rate, seed)
            buf = []
    if buf:
        yield from _emit(buf, rate, seed)


def _emit(buf, rate, seed):
    counts = copies_for([d.doc_id for d in buf], rate, seed)
    for doc, k in zip(buf, counts):
        for _ in range(int(k)):
            yield doc


def build_mix(corpora: Mapping[str, Iterable[DocumentRecord]], mix_spec: Mapping[str, float], seed: int,
              sink: Optional[Callable[[str, DocumentRecord], None]] = None):
    """Sample every category at its rate.

    Returns ``(mixed, plan)``; ``mixed`` maps category to emitted documents
    unless ``sink`` is given, in which case documents are handed to it and
    ``mixed`` is None.
    """
    missing = [c for c in corpora if c not in mix_spec]
    if missing:
        raise KeyError(f"no sample rate configured for categories: {missing}")
    mixed = None if sink is not None else defaultdict(list)
    rows = []
    for category in [c for c in mix_spec if c in corpora]:
        rate = mix_spec[category]
        original = realized = n_in = n_out = 0
        docs = list(corpora[category])
        for doc in docs:
            original += count_tokens(doc.text)
            n_in += 1
        for doc in sample_documents(sorted(docs, key=lambda d: d.doc_id), rate, seed):
            realized += count_tokens(doc.text)
            n_out += 1
            if sink is not None:
                sink(category, doc)
            else:
                mixed[category].append(doc)
        rows.append((category, original, rate, realized, n_in, n_out))
    plan = MixPlan.from_counts([r[:4] for r in rows], seed)
    for row, r in zip(plan.rows, rows):
        row.original_docs, row.realized_docs = r[4], r[5]
    return (dict(mixed) if mixed is not None else None), plan


def split_train_valid(corpus: Iterable[DocumentRecord], valid_fraction: float = 0.01, valid_cap: int = 1000,
                      seed: int = 0) -> tuple[list, list]:
    """Per-label split; the valid set is the ``min(cap, round(fraction*n))`` lowest-hash docs."""
    if not 0.0 <= valid_fraction <= 1.0:
        raise ValueError("valid_fraction must be in [0, 1]")
    by_label = defaultdict(list)
    for rec in corpus:
        by_label[rec.label_str].append(rec)
    train, valid = [], []
    for label in sorted(by_label, key=str):
        recs = sorted(by_label[label], key=lambda r: r.doc_id)
        n_valid = min(valid_cap, round_half_away(Decimal(str(valid_fraction)) * len(recs)))
        u = kernels.uniform(seed, np.array([r.doc_id for r in recs], dtype=np.uint64), SPLIT_STREAM)
        chosen = set(np.lexsort((np.arange(len(recs)), u))[:n_valid].tolist())
        for i, rec in enumerate(recs):
            (valid if i in chosen else train).append(rec)
    return train, valid
