"""Corpus statistics, Unicode script distributions and source distributions."""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Optional
from urllib.parse import urlsplit

import numpy as np

from .record import DocumentRecord


def count_tokens(text: str) -> int:
    """Whitespace tokens: maximal runs of non-whitespace codepoints."""
    return len(text.split())


@dataclass
class LabelCounts:
    docs: int = 0
    tokens: int = 0

    @property
    def avg_tokens_per_doc(self) -> float:
        return self.tokens / self.docs if self.docs else 0.0


@dataclass
class CorpusStats:
    per_label: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, counts: Mapping[str, tuple]) -> "CorpusStats":
        return cls({k: LabelCounts(int(d), int(t)) for k, (d, t) in counts.items()})

    def add(self, label: str, tokens: int) -> None:
        c = self.per_label.setdefault(label, LabelCounts())
        c.docs += 1
        c.tokens += tokens

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        out = CorpusStats({k: LabelCounts(v.docs, v.tokens) for k, v in self.per_label.items()})
        for k, v in other.per_label.items():
            c = out.per_label.setdefault(k, LabelCounts())
            c.docs += v.docs
            c.tokens += v.tokens
        return out

    @property
    def docs(self) -> int:
        return sum(c.docs for c in self.per_label.values())

    @property
    def tokens(self) -> int:
        return sum(c.tokens for c in self.per_label.values())

    @property
    def avg_tokens_per_doc(self) -> float:
        docs = self.docs
        return self.tokens / docs if docs else 0.0

    @property
    def languages_total(self) -> int:
        return len(self.per_label)

    def languages_over(self, tokens: int) -> int:
        return sum(1 for c in self.per_label.values() if c.tokens > tokens)

    @property
    def languages_over_100k(self) -> int:
        return self.languages_over(100_000)

    @property
    def languages_over_1m(self) -> int:
        return self.languages_over(1_000_000)

    def summary(self) -> dict:
        return {
            "docs": self.docs,
            "tokens": self.tokens,
            "avg_tokens_per_doc": self.avg_tokens_per_doc,
            "languages_total": self.languages_total,
            "languages_over_100k": self.languages_over_100k,
            "languages_over_1m": self.languages_over_1m,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps({"label": "__all__", **self.summary()})]
        for label in sorted(self.per_label):
            c = self.per_label[label]
            lines.append(json.dumps({"label": label, "docs": c.docs, "tokens": c.tokens,
                                     "avg_tokens_per_doc": c.avg_tokens_per_doc}, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    def to_table(self, name: str = "corpus") -> str:
        header = ("Dataset", "N Lang", "N Lang Counted", "N Docs", "N Tokens", "Avg Tokens/Doc")
        row = (name, str(self.languages_total), str(self.languages_over_100k),
               f"{self.docs / 1e6:,.2f}", f"{self.tokens / 1e6:,.2f}", f"{self.avg_tokens_per_doc:.2f}")
        widths = [max(len(a), len(b)) for a, b in zip(header, row)]
        fmt = lambda r: "  ".join([r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])])
        return "\n".join([fmt(header), "  ".join("-" * w for w in widths), fmt(row)]) + "\n"


def corpus_stats(corpus: Iterable[DocumentRecord]) -> CorpusStats:
    stats = CorpusStats()
    for rec in corpus:
        stats.add(rec.label_str or "None", count_tokens(rec.text))
    return stats


def block_distribution(corpus: Iterable[DocumentRecord], table=None) -> dict:
    """Per-label fraction of script-bearing codepoints per Unicode script."""
    from .scripts import default_table

    table = table or default_table()
    acc: dict = {}
    for rec in corpus:
        label = rec.label_str or "None"
        counts = table.count(rec.text)
        if label in acc:
            acc[label] += counts
        else:
            acc[label] = counts.astype(np.int64)
    out = {}
    for label, counts in acc.items():
        total = int(counts.sum())
        if total == 0:
            continue
        out[label] = {table.names[i]: int(counts[i]) / total for i in np.flatnonzero(counts)}
    return out


def block_distribution_csv(dist: Mapping[str, Mapping[str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "script", "fraction"])
    for label in sorted(dist):
        for script in sorted(dist[label]):
            writer.writerow([label, script, repr(dist[label][script])])
    return buf.getvalue()


@lru_cache(maxsize=1)
def _extractor():
    import tldextract

    # bundled public suffix snapshot only; never touch the network
    return tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)


def registrable_domain(url: str) -> Optional[str]:
    try:
        host = urlsplit(url).hostname
    except ValueError:
        return None
    if not host:
        return None
    ext = _extractor()(host)
    if hasattr(type(ext), "top_domain_under_public_suffix"):
        domain = ext.top_domain_under_public_suffix
    else:  # tldextract < 5.3
        domain = ext.registered_domain
    return domain or None


@dataclass
class SourceDistribution:
    sources: dict = field(default_factory=dict)
    domains: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "source", "name": k, "docs": v}, ensure_ascii=False)
                 for k, v in self.sources.items()]
        lines += [json.dumps({"kind": "domain", "name": k, "docs": v}, ensure_ascii=False)
                  for k, v in self.domains.items()]
        return "".join(line + "\n" for line in lines)


def _sorted_counts(counter: Counter) -> dict:
    return dict(sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])))


def source_distribution(corpus: Iterable[DocumentRecord]) -> SourceDistribution:
    sources: Counter = Counter()
    domains: Counter = Counter()
    for rec in corpus:
        sources[rec.source] += 1
        if rec.url:
            domain = registrable_domain(rec.url)
            if domain:
                domains[domain] += 1
    return SourceDistribution(_sorted_counts(sources), _sorted_counts(domains))

