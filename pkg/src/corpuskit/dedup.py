"""Near-duplicate removal with MinHash LSH, then exact removal with MD5.

Both passes run inside one ``language_Script`` partition, visit documents in
doc_id order and keep the first document of every duplicate group.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .cleaning import NO_SPACE_SCRIPTS
from .record import DocumentRecord, LanguageLabel

WORD = "word"
CODEPOINT = "codepoint"

_GL_NODES = 64


class MemoryBudgetExceeded(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# shingles

def shingle_unit(label: Optional[LanguageLabel], no_space=NO_SPACE_SCRIPTS) -> str:
    return CODEPOINT if (label is not None and label.script in no_space) else WORD


def text_units(text: str, unit: str) -> list:
    if unit == WORD:
        return text.split()
    if unit == CODEPOINT:
        return [c for c in text if not c.isspace()]
    raise ValueError(f"unknown shingle unit {unit!r}")


def _join(units, unit: str) -> str:
    return " ".join(units) if unit == WORD else "".join(units)


def shingle(text: str, n: int = 5, unit: Optional[str] = None, label: Optional[LanguageLabel] = None) -> set:
    """Set of n-gram shingles; a text shorter than ``n`` units is one shingle."""
    if n < 1:
        raise ValueError("n must be >= 1")
    unit = unit or shingle_unit(label)
    units = text_units(text, unit)
    if not units:
        return set()
    if len(units) < n:
        return {_join(units, unit)}
    return {_join(units[i:i + n], unit) for i in range(len(units) - n + 1)}


def shingle_hash_arrays(texts: Sequence[str], n: int, units_kind: Sequence[str]):
    """Hashed shingles for many texts at once: (hashes, offsets)."""
    flat = []
    offsets = np.zeros(len(texts) + 1, dtype=np.int64)
    for i, (text, unit) in enumerate(zip(texts, units_kind)):
        units = text_units(text, unit)
        flat.extend(units)
        offsets[i + 1] = offsets[i] + len(units)
    buf, starts, ends = kernels.units_to_buffer(flat)
    unit_h = kernels.unit_hashes(buf, starts, ends)
    return kernels.ngram_hashes(unit_h, offsets, n)


def hash_shingle(s: str, unit: str = WORD) -> int:
    """64-bit hash of one shingle string, consistent with ``shingle_hash_arrays``."""
    units = s.split(" ") if unit == WORD else list(s)
    buf, starts, ends = kernels.units_to_buffer(units)
    unit_h = kernels.unit_hashes(buf, starts, ends)
    grams, _ = kernels.ngram_hashes(unit_h, np.array([0, len(units)], dtype=np.int64), len(units))
    return int(grams[0])


# ---------------------------------------------------------------------------
# MinHash

@dataclass(frozen=True)
class HashFamily:
    """Seeded permutations h_i(x) = mix(a_i * x + b_i) over 64-bit shingle hashes."""

    num_perm: int
    seed: int
    a: np.ndarray = field(repr=False, compare=False)
    b: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def create(cls, num_perm: int = 128, seed: int = 1) -> "HashFamily":
        return _family(num_perm, seed)


@lru_cache(maxsize=16)
def _family(num_perm: int, seed: int) -> HashFamily:
    if num_perm < 1:
        raise ValueError("num_perm must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.integers(0, 2**64, size=num_perm, dtype=np.uint64, endpoint=False) | np.uint64(1)
    b = rng.integers(0, 2**64, size=num_perm, dtype=np.uint64, endpoint=False)
    return HashFamily(num_perm, seed, a, b)


@dataclass(frozen=True)
class MinHashSignature:
    minima: np.ndarray
    num_perm: int

    @property
    def is_empty(self) -> bool:
        return bool(np.all(self.minima == kernels.SENTINEL))

    def jaccard(self, other: "MinHashSignature") -> float:
        return estimate_jaccard(self.minima, other.minima)

    def __eq__(self, other):
        return isinstance(other, MinHashSignature) and np.array_equal(self.minima, other.minima)

    def __hash__(self):
        return hash(self.minima.tobytes())


def minhash(shingles: Iterable[str], num_perm: int = 128, seed: int = 1, unit: str = WORD) -> MinHashSignature:
    if num_perm < 16:
        raise ValueError("num_perm must be >= 16")
    family = HashFamily.create(num_perm, seed)
    hashes = np.array(sorted(hash_shingle(s, unit) for s in shingles), dtype=np.uint64)
    sig = kernels.minhash_signatures(hashes, np.array([0, len(hashes)], dtype=np.int64), family.a, family.b)
    return MinHashSignature(sig[0], num_perm)


def minhash_from_hashes(hashes: np.ndarray, num_perm: int = 128, seed: int = 1) -> MinHashSignature:
    family = HashFamily.create(num_perm, seed)
    hashes = np.ascontiguousarray(hashes, dtype=np.uint64)
    sig = kernels.minhash_signatures(hashes, np.array([0, len(hashes)], dtype=np.int64), family.a, family.b)
    return MinHashSignature(sig[0], num_perm)


def signatures(texts: Sequence[str], units_kind: Sequence[str], n: int, family: HashFamily) -> np.ndarray:
    hashes, offsets = shingle_hash_arrays(texts, n, units_kind)
    return kernels.minhash_signatures(hashes, offsets, family.a, family.b)


def estimate_jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of agreeing minima; 0 when either signature is empty."""
    if np.all(a == kernels.SENTINEL) or np.all(b == kernels.SENTINEL):
        return 0.0
    return float(np.count_nonzero(a == b)) / len(a)


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


# ---------------------------------------------------------------------------
# banding

def _gauss_legendre(lo: float, hi: float):
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def band_errors(threshold: float, b: int, r: int) -> tuple[float, float]:
    """(false-positive area below threshold, false-negative area above it)."""
    xs, ws = _gauss_legendre(0.0, threshold)
    fp = float(np.sum(ws * (1.0 - (1.0 - xs ** r) ** b)))
    xs, ws = _gauss_legendre(threshold, 1.0)
    fn = float(np.sum(ws * (1.0 - xs ** r) ** b))
    return fp, fn


def optimal_bands(threshold: float, num_perm: int, fp_weight: float = 0.5, fn_weight: float = 0.5) -> tuple[int, int]:
    """(bands, rows) with bands * rows <= num_perm minimizing the weighted S-curve error."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    if num_perm < 1:
        raise ValueError("num_perm must be >= 1")
    x_lo, w_lo = _gauss_legendre(0.0, threshold)
    x_hi, w_hi = _gauss_legendre(threshold, 1.0)
    best, best_err = (1, 1), np.inf
    for b in range(1, num_perm + 1):
        rs = np.arange(1, num_perm // b + 1)
        if len(rs) == 0:
            break
        fp = ((1.0 - (1.0 - x_lo[None, :] ** rs[:, None]) ** b) * w_lo).sum(axis=1)
        fn = (((1.0 - x_hi[None, :] ** rs[:, None]) ** b) * w_hi).sum(axis=1)
        err = fp_weight * fp + fn_weight * fn
        i = int(np.argmin(err))
        if err[i] < best_err:
            best, best_err = (b, int(rs[i])), float(err[i])
    return best


class LshIndex:
    def __init__(self, bands: int, rows: int, num_perm: Optional[int] = None):
        if num_perm is not None and bands * rows > num_perm:
            raise ValueError("bands * rows exceeds num_perm")
        self.bands = bands
        self.rows = rows
        self.tables: list[dict] = [dict() for _ in range(bands)]
        self.size = 0

    def _keys(self, minima: np.ndarray):
        r = self.rows
        for i in range(self.bands):
            yield i, minima[i * r:(i + 1) * r].tobytes()

    def insert(self, doc_id: int, minima: np.ndarray) -> None:
        for i, key in self._keys(minima):
            self.tables[i].setdefault(key, []).append(doc_id)
        self.size += 1

    def query(self, minima: np.ndarray) -> list:
        found = set()
        for i, key in self._keys(minima):
            bucket = self.tables[i].get(key)
            if bucket:
                found.update(bucket)
        return sorted(found)

    def approx_bytes(self, num_perm: int) -> int:
        # signature copy + one bucket entry per band, with dict/list overhead
        return self.size * (num_perm * 8 + self.bands * (self.rows * 8 + 120))


# ---------------------------------------------------------------------------
# dedup passes

@dataclass
class DedupParams:
    n: int = 5
    threshold: float = 0.7
    num_perm: int = 128
    seed: int = 1
    verify: bool = False
    memory_budget: Optional[int] = None
    batch_size: int = 4096


@dataclass
class DedupReport:
    input_docs: int = 0
    kept_docs: int = 0
    near_dup_clusters: int = 0
    exact_dup_groups: int = 0
    removals: list = field(default_factory=list)

    def merge(self, other: "DedupReport") -> "DedupReport":
        return DedupReport(
            self.input_docs,
            other.kept_docs,
            self.near_dup_clusters + other.near_dup_clusters,
            self.exact_dup_groups + other.exact_dup_groups,
            self.removals + other.removals,
        )

    def summary(self) -> dict:
        return {
            "input_docs": self.input_docs,
            "kept_docs": self.kept_docs,
            "near_dup_clusters": self.near_dup_clusters,
            "exact_dup_groups": self.exact_dup_groups,
            "removed": len(self.removals),
        }


def _ordered(records: Iterable[DocumentRecord]) -> list:
    recs = list(records)
    ids = [r.doc_id for r in recs]
    if any(i is None for i in ids):
        raise ValueError("dedup requires doc_id on every record")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate doc_id in partition")
    labels = {r.label_str for r in recs}
    if len(labels) > 1:
        raise ValueError(f"partition mixes labels: {sorted(map(str, labels))}")
    recs.sort(key=lambda r: r.doc_id)
    return recs


def near_dedup(records: Iterable[DocumentRecord], params: DedupParams = DedupParams(),
               bands: Optional[tuple[int, int]] = None) -> tuple[list, DedupReport]:
    recs = _ordered(records)
    report = DedupReport(input_docs=len(recs))
    if not recs:
        return [], report
    family = HashFamily.create(params.num_perm, params.seed)
    b, r = bands or optimal_bands(params.threshold, params.num_perm)
    index = LshIndex(b, r, params.num_perm)
    unit = shingle_unit(recs[0].label)
    kept_sigs: dict[int, np.ndarray] = {}
    kept_shingles: dict[int, set] = {}
    clusters = set()
    kept = []
    for lo in range(0, len(recs), params.batch_size):
        batch = recs[lo:lo + params.batch_size]
        sigs = signatures([x.text for x in batch], [unit] * len(batch), params.n, family)
        for rec, sig in zip(batch, sigs):
            match = None
            if not np.all(sig == kernels.SENTINEL):
                shingles = shingle(rec.text, params.n, unit) if params.verify else None
                for cand in index.query(sig):
                    est = estimate_jaccard(sig, kept_sigs[cand])
                    if est < params.threshold:
                        continue
                    if params.verify and jaccard(shingles, kept_shingles[cand]) < params.threshold:
                        continue
                    match = (cand, est)
                    break
            if match is not None:
                clusters.add(match[0])
                report.removals.append({"removed_id": rec.doc_id, "kept_id": match[0],
                                        "stage": "near", "estimate": match[1]})
                continue
            kept.append(rec)
            if not np.all(sig == kernels.SENTINEL):
                kept_sigs[rec.doc_id] = sig
                index.insert(rec.doc_id, sig)
                if params.verify:
                    kept_shingles[rec.doc_id] = shingles
                if params.memory_budget is not None and index.approx_bytes(params.num_perm) > params.memory_budget:
                    raise MemoryBudgetExceeded(
                        f"LSH index needs ~{index.approx_bytes(params.num_perm)} bytes, "
                        f"budget is {params.memory_budget}")
    report.kept_docs = len(kept)
    report.near_dup_clusters = len(clusters)
    return kept, report


def md5_digest(text: str) -> str:
    return hashlib.md5(text.encode("utf-8")).hexdigest()


def exact_dedup(records: Iterable[DocumentRecord]) -> tuple[list, DedupReport]:
    recs = _ordered(records)
    report = DedupReport(input_docs=len(recs))
    first: dict[str, int] = {}
    groups = set()
    kept = []
    for rec in recs:
        digest = md5_digest(rec.text)
        owner = first.get(digest)
        if owner is None:
            first[digest] = rec.doc_id
            kept.append(rec)
        else:
            groups.add(digest)
            report.removals.append({"removed_id": rec.doc_id, "kept_id": owner, "stage": "exact", "estimate": 1.0})
    report.kept_docs = len(kept)
    report.exact_dup_groups = len(groups)
    return kept, report


def dedup_partition(records: Iterable[DocumentRecord], params: DedupParams = DedupParams()) -> tuple[list, DedupReport]:
    """MinHash pass followed by the exact pass."""
    near_kept, near_report = near_dedup(records, params)
    kept, exact_report = exact_dedup(near_kept)
    # point near removals at the survivor when their representative went in the exact pass
    final = {r["removed_id"]: r["kept_id"] for r in exact_report.removals}
    for r in near_report.removals:
        r["kept_id"] = final.get(r["kept_id"], r["kept_id"])
    return kept, near_report.merge(exact_report)
