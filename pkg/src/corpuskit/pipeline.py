"""Pipeline stages that turn a manifest of raw files into corpus versions.

Directory layout under the output root::

    ingested/<file>.jsonl                  harmonized records, no label yet
    noisy/<label>/<file>.jsonl             labelled records
    cleaned/<label>/<file>.jsonl
    deduplicated/<label>/<file>.jsonl
    split/<label>/{train,valid}.jsonl
    mix/<label>/mix.jsonl, mix/plan.{jsonl,txt}
    reports/*.jsonl

Each version is built in a staging directory and renamed into place.
"""
from __future__ import annotations

import importlib
import json
import logging
import shutil
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

from . import stats as stats_mod
from .cleaning import Lexicons, ThresholdConfig, filter_document, modify_document, re_identify_language
from .config import PipelineConfig, STAGES, load_manifest, load_mix_spec
from .dedup import DedupParams, MemoryBudgetExceeded, dedup_partition
from .langnorm import ResolutionTables, load_default_scripts, make_label, normalize_code
from .mixing import MixPlan, copies_for, mix_category, split_train_valid
from .record import (AtomicWriter, DocumentRecord, RecordError, encode_jsonl, make_doc_id,
                     read_jsonl, record_from_obj, split_doc_id, write_json_lines, write_jsonl)
from .scripts import resolve_fallback, sample_from_text

log = logging.getLogger(__name__)

VERSION_OF = {
    "ingest": "ingested",
    "normalize": "noisy",
    "clean": "cleaned",
    "dedup": "deduplicated",
    "split": "split",
    "mix": "mix",
}
REQUIRES = {
    "normalize": "ingested",
    "clean": "noisy",
    "dedup": "cleaned",
    "split": "deduplicated",
    "mix": "deduplicated",
}
STATS_VERSIONS = ("noisy", "cleaned", "deduplicated", "split", "mix")

# keys owned by the manifest; raw values under these names are dropped
_MANIFEST_KEYS = {"doc_id", "collection", "source", "original_code", "label", "label_retained"}

OK, DATA_ERROR, USAGE_ERROR = 0, 1, 2


class PrerequisiteError(RuntimeError):
    pass


@dataclass
class StageResult:
    stage: str
    status: int = OK
    report: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    message: str = ""


# ---------------------------------------------------------------------------
# helpers

def _pmap(fn, items, workers: int):
    """Order-preserving map, in worker processes when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _file_name(idx: int) -> str:
    return f"{idx:05d}.jsonl"


def partitions(root: Path) -> list:
    """(label, [files]) for every label directory under a version root, sorted."""
    if not root.is_dir():
        return []
    out = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        out.append((sub.name, sorted(sub.glob("*.jsonl"))))
    return out


def _require(config: PipelineConfig, version: str) -> Path:
    path = config.output / version
    if not path.is_dir():
        raise PrerequisiteError(f"missing prerequisite version {version!r} under {config.output}")
    return path


class _Staging:
    def __init__(self, config: PipelineConfig, version: str):
        self.final = config.output / version
        self.path = config.output / f".{version}.staging"
        if self.path.exists():
            shutil.rmtree(self.path)
        self.path.mkdir(parents=True)

    def publish(self) -> None:
        old = self.final.with_name(f".{self.final.name}.old")
        if old.exists():
            shutil.rmtree(old)
        if self.final.exists():
            self.final.rename(old)
        self.path.rename(self.final)
        if old.exists():
            shutil.rmtree(old)

    def discard(self) -> None:
        shutil.rmtree(self.path, ignore_errors=True)


def _write_report(config: PipelineConfig, name: str, rows) -> None:
    write_json_lines(config.output / "reports" / f"{name}.jsonl", rows)


def _write_errors(config: PipelineConfig, stage: str, errors: list) -> None:
    path = config.output / "reports" / f"{stage}_errors.jsonl"
    if errors:
        write_json_lines(path, errors)
    elif path.exists():
        path.unlink()


def _read_records(files) -> list:
    out = []
    for f in files:
        out.extend(read_jsonl(f))
    return out


# ---------------------------------------------------------------------------
# ingest

def _raw_lines(path: Path):
    """(line index, bytes) for every physical line; blank lines skipped."""
    import gzip

    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        for i, raw in enumerate(fh):
            raw = raw.rstrip(b"\r\n")
            if raw.strip():
                yield i, raw


def _ingest_file(task):
    idx, entry, dest = task
    errors = []
    n = 0
    fmt = entry.input_format
    try:
        with AtomicWriter(Path(dest) / _file_name(idx)) as out:
            for lineno, raw in _raw_lines(entry.path):
                where = {"file_index": idx, "path": str(entry.path), "line": lineno + 1}
                try:
                    line = raw.decode("utf-8")
                    if fmt == "jsonl":
                        obj = json.loads(line)
                        if not isinstance(obj, dict):
                            raise RecordError("expected a JSON object")
                        obj = {k: v for k, v in obj.items() if k not in _MANIFEST_KEYS}
                        rec = record_from_obj(obj, lineno + 1)
                    else:
                        rec = DocumentRecord(text=line)
                    rec.doc_id = make_doc_id(idx, lineno)
                    rec.collection = entry.collection
                    rec.source = entry.source
                    rec.original_code = entry.original_code
                    out.write(encode_jsonl(rec))
                    n += 1
                except (UnicodeDecodeError, ValueError) as exc:
                    errors.append({**where, "error": f"{type(exc).__name__}: {exc}"})
    except OSError as exc:
        errors.append({"file_index": idx, "path": str(entry.path), "line": None, "error": f"unreadable: {exc}"})
    return {"file_index": idx, "source": entry.source, "docs": n, "errors": len(errors)}, errors


def ingest(config: PipelineConfig) -> StageResult:
    entries = load_manifest(config.manifest)
    stage = _Staging(config, "ingested")
    tasks = [(i, e, str(stage.path)) for i, e in enumerate(entries)]
    results = _pmap(_ingest_file, tasks, config.workers)
    stage.publish()
    report = [r for r, _ in results]
    errors = [e for _, errs in results for e in errs]
    return StageResult("ingest", DATA_ERROR if errors else OK, report, errors)


# ---------------------------------------------------------------------------
# normalize: code resolution and script detection per dataset

def _sample_script(task):
    path, seed, min_fraction = task
    texts = [rec.text for rec in read_jsonl(path)]
    return sample_from_text(texts, seed, min_fraction)


def _label_file(task):
    src, dest, label = task
    n = 0
    with AtomicWriter(dest) as out:
        for rec in read_jsonl(src):
            rec.label = label
            out.write(encode_jsonl(rec))
            n += 1
    return n


def resolution_tables(config: PipelineConfig) -> ResolutionTables:
    tables = ResolutionTables.default()
    if config.code_tables is not None:
        tables = tables.extend(ResolutionTables.from_file(config.code_tables).rows)
    return tables


def normalize(config: PipelineConfig) -> StageResult:
    src_root = _require(config, "ingested")
    entries = load_manifest(config.manifest)
    tables = resolution_tables(config)
    defaults = load_default_scripts(config.default_scripts)
    seed = config.seed if config.seed is not None else 0

    errors = []
    present = []
    for i, e in enumerate(entries):
        path = src_root / _file_name(i)
        if path.is_file():
            present.append((i, e, path))
        else:
            errors.append({"file_index": i, "path": str(path), "line": None, "error": "missing ingested file"})

    sampled = _pmap(_sample_script, [(str(p), seed, config.script_min_fraction) for _, _, p in present],
                    config.workers)

    # history fallback needs manifest order, so this part is sequential
    history: dict = {}
    labels = []
    report = []
    for (i, entry, path), found in zip(present, sampled):
        res = normalize_code(entry.original_code, tables)
        if found is not None:
            script, step = found
            history[res.resolved] = script
        else:
            script, step = resolve_fallback(res.resolved, history, defaults)
        label = make_label(res.resolved, script, res.retained_original)
        labels.append(label)
        report.append({"file_index": i, "original_code": entry.original_code, "resolved": res.resolved,
                       "kind": res.kind.value, "script": script, "script_step": step, "label": str(label)})

    stage = _Staging(config, "noisy")
    tasks = []
    for (i, _, path), label in zip(present, labels):
        tasks.append((str(path), str(stage.path / str(label) / _file_name(i)), label))
    try:
        counts = _pmap(_label_file, tasks, config.workers)
    except (OSError, RecordError) as exc:
        stage.discard()
        return StageResult("normalize", DATA_ERROR, report, errors + [{"error": str(exc)}])
    stage.publish()
    for row, n in zip(report, counts):
        row["docs"] = n
    return StageResult("normalize", DATA_ERROR if errors else OK, report, errors)


# ---------------------------------------------------------------------------
# clean

@lru_cache(maxsize=4)
def _cleaning_setup(thresholds: Optional[str], lexicons: Optional[str], classifier: Optional[str]):
    tcfg = ThresholdConfig.from_file(thresholds) if thresholds else ThresholdConfig()
    lex = Lexicons.from_dir(lexicons) if lexicons else Lexicons.default()
    clf = load_classifier(classifier) if classifier else None
    return tcfg, lex, clf


def load_classifier(spec: str):
    """Build a language classifier from ``module:factory``."""
    module, _, attr = spec.partition(":")
    if not attr:
        raise ValueError(f"classifier spec {spec!r} must look like module:factory")
    factory = getattr(importlib.import_module(module), attr)
    return factory()


def _clean_file(task):
    src, dest, cfg = task
    tcfg, lex, clf = _cleaning_setup(
        str(cfg.thresholds) if cfg.thresholds else None,
        str(cfg.lexicons) if cfg.lexicons else None,
        cfg.lid_classifier if cfg.lang_reid else None,
    )
    reasons: Counter = Counter()
    kept = []
    n = 0
    for rec in read_jsonl(src):
        n += 1
        thr = tcfg.for_label(rec.label)
        rec.text = modify_document(rec.text, thr, rec.label, cfg.patterns)
        verdict = filter_document(rec, thr, lex, check_consecutive=cfg.consecutive_repeat)
        if verdict.kept and clf is not None:
            verdict = re_identify_language(rec, clf, cfg.lid_min_confidence)
        if verdict.kept:
            kept.append(rec)
        else:
            reasons[verdict.reason.value] += 1
    if kept:
        write_jsonl(dest, kept)
    return n, len(kept), reasons


def clean(config: PipelineConfig) -> StageResult:
    src_root = _require(config, "noisy")
    stage = _Staging(config, "cleaned")
    tasks, owners = [], []
    for label, files in partitions(src_root):
        for f in files:
            tasks.append((str(f), str(stage.path / label / f.name), config))
            owners.append(label)
    results = _pmap(_clean_file, tasks, config.workers)
    stage.publish()
    per_label: dict = {}
    for label, (n, k, reasons) in zip(owners, results):
        row = per_label.setdefault(label, {"label": label, "input_docs": 0, "kept_docs": 0, "rejected": Counter()})
        row["input_docs"] += n
        row["kept_docs"] += k
        row["rejected"].update(reasons)
    report = []
    for label in sorted(per_label):
        row = per_label[label]
        row["rejected"] = dict(sorted(row["rejected"].items()))
        report.append(row)
    return StageResult("clean", OK, report)


# ---------------------------------------------------------------------------
# dedup

def dedup_params(config: PipelineConfig) -> DedupParams:
    d = config.dedup
    return DedupParams(n=d.get("n", 5), threshold=d.get("threshold", 0.7), num_perm=d.get("num_perm", 128),
                       seed=d.get("seed", 1), verify=d.get("verify", False), memory_budget=config.memory_budget)


def _write_by_file(dest_dir: Path, records) -> None:
    groups = defaultdict(list)
    for rec in records:
        groups[split_doc_id(rec.doc_id)[0]].append(rec)
    for idx in sorted(groups):
        write_jsonl(dest_dir / _file_name(idx), groups[idx])


def _dedup_label(task):
    label, files, dest, params = task
    records = _read_records(files)
    try:
        kept, report = dedup_partition(records, params)
    except MemoryBudgetExceeded as exc:
        return {"label": label, "error": str(exc)}, []
    _write_by_file(Path(dest), kept)
    return {"label": label, **report.summary()}, report.removals


def dedup(config: PipelineConfig) -> StageResult:
    src_root = _require(config, "cleaned")
    params = dedup_params(config)
    stage = _Staging(config, "deduplicated")
    tasks = [(label, [str(f) for f in files], str(stage.path / label), params)
             for label, files in partitions(src_root)]
    results = _pmap(_dedup_label, tasks, config.workers)
    stage.publish()
    report = [r for r, _ in results]
    removals = [x for _, rem in results for x in rem]
    write_json_lines(config.output / "reports" / "dedup_removals.jsonl", removals)
    errors = [{"label": r["label"], "error": r["error"]} for r in report if "error" in r]
    return StageResult("dedup", DATA_ERROR if errors else OK, report, errors)


# ---------------------------------------------------------------------------
# split

def _split_label(task):
    label, files, dest, fraction, cap, seed = task
    train, valid = split_train_valid(_read_records(files), fraction, cap, seed)
    write_jsonl(Path(dest) / "train.jsonl", train)
    write_jsonl(Path(dest) / "valid.jsonl", valid)
    return {"label": label, "train_docs": len(train), "valid_docs": len(valid)}


def split(config: PipelineConfig) -> StageResult:
    src_root = _require(config, "deduplicated")
    stage = _Staging(config, "split")
    fraction = config.split.get("valid_fraction", 0.01)
    cap = config.split.get("valid_cap", 1000)
    tasks = [(label, [str(f) for f in files], str(stage.path / label), fraction, cap, config.seed)
             for label, files in partitions(src_root)]
    report = _pmap(_split_label, tasks, config.workers)
    stage.publish()
    return StageResult("split", OK, report)


# ---------------------------------------------------------------------------
# mix

def _count_label(task):
    label, files = task
    counts = {}
    for f in files:
        docs = tokens = 0
        for rec in read_jsonl(f):
            docs += 1
            tokens += stats_mod.count_tokens(rec.text)
        counts[int(Path(f).stem)] = (docs, tokens)
    return label, counts


def _mix_label(task):
    label, files, dest, categories, rates, seed = task
    acc = defaultdict(lambda: [0, 0, 0, 0])  # orig docs, orig tokens, out docs, out tokens
    with AtomicWriter(Path(dest) / "mix.jsonl") as out:
        for f in files:
            category = categories[int(Path(f).stem)]
            recs = sorted(read_jsonl(f), key=lambda r: r.doc_id)
            if not recs:
                continue
            copies = copies_for([r.doc_id for r in recs], rates[category], seed)
            row = acc[category]
            for rec, k in zip(recs, copies.tolist()):
                t = stats_mod.count_tokens(rec.text)
                row[0] += 1
                row[1] += t
                if k:
                    line = encode_jsonl(rec)
                    for _ in range(int(k)):
                        out.write(line)
                    row[2] += int(k)
                    row[3] += int(k) * t
    return {c: tuple(v) for c, v in acc.items()}


def mix(config: PipelineConfig) -> StageResult:
    src_root = _require(config, "deduplicated")
    entries = load_manifest(config.manifest)
    spec = load_mix_spec(config.mix_spec)
    parts = partitions(src_root)
    counted = _pmap(_count_label, [(label, [str(f) for f in files]) for label, files in parts], config.workers)

    categories_by_label = {}
    for label, counts in counted:
        code = label.rpartition("_")[0]
        kind_tokens = Counter()
        for idx, (_, tokens) in counts.items():
            kind_tokens[entries[idx].kind] += tokens
        cats = {}
        for idx in counts:
            e = entries[idx]
            cats[idx] = e.category or mix_category(e.kind, kind_tokens[e.kind], code)
        categories_by_label[label] = cats

    missing = sorted({c for cats in categories_by_label.values() for c in cats.values()} - set(spec))
    if missing:
        return StageResult("mix", USAGE_ERROR, message=f"no sample rate configured for categories: {missing}")

    stage = _Staging(config, "mix")
    tasks = [(label, [str(f) for f in files], str(stage.path / label), categories_by_label[label], spec, config.seed)
             for label, files in parts]
    results = _pmap(_mix_label, tasks, config.workers)

    totals = defaultdict(lambda: [0, 0, 0, 0])
    for res in results:
        for category, vals in res.items():
            totals[category] = [a + b for a, b in zip(totals[category], vals)]
    ordered = [c for c in spec if c in totals]
    plan = MixPlan.from_counts([(c, totals[c][1], spec[c], totals[c][3]) for c in ordered], config.seed)
    for row in plan.rows:
        row.original_docs, row.realized_docs = totals[row.category][0], totals[row.category][2]
    with AtomicWriter(stage.path / "plan.jsonl") as out:
        out.write(plan.to_jsonl())
    with AtomicWriter(stage.path / "plan.txt") as out:
        out.write(plan.to_table())
    stage.publish()
    report = [json.loads(line) for line in plan.to_jsonl().splitlines()]
    return StageResult("mix", OK, report)


# ---------------------------------------------------------------------------
# stats

def _stats_label(task):
    label, files = task
    cs = stats_mod.CorpusStats()
    sources: Counter = Counter()
    domains: Counter = Counter()
    records = []
    for f in files:
        for rec in read_jsonl(f):
            cs.add(label, stats_mod.count_tokens(rec.text))
            records.append(rec)
    blocks = stats_mod.block_distribution(records)
    dist = stats_mod.source_distribution(records)
    sources.update(dist.sources)
    domains.update(dist.domains)
    return cs, blocks.get(label, {}), sources, domains


def stats(config: PipelineConfig) -> StageResult:
    versions = [v for v in STATS_VERSIONS if (config.output / v).is_dir()]
    if not versions:
        raise PrerequisiteError(f"no corpus version found under {config.output}; run normalize first")
    reports = config.output / "reports"
    summary = []
    for version in versions:
        parts = partitions(config.output / version)
        results = _pmap(_stats_label, [(label, [str(f) for f in files]) for label, files in parts], config.workers)
        total = stats_mod.CorpusStats()
        blocks = {}
        sources: Counter = Counter()
        domains: Counter = Counter()
        for (label, _), (cs, blk, src, dom) in zip(parts, results):
            total = total.merge(cs)
            if blk:
                blocks[label] = blk
            sources.update(src)
            domains.update(dom)
        with AtomicWriter(reports / f"stats_{version}.jsonl") as out:
            out.write(total.to_jsonl())
        with AtomicWriter(reports / f"stats_{version}.txt") as out:
            out.write(total.to_table(version))
        with AtomicWriter(reports / f"unicode_blocks_{version}.csv") as out:
            out.write(stats_mod.block_distribution_csv(blocks))
        dist = stats_mod.SourceDistribution(stats_mod._sorted_counts(sources), stats_mod._sorted_counts(domains))
        with AtomicWriter(reports / f"sources_{version}.jsonl") as out:
            out.write(dist.to_jsonl())
        summary.append({"version": version, **total.summary()})
    return StageResult("stats", OK, summary)


# ---------------------------------------------------------------------------

RUNNERS = {
    "ingest": ingest,
    "normalize": normalize,
    "clean": clean,
    "dedup": dedup,
    "split": split,
    "mix": mix,
    "stats": stats,
}


def run_stage(stage: str, config: PipelineConfig) -> StageResult:
    """Run one stage and write its report and error log."""
    if stage not in RUNNERS:
        raise ValueError(f"unknown stage {stage!r}")
    config.output.mkdir(parents=True, exist_ok=True)
    try:
        result = RUNNERS[stage](config)
    except PrerequisiteError as exc:
        return StageResult(stage, USAGE_ERROR, message=str(exc))
    if result.status != USAGE_ERROR:
        _write_report(config, stage, result.report)
        _write_errors(config, stage, result.errors)
    if result.errors and not result.message:
        result.message = f"{len(result.errors)} error(s); see reports/{stage}_errors.jsonl"
    return result


def run_pipeline(config: PipelineConfig) -> list:
    """Run every enabled stage in order; stops at the first usage error."""
    results = []
    for stage in STAGES:
        if not config.enabled(stage):
            continue
        res = run_stage(stage, config)
        results.append(res)
        if res.status == USAGE_ERROR:
            break
    return results
