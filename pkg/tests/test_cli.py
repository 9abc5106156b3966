import filecmp
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from corpuskit.cli import main
from corpuskit.config import PipelineConfig, validate_config, validate_config_file
from corpuskit.pipeline import partitions, run_stage
from corpuskit.record import read_jsonl, split_doc_id
from corpus_fixture import make_corpus

ENGLISH = ("the council said that the new bridge will open in the spring and that the old road "
           "is going to stay closed for repairs until the end of the year")


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


@pytest.fixture
def small(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    (raw / "a.jsonl").write_text(
        json.dumps({"text": ENGLISH, "url": "https://www.example.com/x", "ts": 1}) + "\n\n"
        + json.dumps({"text": ENGLISH + " again with a tail of more words here"}) + "\n", encoding="utf-8")
    (raw / "b.txt").write_text("Это первая строка русского текста для проверки работы\n"
                               "И вторая строка тоже написана по русски без ошибок\n", encoding="utf-8")
    write_json(tmp_path / "manifest.json", {"files": [
        {"path": "raw/a.jsonl", "collection": "Wiki", "source": "wiki-eng", "original_code": "en"},
        {"path": "raw/b.txt", "collection": "News", "source": "news-rus", "original_code": "rus", "kind": "inst"},
    ]})
    write_json(tmp_path / "mix.json", {"mono low EN": 2.0, "inst low": 1.0})
    cfg = write_json(tmp_path / "config.json", {"manifest": "manifest.json", "output": "out", "seed": 3,
                                                "mix_spec": "mix.json"})
    return cfg


def tree_files(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_validate_ok(small):
    assert validate_config(PipelineConfig.load(small)) == []
    assert main(["validate", "--config", str(small)]) == 0


def test_validate_diagnostics(small, tmp_path):
    cfg = PipelineConfig.load(small)
    cfg.output = tmp_path  # same directory as the manifest
    cfg.seed = None
    cfg.workers = 0
    fields = {d.field for d in validate_config(cfg)}
    assert {"output", "seed", "workers"} <= fields
    # seed only matters when a sampling stage will run
    assert "seed" not in {d.field for d in validate_config(cfg, ["ingest"])}


def test_unreadable_config_is_single_fatal(tmp_path):
    diags = validate_config_file(tmp_path / "missing.json")
    assert len(diags) == 1 and diags[0].fatal
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert len(validate_config_file(bad)) == 1
    assert main(["ingest", "--config", str(bad)]) == 2


def test_unknown_keys_rejected(tmp_path):
    p = write_json(tmp_path / "c.json", {"manifest": "m.json", "outptu": "x"})
    assert validate_config_file(p)[0].field == "config"


def test_env_overrides_only_workers_and_memory(small, monkeypatch):
    monkeypatch.setenv("CORPUSKIT_WORKERS", "4")
    monkeypatch.setenv("CORPUSKIT_MEMORY_BUDGET", "1000000")
    monkeypatch.setenv("CORPUSKIT_SEED", "99")
    cfg = PipelineConfig.load(small)
    assert (cfg.workers, cfg.memory_budget, cfg.seed) == (4, 1_000_000, 3)


def test_ingest_carries_manifest_metadata(small):
    assert main(["ingest", "--config", str(small)]) == 0
    out = small.parent / "out" / "ingested"
    a = list(read_jsonl(out / "00000.jsonl"))
    b = list(read_jsonl(out / "00001.jsonl"))
    assert [r.doc_id for r in a] == [0, 2]  # blank line keeps its number
    assert a[0].collection == "Wiki" and a[0].source == "wiki-eng" and a[0].original_code == "en"
    assert a[0].url == "https://www.example.com/x" and a[0].extras == {"ts": 1}
    assert [split_doc_id(r.doc_id) for r in b] == [(1, 0), (1, 1)]
    assert b[0].url is None


def test_missing_prerequisite_exits_2(small, capsys):
    assert main(["clean", "--config", str(small)]) == 2
    assert "noisy" in capsys.readouterr().err
    assert main(["mix", "--config", str(small)]) == 2


def test_partial_failure(small):
    raw = small.parent / "raw" / "a.jsonl"
    raw.write_bytes(raw.read_bytes() + b"{broken json\n" + b'{"text": "bad \xff byte"}\n' + b'{"url": "x"}\n')
    assert main(["ingest", "--config", str(small)]) == 1
    errors = [json.loads(x) for x in (small.parent / "out/reports/ingest_errors.jsonl").read_text().splitlines()]
    assert [e["line"] for e in errors] == [4, 5, 6]
    assert len(list(read_jsonl(small.parent / "out/ingested/00000.jsonl"))) == 2


def test_missing_input_file(small):
    (small.parent / "raw" / "b.txt").unlink()
    assert main(["ingest", "--config", str(small)]) == 1


def test_pipeline_outputs(small):
    assert main(["pipeline", "--config", str(small)]) == 0
    out = small.parent / "out"
    for version in ("noisy", "cleaned", "deduplicated", "split", "mix"):
        assert (out / version).is_dir()
    assert [label for label, _ in partitions(out / "noisy")] == ["eng_Latn", "rus_Cyrl"]
    norm = [json.loads(x) for x in (out / "reports/normalize.jsonl").read_text().splitlines()]
    assert norm[0]["kind"] == "mapped" and norm[1]["script"] == "Cyrl"
    plan = [json.loads(x) for x in (out / "mix/plan.jsonl").read_text().splitlines()]
    assert [p["category"] for p in plan] == ["mono low EN", "inst low"]
    assert plan[0]["realized_docs"] == 2 * plan[0]["original_docs"]
    for name in ("stats_noisy.jsonl", "stats_split.txt", "unicode_blocks_cleaned.csv", "sources_deduplicated.jsonl"):
        assert (out / "reports" / name).is_file()
    sources = (out / "reports/sources_noisy.jsonl").read_text()
    assert '"example.com"' in sources


def test_seed_flag_and_missing_rate(small):
    write_json(small.parent / "mix.json", {"inst low": 1.0})
    assert main(["pipeline", "--config", str(small), "--seed", "5"]) == 2


def test_reruns_and_worker_counts_identical(tmp_path):
    cfg = make_corpus(tmp_path / "c", 300_000, seed=2)
    assert main(["pipeline", "--config", str(cfg)]) == 0
    first = tree_files(cfg.parent / "out")
    assert main(["pipeline", "--config", str(cfg), "--workers", "3"]) == 0
    second = tree_files(cfg.parent / "out")
    assert first.keys() == second.keys()
    assert [k for k in first if first[k] != second[k]] == []


def test_lang_reid_in_clean(small):
    cfg = json.loads(small.read_text())
    cfg.update({"lang_reid": True, "lid_classifier": "lid_stub:make", "stages": {"split": False, "mix": False}})
    write_json(small, cfg)
    # an English document declared as Russian
    with open(small.parent / "raw" / "b.txt", "a", encoding="utf-8") as fh:
        fh.write("we are here and all is well\n")
    assert main(["pipeline", "--config", str(small)]) == 0
    report = [json.loads(x) for x in (small.parent / "out/reports/clean.jsonl").read_text().splitlines()]
    rus = next(r for r in report if r["label"] == "rus_Cyrl")
    assert rus["rejected"] == {"lang_mismatch": 1}


def test_lang_reid_requires_classifier(small):
    cfg = PipelineConfig.load(small)
    cfg.lang_reid = True
    assert "lid_classifier" in {d.field for d in validate_config(cfg)}


def test_run_stage_api(small):
    cfg = PipelineConfig.load(small)
    res = run_stage("normalize", cfg)
    assert res.status == 2 and "ingested" in res.message


def test_module_entry_point(small):
    env = {**os.environ, "PYTHONPATH": str(Path(__file__).parent)}
    proc = subprocess.run([sys.executable, "-m", "corpuskit", "ingest", "--config", str(small)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout.splitlines()[-1]) == {"stage": "ingest", "status": 0}
