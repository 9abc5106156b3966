"""Pipeline configuration, manifest loading and config validation."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

STAGES = ("ingest", "normalize", "clean", "dedup", "split", "mix", "stats")
SAMPLING_STAGES = ("split", "mix")

ENV_WORKERS = "CORPUSKIT_WORKERS"
ENV_MEMORY = "CORPUSKIT_MEMORY_BUDGET"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    fatal: bool = False

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    collection: str
    source: str
    original_code: str
    kind: str = "mono"
    category: Optional[str] = None
    format: Optional[str] = None

    @property
    def input_format(self) -> str:
        if self.format:
            return self.format
        name = self.path.name[:-3] if self.path.name.endswith(".gz") else self.path.name
        return "jsonl" if name.endswith((".jsonl", ".json")) else "text"


def load_manifest(path) -> list:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    files = data["files"] if isinstance(data, dict) else data
    entries = []
    for i, item in enumerate(files):
        missing = [k for k in ("path", "collection", "source", "original_code") if not item.get(k)]
        if missing:
            raise ConfigError(f"manifest entry {i} is missing {missing}")
        p = Path(item["path"])
        if not p.is_absolute():
            p = path.parent / p
        entries.append(ManifestEntry(p, item["collection"], item["source"], item["original_code"],
                                     item.get("kind", "mono"), item.get("category"), item.get("format")))
    return entries


@dataclass
class PipelineConfig:
    manifest: Optional[Path] = None
    output: Optional[Path] = None
    seed: Optional[int] = None
    workers: int = 1
    memory_budget: Optional[int] = None
    stages: dict = field(default_factory=lambda: {s: True for s in STAGES})
    consecutive_repeat: bool = True
    lang_reid: bool = False
    lid_classifier: Optional[str] = None
    lid_min_confidence: float = 0.5
    thresholds: Optional[Path] = None
    mix_spec: Optional[Path] = None
    lexicons: Optional[Path] = None
    default_scripts: Optional[Path] = None
    code_tables: Optional[Path] = None
    patterns: tuple = ("http", ".com")
    script_min_fraction: float = 0.5
    dedup: dict = field(default_factory=lambda: {"n": 5, "threshold": 0.7, "num_perm": 128, "verify": False})
    split: dict = field(default_factory=lambda: {"valid_fraction": 0.01, "valid_cap": 1000})
    source: Optional[Path] = None

    @classmethod
    def from_dict(cls, data: dict, base: Optional[Path] = None) -> "PipelineConfig":
        cfg = cls()
        base = base or Path.cwd()
        known = set(cls.__dataclass_fields__) - {"source"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            if key in ("manifest", "output", "thresholds", "mix_spec", "lexicons", "default_scripts", "code_tables"):
                value = None if value is None else _resolve(base, value)
            elif key == "stages":
                value = {**cfg.stages, **value}
            elif key in ("dedup", "split"):
                value = {**getattr(cfg, key), **value}
            elif key == "patterns":
                value = tuple(value)
            setattr(cfg, key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        cfg = cls.from_dict(data, path.parent)
        cfg.source = path
        return cfg.apply_env()

    def apply_env(self, environ=None) -> "PipelineConfig":
        environ = os.environ if environ is None else environ
        if environ.get(ENV_WORKERS):
            self.workers = int(environ[ENV_WORKERS])
        if environ.get(ENV_MEMORY):
            self.memory_budget = int(environ[ENV_MEMORY])
        return self

    def enabled(self, stage: str) -> bool:
        return bool(self.stages.get(stage, False))

    @property
    def input_root(self) -> Optional[Path]:
        return None if self.manifest is None else self.manifest.resolve().parent


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def validate_config(config: PipelineConfig, stages=None) -> list:
    """Return diagnostics; an empty list means the config is usable."""
    stages = tuple(stages) if stages is not None else tuple(s for s in STAGES if config.enabled(s))
    diags = []
    if config.manifest is None:
        diags.append(Diagnostic("manifest", "required"))
    elif not config.manifest.is_file():
        diags.append(Diagnostic("manifest", f"not a readable file: {config.manifest}"))
    else:
        try:
            load_manifest(config.manifest)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            diags.append(Diagnostic("manifest", f"cannot parse: {exc}"))
    if config.output is None:
        diags.append(Diagnostic("output", "required"))
    elif config.input_root is not None and config.output.resolve() == config.input_root:
        diags.append(Diagnostic("output", "output root must differ from the input root"))
    if config.seed is None and any(s in stages for s in SAMPLING_STAGES):
        diags.append(Diagnostic("seed", f"required when any of {list(SAMPLING_STAGES)} is enabled"))
    elif config.seed is not None and (not isinstance(config.seed, int) or config.seed < 0):
        diags.append(Diagnostic("seed", "must be a non-negative integer"))
    if not isinstance(config.workers, int) or config.workers < 1:
        diags.append(Diagnostic("workers", "must be an integer >= 1"))
    if config.memory_budget is not None and config.memory_budget <= 0:
        diags.append(Diagnostic("memory_budget", "must be positive"))
    for name in config.stages:
        if name not in STAGES:
            diags.append(Diagnostic("stages", f"unknown stage {name!r}"))
    t = config.dedup.get("threshold", 0.7)
    if not 0.0 < t < 1.0:
        diags.append(Diagnostic("dedup.threshold", "must be in (0, 1)"))
    if config.dedup.get("num_perm", 128) < 16:
        diags.append(Diagnostic("dedup.num_perm", "must be >= 16"))
    if config.dedup.get("n", 5) < 1:
        diags.append(Diagnostic("dedup.n", "must be >= 1"))
    vf = config.split.get("valid_fraction", 0.01)
    if not 0.0 <= vf <= 1.0:
        diags.append(Diagnostic("split.valid_fraction", "must be in [0, 1]"))
    if config.split.get("valid_cap", 1000) < 0:
        diags.append(Diagnostic("split.valid_cap", "must be >= 0"))
    for name in ("thresholds", "lexicons", "default_scripts", "code_tables"):
        p = getattr(config, name)
        if p is not None and not p.exists():
            diags.append(Diagnostic(name, f"path does not exist: {p}"))
    if "mix" in stages:
        if config.mix_spec is None:
            diags.append(Diagnostic("mix_spec", "required when the mix stage is enabled"))
        elif not config.mix_spec.is_file():
            diags.append(Diagnostic("mix_spec", f"not a readable file: {config.mix_spec}"))
        else:
            try:
                load_mix_spec(config.mix_spec)
            except (OSError, ValueError) as exc:
                diags.append(Diagnostic("mix_spec", f"cannot parse: {exc}"))
    if config.lang_reid and not config.lid_classifier:
        diags.append(Diagnostic("lid_classifier", "required when lang_reid is enabled"))
    return diags


def validate_config_file(path) -> list:
    try:
        config = PipelineConfig.load(path)
    except (OSError, ValueError) as exc:
        return [Diagnostic("config", f"cannot read {path}: {exc}", fatal=True)]
    return validate_config(config)


def load_mix_spec(path) -> dict:
    """Ordered mapping category -> rate from a JSON object or list of pairs."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        pairs = list(data.items())
    else:
        pairs = [(item["category"], item["rate"]) if isinstance(item, dict) else tuple(item) for item in data]
    spec = {}
    for category, rate in pairs:
        rate = float(rate)
        if rate < 0:
            raise ValueError(f"negative rate for {category!r}")
        spec[str(category)] = rate
    return spec
