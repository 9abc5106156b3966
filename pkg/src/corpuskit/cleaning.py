"""Document modification and document filtering."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Protocol

import regex

from . import kernels
from .record import DocumentRecord, LanguageLabel

log = logging.getLogger(__name__)

# Chinese, Japanese, Korean, Thai, Lao, Burmese
NO_SPACE_SCRIPTS = frozenset({"Hani", "Hans", "Hant", "Jpan", "Hira", "Kana", "Hang", "Kore", "Thai", "Laoo", "Mymr"})
DEFAULT_PATTERNS = ("http", ".com")

_LETTERS = regex.compile(r"[\p{L}\p{M}]+")
_EDGE_PUNCT = regex.compile(r"^[\p{P}\p{S}]+|[\p{P}\p{S}]+$")


class Reason(str, enum.Enum):
    CONSECUTIVE_REPEAT = "consecutive_repeat"
    WORD_COUNT = "word_count"
    CHAR_REPETITION = "char_repetition"
    WORD_REPETITION = "word_repetition"
    SPECIAL_CHARS = "special_chars"
    STOPWORDS = "stopwords"
    FLAG_WORDS = "flag_words"
    LANG_MISMATCH = "lang_mismatch"


@dataclass(frozen=True)
class CleaningVerdict:
    kept: bool
    reason: Optional[Reason] = None

    def __post_init__(self):
        if self.kept != (self.reason is None):
            raise ValueError("kept must be True exactly when reason is None")


KEEP = CleaningVerdict(True)


def reject(reason: Reason) -> CleaningVerdict:
    return CleaningVerdict(False, reason)


@dataclass(frozen=True)
class CleaningThresholds:
    min_words: int = 5
    max_word_len: int = 50
    char_rep_max: float = 0.20
    char_rep_n: int = 10
    word_rep_max: float = 0.30
    rep_ngram: int = 5
    special_char_max: float = 0.40
    stopword_min: float = 0.10
    flagword_max: float = 0.01
    consecutive_min_run: int = 3
    no_space_window: int = 1

    def __post_init__(self):
        for name in ("char_rep_max", "word_rep_max", "special_char_max", "stopword_min", "flagword_max"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.min_words < 1:
            raise ValueError("min_words must be >= 1")
        for name in ("max_word_len", "char_rep_n", "rep_ngram", "consecutive_min_run", "no_space_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def override(self, values: Mapping) -> "CleaningThresholds":
        known = {f.name for f in fields(self)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown threshold keys: {sorted(unknown)}")
        return replace(self, **values)


class ThresholdConfig:
    """Default thresholds plus per-``language_Script`` overrides."""

    def __init__(self, base: CleaningThresholds = CleaningThresholds(), per_label: Optional[Mapping] = None):
        self.base = base
        self._per_label = {k: base.override(v) for k, v in (per_label or {}).items()}

    @classmethod
    def from_file(cls, path) -> "ThresholdConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        base = CleaningThresholds().override(data.get("default", {}))
        return cls(base, data.get("per_label", {}))

    def for_label(self, label) -> CleaningThresholds:
        return self._per_label.get(str(label), self.base)


@dataclass(frozen=True)
class Lexicon:
    stopwords: Optional[frozenset] = None
    flagwords: Optional[frozenset] = None


class Lexicons:
    """Per-label stopword and flag-word sets loaded from ``<root>/<label>/``."""

    def __init__(self, by_label: Optional[Mapping[str, Lexicon]] = None):
        self.by_label = dict(by_label or {})

    @classmethod
    def from_dir(cls, root) -> "Lexicons":
        root = Path(root)
        by_label = {}
        if root.is_dir():
            for sub in sorted(p for p in root.iterdir() if p.is_dir()):
                by_label[sub.name] = Lexicon(_read_words(sub / "stopwords.txt"), _read_words(sub / "flagwords.txt"))
        return cls(by_label)

    @classmethod
    def default(cls) -> "Lexicons":
        return cls.from_dir(resources.files("corpuskit.data").joinpath("lexicons"))

    def get(self, label) -> Lexicon:
        return self.by_label.get(str(label), Lexicon())


def _read_words(path: Path) -> Optional[frozenset]:
    if not path.is_file():
        return None
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().casefold() for w in fh if w.strip() and not w.startswith("#"))


def is_no_space(label: Optional[LanguageLabel], no_space=NO_SPACE_SCRIPTS) -> bool:
    return label is not None and label.script in no_space


# ---------------------------------------------------------------------------
# document modification

def standardize_whitespace(text: str) -> str:
    return " ".join(text.split())


def remove_long_words(text: str, max_word_len: int, label: Optional[LanguageLabel] = None,
                      no_space=NO_SPACE_SCRIPTS) -> str:
    if is_no_space(label, no_space):
        return text
    return " ".join(w for w in text.split() if len(w) <= max_word_len)


def remove_pattern_words(text: str, patterns=DEFAULT_PATTERNS, label: Optional[LanguageLabel] = None,
                         no_space=NO_SPACE_SCRIPTS) -> str:
    if is_no_space(label, no_space):
        return text
    return " ".join(w for w in text.split() if not any(p in w for p in patterns))


def modify_document(text: str, thresholds: CleaningThresholds, label: Optional[LanguageLabel] = None,
                    patterns=DEFAULT_PATTERNS, no_space=NO_SPACE_SCRIPTS) -> str:
    text = standardize_whitespace(text)
    text = remove_long_words(text, thresholds.max_word_len, label, no_space)
    return remove_pattern_words(text, patterns, label, no_space)


# ---------------------------------------------------------------------------
# document filtering

def has_consecutive_repeats(text: str, min_run: int = 3) -> bool:
    run, prev = 0, None
    for word in text.split():
        run = run + 1 if word == prev else 1
        if run >= min_run:
            return True
        prev = word
    return False


def repetition_ratio(units, n: int) -> float:
    """(n-gram occurrences beyond the first) / (total n-grams); 0 when there are none."""
    total = len(units) - n + 1
    if total <= 0:
        return 0.0
    grams = set(zip(*(units[i:] for i in range(n))))
    return (total - len(grams)) / total


def char_repetition_ratio(text: str, n: int = 10) -> float:
    return float(kernels.dup_fraction(kernels.codepoints(text), n))


def special_char_ratio(text: str) -> float:
    """Share of non-whitespace codepoints that are not letters or marks."""
    nonspace = len(text) - text.count(" ")
    if nonspace == 0:
        return 0.0
    rest = _LETTERS.sub("", text)
    special = len(rest) - rest.count(" ")
    return special / nonspace


def word_units(text: str, no_space: bool, window: int = 1) -> list:
    if not no_space:
        return text.split()
    chars = "".join(text.split())
    return [chars[i:i + window] for i in range(0, len(chars), window)]


def _normalize_word(word: str) -> str:
    return _EDGE_PUNCT.sub("", word).casefold()


def filter_document(record: DocumentRecord, thresholds: CleaningThresholds = CleaningThresholds(),
                    lexicons: Optional[Lexicons] = None, no_space=NO_SPACE_SCRIPTS,
                    check_consecutive: bool = True) -> CleaningVerdict:
    """Run the filters in fixed order and report the first failure."""
    text = record.text
    label = record.label
    ns = is_no_space(label, no_space)

    if check_consecutive and has_consecutive_repeats(text, thresholds.consecutive_min_run):
        return reject(Reason.CONSECUTIVE_REPEAT)

    words = word_units(text, ns, thresholds.no_space_window)
    if len(words) < thresholds.min_words:
        return reject(Reason.WORD_COUNT)
    if char_repetition_ratio(text, thresholds.char_rep_n) > thresholds.char_rep_max:
        return reject(Reason.CHAR_REPETITION)
    if repetition_ratio(words, thresholds.rep_ngram) > thresholds.word_rep_max:
        return reject(Reason.WORD_REPETITION)
    if special_char_ratio(text) > thresholds.special_char_max:
        return reject(Reason.SPECIAL_CHARS)

    lex = lexicons.get(label) if (lexicons is not None and label is not None) else Lexicon()
    if lex.stopwords is not None or lex.flagwords is not None:
        normed = [_normalize_word(w) for w in words]
        if lex.stopwords is not None:
            share = sum(1 for w in normed if w in lex.stopwords) / len(normed)
            if share < thresholds.stopword_min:
                return reject(Reason.STOPWORDS)
        if lex.flagwords is not None:
            share = sum(1 for w in normed if w in lex.flagwords) / len(normed)
            if share > thresholds.flagword_max:
                return reject(Reason.FLAG_WORDS)
    return KEEP


# ---------------------------------------------------------------------------
# language re-identification

class LanguageClassifier(Protocol):
    def supports(self, code: str) -> bool: ...

    def predict(self, text: str) -> tuple[str, float]: ...


def re_identify_language(record: DocumentRecord, classifier: Optional[LanguageClassifier],
                         min_confidence: float = 0.5) -> CleaningVerdict:
    if classifier is None or record.label is None:
        return KEEP
    code = record.label.code
    try:
        if not classifier.supports(code):
            return KEEP
        predicted, confidence = classifier.predict(record.text)
    except Exception as exc:  # classifier outages must not drop documents
        log.warning("language classifier failed on doc %s: %s", record.doc_id, exc)
        return KEEP
    if predicted != code and confidence >= min_confidence:
        return reject(Reason.LANG_MISMATCH)
    return KEEP


# ---------------------------------------------------------------------------
# code files

def filter_code_file(avg_line_len: float, max_line_len: float, alnum_frac: float, forks: int) -> bool:
    if forks > 25:
        return avg_line_len < 120 and max_line_len < 300 and alnum_frac > 0.30
    if forks >= 15:
        return avg_line_len < 90 and max_line_len < 150 and alnum_frac > 0.40
    return avg_line_len < 80 and max_line_len < 120 and alnum_frac > 0.45


def code_file_metrics(source: str) -> tuple[float, int, float]:
    """(average line length, max line length, alphanumeric fraction) of a source file."""
    lines = source.splitlines() or [""]
    lengths = [len(line) for line in lines]
    alnum = sum(1 for c in source if c.isalnum())
    return sum(lengths) / len(lengths), max(lengths), (alnum / len(source) if source else 0.0)
