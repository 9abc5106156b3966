"""Language code normalization to ISO 639-3 and ``code_Script`` labels."""
from __future__ import annotations

import enum
import logging
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

from .record import LanguageLabel

log = logging.getLogger(__name__)


class Kind(str, enum.Enum):
    EXACT = "exact"
    MAPPED = "mapped"
    MERGED_INTO = "merged_into"
    RETAINED_GROUP = "retained_group"
    RETAINED_SPLIT = "retained_split"
    NAME_MATCHED = "name_matched"
    NAME_CORRECTED = "name_corrected"
    UNRESOLVED = "unresolved"


RETAINED_KINDS = {Kind.RETAINED_GROUP, Kind.RETAINED_SPLIT, Kind.UNRESOLVED}


@dataclass(frozen=True)
class CodeResolution:
    input: str
    resolved: str
    kind: Kind

    @property
    def retained_original(self) -> bool:
        return self.kind in RETAINED_KINDS


def fold(name: str) -> str:
    """Casefold and strip diacritics."""
    decomposed = unicodedata.normalize("NFKD", name.strip())
    return "".join(c for c in decomposed if not unicodedata.combining(c)).casefold()


class ResolutionTables:
    """Immutable lookup tables for :func:`normalize_code`.

    Rows are ``input<TAB>output<TAB>kind`` with kind one of ``exact``,
    ``mapped``, ``merged_into``, ``retained_group``, ``retained_split`` or
    ``name``.
    """

    _CODE_KINDS = ("exact", "mapped", "merged_into", "retained_group", "retained_split")

    def __init__(self, rows):
        self.codes: dict[str, dict[str, str]] = {k: {} for k in self._CODE_KINDS}
        names: dict[str, str] = {}
        for src, dst, kind in rows:
            if kind == "name":
                names[src] = dst
            elif kind in self.codes:
                self.codes[kind].setdefault(src, dst)
            else:
                raise ValueError(f"unknown resolution kind {kind!r}")
        self.names = names
        folded: dict[str, Optional[str]] = {}
        for name in names:
            key = fold(name)
            # several canonical names folding together are ambiguous
            folded[key] = None if key in folded and folded[key] != name else name
        self.folded_names = folded

    @classmethod
    def from_file(cls, path) -> "ResolutionTables":
        with open(path, encoding="utf-8") as fh:
            return cls(_parse_tsv(fh, 3))

    @classmethod
    def default(cls) -> "ResolutionTables":
        return _default_tables()

    def extend(self, rows) -> "ResolutionTables":
        extra = list(rows)
        base = [(s, d, k) for k, table in self.codes.items() for s, d in table.items()]
        base += [(s, d, "name") for s, d in self.names.items()]
        # config rows take precedence over shipped ones
        return ResolutionTables(extra + base)


def _parse_tsv(lines, width):
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != width:
            raise ValueError(f"expected {width} tab-separated fields, got {line!r}")
        yield tuple(p.strip() for p in parts)


@lru_cache(maxsize=1)
def _default_tables() -> ResolutionTables:
    with resources.files("corpuskit.data").joinpath("iso639_resolution.tsv").open(encoding="utf-8") as fh:
        return ResolutionTables(_parse_tsv(fh, 3))


def levenshtein_at_most_one(a: str, b: str) -> int:
    """Edit distance between ``a`` and ``b`` if it is 0 or 1, else 2."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if abs(la - lb) > 1:
        return 2
    if la > lb:
        a, b, la, lb = b, a, lb, la
    i = 0
    while i < la and a[i] == b[i]:
        i += 1
    if la == lb:
        return 1 if a[i + 1:] == b[i + 1:] else 2
    return 1 if a[i:] == b[i + 1:] else 2


def correct_name(name: str, canonical) -> Optional[str]:
    """Return the unique canonical name within edit distance 1 of ``name``.

    Comparison is on casefolded, diacritic-stripped forms.  The closest
    distance wins; a tie at that distance returns None.
    """
    if isinstance(canonical, ResolutionTables):
        folded_map = canonical.folded_names
    else:
        folded_map = {}
        for c in canonical:
            key = fold(c)
            folded_map[key] = None if key in folded_map and folded_map[key] != c else c
    key = fold(name)
    if not key:
        return None
    if key in folded_map:
        return folded_map[key]
    hits = set()
    for cand_key, cand in folded_map.items():
        if abs(len(cand_key) - len(key)) <= 1 and levenshtein_at_most_one(key, cand_key) == 1:
            if cand is None:
                return None
            hits.add(cand)
            if len(hits) > 1:
                return None
    return hits.pop() if hits else None


def normalize_code(code: str, tables: Optional[ResolutionTables] = None) -> CodeResolution:
    if not code or not code.strip():
        raise ValueError("language code must be non-empty")
    tables = tables or ResolutionTables.default()
    raw = code.strip()
    key = raw.lower()
    t = tables.codes

    if key in t["exact"]:
        return CodeResolution(raw, t["exact"][key], Kind.EXACT)
    if key in t["mapped"]:
        return CodeResolution(raw, t["mapped"][key], Kind.MAPPED)
    if key in t["merged_into"]:
        return CodeResolution(raw, t["merged_into"][key], Kind.MERGED_INTO)
    if key in t["retained_group"]:
        return CodeResolution(raw, t["retained_group"][key], Kind.RETAINED_GROUP)
    if key in t["retained_split"]:
        return CodeResolution(raw, t["retained_split"][key], Kind.RETAINED_SPLIT)

    if raw in tables.names:
        return CodeResolution(raw, tables.names[raw], Kind.NAME_MATCHED)
    corrected = correct_name(raw, tables)
    if corrected is not None:
        kind = Kind.NAME_MATCHED if corrected == raw else Kind.NAME_CORRECTED
        return CodeResolution(raw, tables.names[corrected], kind)

    log.warning("unresolved language code %r retained as-is", raw)
    return CodeResolution(raw, raw, Kind.UNRESOLVED)


def make_label(code: str, script: Optional[str], retained_original: bool = False) -> LanguageLabel:
    if script is None:
        log.warning("no script for language %r; label uses the None sentinel", code)
    return LanguageLabel(code, script, retained_original)


def load_default_scripts(path=None) -> dict[str, str]:
    if path is None:
        src = resources.files("corpuskit.data").joinpath("default_scripts.tsv").open(encoding="utf-8")
    else:
        src = open(Path(path), encoding="utf-8")
    with src as fh:
        return dict(_parse_tsv(fh, 2))
