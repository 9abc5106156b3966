"""Harmonized document record and its JSONL encoding."""
from __future__ import annotations

import gzip
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

KEY_ORDER = ("doc_id", "url", "text", "collection", "source", "original_code", "label")
_RETAINED_KEY = "label_retained"
_KNOWN = set(KEY_ORDER) | {_RETAINED_KEY}

FILE_SHIFT = 40


class RecordError(ValueError):
    pass


class EncodingError(RecordError):
    pass


class ParseError(RecordError):
    pass


class SchemaError(RecordError):
    pass


@dataclass(frozen=True)
class LanguageLabel:
    code: str
    script: Optional[str]
    retained_original: bool = False

    def __str__(self) -> str:
        return f"{self.code}_{self.script if self.script else 'None'}"

    @classmethod
    def parse(cls, value: str, retained_original: bool = False) -> "LanguageLabel":
        code, sep, script = value.rpartition("_")
        if not sep or not code:
            raise SchemaError(f"label {value!r} is not of the form code_Script")
        return cls(code, None if script == "None" else script, retained_original)


@dataclass
class DocumentRecord:
    text: str
    doc_id: Optional[int] = None
    url: Optional[str] = None
    collection: str = ""
    source: str = ""
    original_code: str = ""
    label: Optional[LanguageLabel] = None
    extras: dict = field(default_factory=dict)

    @property
    def label_str(self) -> Optional[str]:
        return None if self.label is None else str(self.label)


def make_doc_id(file_index: int, line_number: int) -> int:
    if line_number >= 1 << FILE_SHIFT:
        raise ValueError("line number does not fit in 40 bits")
    return (file_index << FILE_SHIFT) | line_number


def split_doc_id(doc_id: int) -> tuple[int, int]:
    return doc_id >> FILE_SHIFT, doc_id & ((1 << FILE_SHIFT) - 1)


def encode_jsonl(record: DocumentRecord) -> str:
    """Serialize ``record`` to one newline-terminated JSON line.

    Known keys come first in a fixed order; extras follow sorted by key so
    identical records always give identical bytes.
    """
    try:
        record.text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise EncodingError(f"doc_id {record.doc_id}: text is not valid UTF-8 ({exc.reason})") from None
    obj: dict[str, Any] = {
        "doc_id": record.doc_id,
        "url": record.url,
        "text": record.text,
        "collection": record.collection,
        "source": record.source,
        "original_code": record.original_code,
        "label": record.label_str,
    }
    if record.label is not None and record.label.retained_original:
        obj[_RETAINED_KEY] = True
    for key in sorted(record.extras):
        if key in _KNOWN:
            raise SchemaError(f"doc_id {record.doc_id}: extras key {key!r} shadows a record field")
        obj[key] = record.extras[key]
    try:
        return json.dumps(obj, ensure_ascii=False) + "\n"
    except UnicodeEncodeError as exc:
        raise EncodingError(f"doc_id {record.doc_id}: {exc.reason}") from None


def record_from_obj(obj: dict, lineno: Optional[int] = None) -> DocumentRecord:
    where = f"line {lineno}" if lineno is not None else "record"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    if "text" not in obj:
        raise SchemaError(f"{where}: missing required key 'text'")
    if not isinstance(obj["text"], str):
        raise SchemaError(f"{where}: 'text' must be a string")
    label = obj.get("label")
    if label is not None:
        label = LanguageLabel.parse(label, bool(obj.get(_RETAINED_KEY, False)))
    return DocumentRecord(
        text=obj["text"],
        doc_id=obj.get("doc_id"),
        url=obj.get("url"),
        collection=obj.get("collection") or "",
        source=obj.get("source") or "",
        original_code=obj.get("original_code") or "",
        label=label,
        extras={k: v for k, v in obj.items() if k not in _KNOWN},
    )


def decode_jsonl(line: str, lineno: Optional[int] = None) -> DocumentRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        where = f"line {lineno}" if lineno is not None else "input"
        raise ParseError(f"{where}: malformed JSON ({exc.msg} at column {exc.colno})") from None
    return record_from_obj(obj, lineno)


def open_text(path, mode="rt"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


def read_jsonl(path) -> Iterator[DocumentRecord]:
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield decode_jsonl(line, lineno)


class AtomicWriter:
    """Text file written under a temporary name and renamed on close."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._tmp = self.path.with_name(f".{self.path.name}.tmp-{os.getpid()}")
        self._fh = io.open(self._tmp, "w", encoding="utf-8", newline="\n")

    def write(self, s: str) -> None:
        self._fh.write(s)

    def close(self) -> None:
        self._fh.close()
        os.replace(self._tmp, self.path)

    def abort(self) -> None:
        self._fh.close()
        self._tmp.unlink(missing_ok=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()


def write_jsonl(path, records: Iterable[DocumentRecord]) -> int:
    n = 0
    with AtomicWriter(path) as out:
        for rec in records:
            out.write(encode_jsonl(rec))
            n += 1
    return n


def write_json_lines(path, objs: Iterable[dict]) -> None:
    with AtomicWriter(path) as out:
        for obj in objs:
            out.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
