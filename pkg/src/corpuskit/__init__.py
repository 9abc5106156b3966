"""Toolkit for building cleaned, deduplicated multilingual pre-training corpora."""

from .record import DocumentRecord, LanguageLabel, decode_jsonl, encode_jsonl
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["DocumentRecord", "LanguageLabel", "decode_jsonl", "encode_jsonl", "BACKEND", "__version__"]
