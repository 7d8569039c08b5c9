"""Minimal reader for the transcript JSONL format.

The toolkit boundary is the file format itself, so this reader is
self-contained: one object per line with required keys ``id``, ``speaker``,
``text``, ``label`` and optional ``split``/``parse``.  Only the fields the
exporter needs are kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    id: str
    text: str
    label: str
    split: Optional[str]


def read_corpus(path) -> list[Record]:
    records: list[Record] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            for key in ("id", "speaker", "text", "label"):
                if key not in obj:
                    raise CorpusFormatError(f"line {line_no}: missing key {key!r}")
            uid = str(obj["id"])
            if uid in seen:
                raise CorpusFormatError(f"line {line_no}: duplicate id {uid!r}")
            seen.add(uid)
            records.append(Record(uid, str(obj["text"]), str(obj["label"]), obj.get("split")))
    if not records:
        raise CorpusFormatError(f"{path}: corpus is empty")
    return records
