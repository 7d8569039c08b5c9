"""Utterance corpus: JSONL loading, tokenization, and split assignment.

A corpus is an ordered, immutable collection of utterances.  Each utterance
carries a binary diagnosis label and may carry a precomputed constituency
parse (single-line bracketed string) and an explicit split tag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .util import stable_hash

LABELS = ("AD", "Control")
SPLITS = ("train", "val", "test")

POSITIVE_LABEL = "AD"

_PUNCT = ".,?!;:"


class CorpusError(ValueError):
    """Malformed transcript file or invalid utterance record."""


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase and split ``text`` into tokens.

    Rules: split on whitespace; the punctuation marks ``. , ? ! ; :`` become
    separate tokens; a clitic is split off before its apostrophe, so
    ``"it's"`` yields ``("it", "'s")``.
    """
    out: list[str] = []
    for chunk in text.lower().split():
        buf = ""
        for ch in chunk:
            if ch in _PUNCT:
                if buf:
                    out.append(buf)
                    buf = ""
                out.append(ch)
            elif ch == "'":
                if buf:
                    out.append(buf)
                buf = "'"
            else:
                buf += ch
        if buf:
            out.append(buf)
    return tuple(out)


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker_id: str
    text: str
    tokens: tuple[str, ...]
    label: str
    split: Optional[str] = None
    parse: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("utterance id must be nonempty")
        if self.label not in LABELS:
            raise CorpusError(f"unknown label {self.label!r} for id {self.id!r}")
        if self.split is not None and self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r} for id {self.id!r}")


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id: dict[str, Utterance] = {}
        for u in self.utterances:
            if u.id in by_id:
                raise CorpusError(f"duplicate utterance id {u.id!r}")
            by_id[u.id] = u
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def get(self, utterance_id: str) -> Utterance:
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise KeyError(f"unknown utterance id {utterance_id!r}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(u.id for u in self.utterances)

    @property
    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for u in self.utterances:
            if u.split is not None:
                counts[u.split] += 1
        return counts

    def subset(self, split: str) -> tuple[Utterance, ...]:
        return tuple(u for u in self.utterances if u.split == split)


def _utterance_from_record(record: dict, line_no: int) -> Utterance:
    for key in ("id", "speaker", "text", "label"):
        if key not in record:
            raise CorpusError(f"line {line_no}: missing required key {key!r}")
    try:
        return Utterance(
            id=str(record["id"]),
            speaker_id=str(record["speaker"]),
            text=str(record["text"]),
            tokens=tokenize(str(record["text"])),
            label=record["label"],
            split=record.get("split"),
            parse=record.get("parse"),
        )
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from None


def load_corpus(path) -> Corpus:
    """Load a UTF-8 JSON Lines transcript file, preserving record order."""
    utterances: list[Utterance] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusError(f"line {line_no}: record is not an object")
            u = _utterance_from_record(record, line_no)
            if u.id in seen:
                raise CorpusError(f"line {line_no}: duplicate utterance id {u.id!r}")
            seen.add(u.id)
            utterances.append(u)
    return Corpus(tuple(utterances))


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for u in corpus:
            record = {"id": u.id, "speaker": u.speaker_id, "text": u.text, "label": u.label}
            if u.split is not None:
                record["split"] = u.split
            if u.parse is not None:
                record["parse"] = u.parse
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


def _validate_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise CorpusError(f"ratios must be three positive fractions, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)!r}")


def assign_splits(
    corpus: Corpus,
    ratios: tuple[float, float, float] = (0.82, 0.09, 0.09),
    seed: int = 0,
    by_speaker: bool = False,
) -> Corpus:
    """Tag every utterance with train/val/test.

    The assignment is a pure function of the utterance ids, the ratios and
    the seed: ids are ordered by a stable hash and the first block goes to
    train.  Val and test sizes are floored, remainders go to train, so the
    counts never deviate from ``n * ratio`` by more than the number of
    splits.  A corpus whose records all carry explicit split tags is passed
    through unchanged; a partially tagged corpus is rejected.
    """
    _validate_ratios(ratios)
    tagged = sum(1 for u in corpus if u.split is not None)
    if tagged == len(corpus) and len(corpus) > 0:
        return corpus
    if tagged != 0:
        raise CorpusError(
            f"{tagged} of {len(corpus)} utterances carry split tags; "
            "tag all records or none"
        )

    n = len(corpus)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test

    if by_speaker:
        groups: dict[str, list[str]] = {}
        for u in corpus:
            groups.setdefault(u.speaker_id, []).append(u.id)
        ordered = sorted(groups, key=lambda s: (stable_hash(seed, "speaker", s), s))
        split_of: dict[str, str] = {}
        assigned = 0
        for speaker in ordered:
            if assigned < n_train:
                tag = "train"
            elif assigned < n_train + n_val:
                tag = "val"
            else:
                tag = "test"
            for uid in groups[speaker]:
                split_of[uid] = tag
            assigned += len(groups[speaker])
    else:
        ordered_ids = sorted(corpus.ids, key=lambda i: (stable_hash(seed, "split", i), i))
        split_of = {}
        for rank, uid in enumerate(ordered_ids):
            if rank < n_train:
                split_of[uid] = "train"
            elif rank < n_train + n_val:
                split_of[uid] = "val"
            else:
                split_of[uid] = "test"

    return Corpus(tuple(replace(u, split=split_of[u.id]) for u in corpus))


def require_splits(corpus: Corpus) -> None:
    untagged = [u.id for u in corpus if u.split is None]
    if untagged:
        raise CorpusError(
            f"{len(untagged)} utterances have no split tag (first: {untagged[0]!r}); "
            "run assign_splits first"
        )


def require_parses(corpus: Corpus, ids: Optional[Iterable[str]] = None) -> None:
    pool = corpus if ids is None else (corpus.get(i) for i in ids)
    missing = [u.id for u in pool if u.parse is None]
    if missing:
        shown = ", ".join(repr(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise CorpusError(f"utterances missing parse strings: {shown}{more}")
