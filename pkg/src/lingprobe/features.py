"""The 119-dimensional hand-crafted feature vector per utterance.

Layout (fixed schema, 119 entries):

* entries 1..103  — proportions of the top-103 training-corpus production
  rules (count of rule in the utterance's tree / total productions);
* entry 104       — constituency tree depth;
* entries 105..117 — 13 phrasal-type ratios: for each of NP, VP, PP the
  token-coverage proportion, mean phrase length and phrase count, plus for
  each of ADJP, ADVP the token-coverage proportion and phrase count;
* entries 118..119 — information-content-unit presence flag and count.

The rule vocabulary is learned from the training split only.  Content-word
matching uses a light suffix stripper on both the token and the word list,
so inflected forms like "takes", "steals" or "overflowing" match their
base entries.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Utterance
from .parsetree import ParseTree, depth, phrase_stats, productions, terminals

N_RULE_FEATURES = 103
PHRASE_FULL = ("NP", "VP", "PP")
PHRASE_SHORT = ("ADJP", "ADVP")
N_FEATURES = 119

# Word-final doubles that undouble after -ing/-ed stripping ("sitting" ->
# "sit").  ll/ss/zz are excluded: base forms like "fall" and "glass" keep
# their doubles.
_UNDOUBLE = frozenset("bdfgmnprt")
_ES_CONTEXT = frozenset("sxzho")
_MIN_STEM = 3


class FeatureError(ValueError):
    """Invalid inputs to vocabulary building or feature extraction."""


def stem_token(word: str) -> str:
    """Strip one of the suffixes s/es/ed/ing, keeping stems >= 3 chars.

    After -ing/-ed stripping a geminated consonant is undoubled; -es is
    only stripped in e-insertion contexts (after s, x, z, h, o) and a
    final -s never comes off an -ss word.
    """

    def undouble(stem: str) -> str:
        if (
            len(stem) > _MIN_STEM
            and stem[-1] == stem[-2]
            and stem[-1] in _UNDOUBLE
        ):
            return stem[:-1]
        return stem

    if word.endswith("ing") and len(word) >= _MIN_STEM + 3:
        return undouble(word[:-3])
    if word.endswith("ed") and len(word) >= _MIN_STEM + 2:
        return undouble(word[:-2])
    if word.endswith("es") and len(word) >= _MIN_STEM + 2 and word[-3] in _ES_CONTEXT:
        return word[:-2]
    if word.endswith("s") and not word.endswith("ss") and len(word) >= _MIN_STEM + 1:
        return word[:-1]
    return word


def load_icu_words(path=None) -> tuple[str, ...]:
    """Load the content-unit word list (one word per line).

    Defaults to the bundled picture-description list.
    """
    if path is None:
        text = resources.files("lingprobe").joinpath("data/icu_words.txt").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    words = tuple(w.strip().lower() for w in text.splitlines() if w.strip())
    if not words:
        raise FeatureError("content-unit word list is empty")
    return words


def icu_features(
    tokens: Sequence[str], words: Optional[Sequence[str]] = None
) -> tuple[bool, int]:
    """(presence flag, count) of content-unit words among ``tokens``.

    Both sides are stem-normalized; the count is the number of matching
    token positions.
    """
    if words is None:
        words = load_icu_words()
    stems = {stem_token(w) for w in words}
    count = sum(1 for tok in tokens if stem_token(tok) in stems)
    return count > 0, count


@dataclass(frozen=True)
class RuleVocabulary:
    """Ordered production-rule keys; padded with inert placeholders.

    Real keys have the form ``LHS→RHS1 RHS2 ...``; placeholder slots
    (``UNUSED_###``) can never match a production and always score 0.
    """

    rules: tuple[str, ...]
    source: str

    def __post_init__(self) -> None:
        if len(set(self.rules)) != len(self.rules):
            raise FeatureError("rule vocabulary contains duplicates")


def build_rule_vocabulary(trees: Iterable[ParseTree], k: int = N_RULE_FEATURES) -> RuleVocabulary:
    """Top-``k`` production rules of ``trees`` by frequency.

    Ties break lexicographically on the rule key.  When fewer than ``k``
    distinct rules exist the vocabulary is padded to length ``k``.
    """
    if k < 1:
        raise FeatureError(f"vocabulary size must be >= 1, got {k}")
    counts: dict[str, int] = {}
    n_trees = 0
    for t in trees:
        n_trees += 1
        for rule in productions(t):
            counts[rule.key] = counts.get(rule.key, 0) + 1
    if n_trees == 0:
        raise FeatureError("cannot build a rule vocabulary from an empty tree list")
    ranked = sorted(counts, key=lambda key: (-counts[key], key))[:k]
    while len(ranked) < k:
        ranked.append(f"UNUSED_{len(ranked) + 1:03d}")
    fingerprint = hashlib.sha256(
        "".join(f"{key}\t{counts[key]}\n" for key in sorted(counts)).encode("utf-8")
    ).hexdigest()[:16]
    return RuleVocabulary(tuple(ranked), fingerprint)


def feature_schema(vocab: RuleVocabulary) -> tuple[str, ...]:
    names = [f"rule:{key}" for key in vocab.rules]
    names.append("tree_depth")
    for label in PHRASE_FULL:
        names += [f"{label}_coverage", f"{label}_mean_len", f"{label}_count"]
    for label in PHRASE_SHORT:
        names += [f"{label}_coverage", f"{label}_count"]
    names += ["icu_present", "icu_count"]
    return tuple(names)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.schema),):
            raise FeatureError(
                f"feature vector length {self.values.shape} does not match schema "
                f"({len(self.schema)} names)"
            )


def extract_features(
    u: Utterance,
    t: ParseTree,
    vocab: RuleVocabulary,
    icu_words: Optional[Sequence[str]] = None,
) -> FeatureVector:
    """Extract the 119 features for one utterance and its parse."""
    if len(vocab.rules) != N_RULE_FEATURES:
        raise FeatureError(
            f"expected a {N_RULE_FEATURES}-rule vocabulary, got {len(vocab.rules)}"
        )
    values = np.zeros(N_FEATURES, dtype=np.float64)

    rules = productions(t)
    if rules:
        index = {key: i for i, key in enumerate(vocab.rules)}
        total = len(rules)
        for rule in rules:
            i = index.get(rule.key)
            if i is not None:
                values[i] += 1.0
        values[:N_RULE_FEATURES] /= total

    values[N_RULE_FEATURES] = depth(t)

    n_terminals = len(terminals(t))
    pos = N_RULE_FEATURES + 1
    for label in PHRASE_FULL:
        count, coverage, mean_len = phrase_stats(t, label)
        values[pos] = coverage / n_terminals if n_terminals else 0.0
        values[pos + 1] = mean_len
        values[pos + 2] = count
        pos += 3
    for label in PHRASE_SHORT:
        count, coverage, _ = phrase_stats(t, label)
        values[pos] = coverage / n_terminals if n_terminals else 0.0
        values[pos + 1] = count
        pos += 2

    present, count = icu_features(u.tokens, icu_words)
    values[pos] = 1.0 if present else 0.0
    values[pos + 1] = count

    return FeatureVector(values, feature_schema(vocab))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=np.float64) - self.mean) / self.scale


def fit_standardizer(train_matrix: np.ndarray) -> Standardizer:
    """Per-dimension z-scoring parameters from training rows only.

    Dimensions with (population) stddev below 1e-12 keep scale 1 so
    constant columns standardize to zero instead of blowing up.
    """
    m = np.asarray(train_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise FeatureError("standardizer requires a nonempty 2-D training matrix")
    mean = m.mean(axis=0)
    scale = m.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return Standardizer(mean, scale)


def write_feature_csv(path, rows: Sequence[tuple[str, str, np.ndarray]], schema: Sequence[str]) -> None:
    """Write ``(id, label, values)`` rows with an ``id,label,<schema>`` header."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "label", *schema])
        for uid, label, values in rows:
            writer.writerow([uid, label, *(repr(float(v)) for v in values)])


def read_feature_csv(path) -> tuple[list[str], list[str], np.ndarray, tuple[str, ...]]:
    """Read a feature CSV back into (ids, labels, matrix, schema)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "label"]:
            raise FeatureError(f"{path}: not a feature CSV (bad header)")
        schema = tuple(header[2:])
        ids: list[str] = []
        labels: list[str] = []
        values: list[list[float]] = []
        for row in reader:
            if len(row) != 2 + len(schema):
                raise FeatureError(f"{path}: row for id {row[0]!r} has wrong width")
            ids.append(row[0])
            labels.append(row[1])
            values.append([float(x) for x in row[2:]])
    matrix = np.array(values, dtype=np.float64).reshape(len(ids), len(schema))
    return ids, labels, matrix, schema
