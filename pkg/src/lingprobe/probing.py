"""Probing tasks over layer-wise sentence embeddings.

Five auxiliary classification tasks test what a frozen embedding encodes:
two surface properties (which content word occurs, sentence length) and
three syntactic ones (top-constituent sequence, parse-tree depth, adjacent
token inversion).  Dataset construction is a pure function of (corpus,
config); per-utterance randomness is derived from stable hashes so results
do not depend on corpus order or scheduling.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import embio
from .corpus import Corpus, require_parses, require_splits
from .mlp import MLPConfig, TrainConfig, accuracy, grid_search
from .parsetree import depth, parse_ptb, top_constituents
from .util import derived_rng, stable_hash


class ProbingError(ValueError):
    """Dataset cannot be built or probed as requested."""


class ProbingTask(Enum):
    WORD_CONTENT = "WordContent"
    SENTENCE_LENGTH = "SentenceLength"
    TOP_CONSTITUENTS = "TopConstituents"
    TREE_DEPTH = "TreeDepth"
    BIGRAM_SHIFT = "BiGramShift"


TASK_ORDER = (
    ProbingTask.WORD_CONTENT,
    ProbingTask.SENTENCE_LENGTH,
    ProbingTask.TOP_CONSTITUENTS,
    ProbingTask.TREE_DEPTH,
    ProbingTask.BIGRAM_SHIFT,
)

FEATURE_TYPE = {
    ProbingTask.WORD_CONTENT: "Surface",
    ProbingTask.SENTENCE_LENGTH: "Surface",
    ProbingTask.TOP_CONSTITUENTS: "Syntactic",
    ProbingTask.TREE_DEPTH: "Syntactic",
    ProbingTask.BIGRAM_SHIFT: "Syntactic",
}

SYNTACTIC_INPUT_TASKS = (ProbingTask.TOP_CONSTITUENTS, ProbingTask.TREE_DEPTH)


@dataclass(frozen=True)
class ProbingConfig:
    seed: int = 0
    sentence_length_bins: int = 6
    depth_percentiles: tuple[float, float] = (5.0, 95.0)
    top_sequences: int = 19
    word_content_targets: int = 50


@dataclass(frozen=True)
class ProbingInstance:
    utterance_id: str
    label: int
    split: str
    perturbed_text: Optional[str] = None


@dataclass(frozen=True)
class ProbingDataset:
    task: ProbingTask
    instances: tuple[ProbingInstance, ...]
    n_classes: int
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.class_names) != self.n_classes:
            raise ProbingError(
                f"{len(self.class_names)} class names for {self.n_classes} classes"
            )
        for inst in self.instances:
            if not 0 <= inst.label < self.n_classes:
                raise ProbingError(
                    f"label {inst.label} out of range for id {inst.utterance_id!r}"
                )

    def ids(self) -> list[str]:
        return [inst.utterance_id for inst in self.instances]

    def labels(self) -> np.ndarray:
        return np.array([inst.label for inst in self.instances], dtype=int)


def _parsed(corpus: Corpus) -> dict[str, object]:
    require_parses(corpus)
    return {u.id: parse_ptb(u.parse) for u in corpus}


def _build_sentence_length(corpus: Corpus, config: ProbingConfig) -> ProbingDataset:
    n_bins = config.sentence_length_bins
    train_lengths = [len(u.tokens) for u in corpus.subset("train")]
    if not train_lengths:
        raise ProbingError("train split is empty")
    edges = [
        float(np.quantile(train_lengths, q / n_bins)) for q in range(1, n_bins)
    ]
    instances = tuple(
        ProbingInstance(u.id, bisect.bisect_left(edges, len(u.tokens)), u.split)
        for u in corpus
    )
    names = tuple(f"len_q{i}" for i in range(n_bins))
    return ProbingDataset(ProbingTask.SENTENCE_LENGTH, instances, n_bins, names)


def _build_tree_depth(corpus: Corpus, config: ProbingConfig) -> ProbingDataset:
    trees = _parsed(corpus)
    depths = {uid: depth(t) for uid, t in trees.items()}
    train_depths = [depths[u.id] for u in corpus.subset("train")]
    if not train_depths:
        raise ProbingError("train split is empty")
    lo_pct, hi_pct = config.depth_percentiles
    lo = int(np.percentile(train_depths, lo_pct, method="lower"))
    hi = int(np.percentile(train_depths, hi_pct, method="higher"))
    n_classes = hi - lo + 1
    instances = tuple(
        ProbingInstance(u.id, int(np.clip(depths[u.id], lo, hi)) - lo, u.split)
        for u in corpus
    )
    names = tuple(f"depth_{d}" for d in range(lo, hi + 1))
    return ProbingDataset(ProbingTask.TREE_DEPTH, instances, n_classes, names)


def _build_top_constituents(corpus: Corpus, config: ProbingConfig) -> ProbingDataset:
    trees = _parsed(corpus)
    sequences = {uid: " ".join(top_constituents(t)) for uid, t in trees.items()}
    counts: dict[str, int] = {}
    for u in corpus.subset("train"):
        seq = sequences[u.id]
        counts[seq] = counts.get(seq, 0) + 1
    if not counts:
        raise ProbingError("train split is empty")
    top = sorted(counts, key=lambda s: (-counts[s], s))[: config.top_sequences]
    names = list(top)
    while len(names) < config.top_sequences:
        names.append(f"UNUSED_{len(names) + 1:02d}")
    names.append("OTHER")
    index = {seq: i for i, seq in enumerate(top)}
    other = len(names) - 1
    instances = tuple(
        ProbingInstance(u.id, index.get(sequences[u.id], other), u.split)
        for u in corpus
    )
    return ProbingDataset(
        ProbingTask.TOP_CONSTITUENTS, instances, len(names), tuple(names)
    )


def _build_bigram_shift(corpus: Corpus, config: ProbingConfig) -> ProbingDataset:
    """Fair coin per utterance; heads swaps one random adjacent token pair.

    Swap positions are drawn among pairs whose tokens differ, so a flipped
    instance always differs from its source.  The text to embed (original
    token sequence or the swapped one) rides along on every instance.
    """
    instances = []
    for u in corpus:
        if len(u.tokens) < 2:
            continue
        rng = derived_rng(config.seed, "bigram", u.id)
        flip = bool(rng.integers(0, 2))
        tokens = list(u.tokens)
        label = 0
        if flip:
            candidates = [
                i for i in range(len(tokens) - 1) if tokens[i] != tokens[i + 1]
            ]
            if candidates:
                pos = candidates[int(rng.integers(0, len(candidates)))]
                tokens[pos], tokens[pos + 1] = tokens[pos + 1], tokens[pos]
                label = 1
        instances.append(ProbingInstance(u.id, label, u.split, " ".join(tokens)))
    return ProbingDataset(
        ProbingTask.BIGRAM_SHIFT, tuple(instances), 2, ("original", "inverted")
    )


def _build_word_content(corpus: Corpus, config: ProbingConfig) -> ProbingDataset:
    """W-way classification: which of W mid-frequency words the sentence holds.

    Targets are the middle band of alphabetic train-split words occurring at
    least twice, ranked by frequency; only utterances containing exactly one
    occurrence of exactly one target are kept.
    """
    w = config.word_content_targets
    counts: dict[str, int] = {}
    for u in corpus.subset("train"):
        for tok in u.tokens:
            if tok.isalpha():
                counts[tok] = counts.get(tok, 0) + 1
    candidates = sorted(
        (t for t, c in counts.items() if c >= 2), key=lambda t: (-counts[t], t)
    )
    if len(candidates) < w:
        raise ProbingError(
            f"only {len(candidates)} qualifying words for {w} content targets"
        )
    start = (len(candidates) - w) // 2
    targets = candidates[start : start + w]
    index = {t: i for i, t in enumerate(targets)}
    instances = []
    for u in corpus:
        hits = [tok for tok in u.tokens if tok in index]
        if len(hits) == 1:
            instances.append(ProbingInstance(u.id, index[hits[0]], u.split))
    return ProbingDataset(
        ProbingTask.WORD_CONTENT, tuple(instances), w, tuple(targets)
    )


_BUILDERS = {
    ProbingTask.SENTENCE_LENGTH: _build_sentence_length,
    ProbingTask.TREE_DEPTH: _build_tree_depth,
    ProbingTask.TOP_CONSTITUENTS: _build_top_constituents,
    ProbingTask.BIGRAM_SHIFT: _build_bigram_shift,
    ProbingTask.WORD_CONTENT: _build_word_content,
}


def build_probing_dataset(
    task: ProbingTask, corpus: Corpus, config: ProbingConfig = ProbingConfig()
) -> ProbingDataset:
    require_splits(corpus)
    return _BUILDERS[task](corpus, config)


ProbeGridCell = tuple[tuple[int, ...], float]


def default_probe_cells() -> list[ProbeGridCell]:
    """Hidden depth 1-3 x units {10, 100} x head learning rates."""
    from .mlp import GRID_HIDDEN_LAYER_COUNTS, GRID_UNITS, HEAD_LEARNING_RATES

    return [
        ((units,) * n_layers, lr)
        for n_layers in GRID_HIDDEN_LAYER_COUNTS
        for units in GRID_UNITS
        for lr in HEAD_LEARNING_RATES
    ]


@dataclass(frozen=True)
class ProbeResult:
    task: ProbingTask
    layer: int
    accuracy: float
    val_accuracy: float
    hidden_layers: tuple[int, ...]
    learning_rate: float


def run_probe(
    dataset: ProbingDataset,
    store: embio.EmbeddingStore,
    layer: int,
    grid: Sequence[ProbeGridCell],
    seed: int = 0,
) -> ProbeResult:
    """Grid-search a probe on one layer; select on val, report test accuracy.

    Test rows are never seen during training or selection; only the chosen
    model touches them, once.
    """
    if not grid:
        raise ProbingError("probe hyperparameter grid is empty")
    if not 1 <= layer <= store.n_layers:
        raise ProbingError(f"layer {layer} out of range 1..{store.n_layers}")
    row_of = embio.align(store, dataset.ids())
    matrix = store.layer(layer)

    split_x: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test": []}
    split_y: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for inst in dataset.instances:
        split_x[inst.split].append(matrix[row_of[inst.utterance_id]])
        split_y[inst.split].append(inst.label)
    arrays = {}
    for name in ("train", "val", "test"):
        if not split_x[name]:
            raise ProbingError(f"{name} split of {dataset.task.value} dataset is empty")
        arrays[name] = (np.stack(split_x[name]), np.array(split_y[name], dtype=int))

    dim = store.dim
    mlp_grid = [
        (
            MLPConfig(dim, tuple(hidden), dataset.n_classes),
            TrainConfig(learning_rate=lr),
        )
        for hidden, lr in grid
    ]
    result = grid_search(
        mlp_grid,
        arrays["train"],
        arrays["val"],
        seed=stable_hash(seed, dataset.task.value, layer),
    )
    test_acc = accuracy(result.best_model, arrays["test"][0], arrays["test"][1])
    hidden, lr = grid[result.best_index]
    return ProbeResult(
        task=dataset.task,
        layer=layer,
        accuracy=test_acc,
        val_accuracy=result.val_accuracies[result.best_index],
        hidden_layers=tuple(hidden),
        learning_rate=lr,
    )


@dataclass(frozen=True)
class ProbeReportRow:
    task: ProbingTask
    accuracy: float
    layer: int
    feature_type: str
    worst_in_type: bool


def probe_report(results: Sequence[ProbeResult]) -> list[ProbeReportRow]:
    """Best layer per task, with the weakest row of each feature type flagged."""
    if not results:
        raise ProbingError("no probe results to report")
    best: dict[ProbingTask, ProbeResult] = {}
    for r in results:
        cur = best.get(r.task)
        if cur is None or r.accuracy > cur.accuracy or (
            r.accuracy == cur.accuracy and r.layer < cur.layer
        ):
            best[r.task] = r
    worst_of_type: dict[str, float] = {}
    for r in best.values():
        ftype = FEATURE_TYPE[r.task]
        worst_of_type[ftype] = min(worst_of_type.get(ftype, np.inf), r.accuracy)
    return [
        ProbeReportRow(
            task=r.task,
            accuracy=r.accuracy,
            layer=r.layer,
            feature_type=FEATURE_TYPE[r.task],
            worst_in_type=r.accuracy == worst_of_type[FEATURE_TYPE[r.task]],
        )
        for r in (best[t] for t in TASK_ORDER if t in best)
    ]


def render_probe_report(rows: Sequence[ProbeReportRow]) -> str:
    header = ("Linguistic Feature", "Highest Accuracy", "Layer", "Feature Type")
    table = [
        (
            ("* " if row.worst_in_type else "  ") + row.task.value,
            f"{100.0 * row.accuracy:.2f}",
            str(row.layer),
            row.feature_type,
        )
        for row in rows
    ]
    widths = [
        max(len(header[c]), *(len(r[c]) for r in table)) if table else len(header[c])
        for c in range(4)
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for r in table:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    lines.append("")
    lines.append("* lowest accuracy within its feature type")
    return "\n".join(lines) + "\n"


def write_probe_report_csv(rows: Sequence[ProbeReportRow], path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["task", "highest_accuracy", "layer", "feature_type", "worst_in_type"])
        for r in rows:
            writer.writerow(
                [r.task.value, f"{100.0 * r.accuracy:.2f}", r.layer, r.feature_type, int(r.worst_in_type)]
            )


def write_probing_dataset(dataset: ProbingDataset, path) -> None:
    """JSONL instances plus a ``<path>.meta.json`` sidecar with class info."""
    with open(path, "w", encoding="utf-8") as f:
        for inst in dataset.instances:
            record = {
                "id": inst.utterance_id,
                "label": inst.label,
                "class_name": dataset.class_names[inst.label],
            }
            if inst.perturbed_text is not None:
                record["perturbed_text"] = inst.perturbed_text
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    meta = {
        "task": dataset.task.value,
        "n_classes": dataset.n_classes,
        "class_names": list(dataset.class_names),
    }
    with open(f"{path}.meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def load_probing_dataset(path, corpus: Corpus) -> ProbingDataset:
    """Load instances back, joining split tags from ``corpus``."""
    require_splits(corpus)
    with open(f"{path}.meta.json", "r", encoding="utf-8") as f:
        meta = json.load(f)
    task = ProbingTask(meta["task"])
    instances = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            u = corpus.get(record["id"])
            instances.append(
                ProbingInstance(
                    u.id, int(record["label"]), u.split, record.get("perturbed_text")
                )
            )
    return ProbingDataset(
        task, tuple(instances), int(meta["n_classes"]), tuple(meta["class_names"])
    )


def write_derived_corpus(dataset: ProbingDataset, corpus: Corpus, path) -> None:
    """Corpus JSONL of the texts a perturbation task needs re-embedded."""
    with open(path, "w", encoding="utf-8") as f:
        for inst in dataset.instances:
            if inst.perturbed_text is None:
                raise ProbingError(
                    f"instance {inst.utterance_id!r} carries no text to re-embed"
                )
            u = corpus.get(inst.utterance_id)
            record = {
                "id": u.id,
                "speaker": u.speaker_id,
                "text": inst.perturbed_text,
                "label": u.label,
                "split": u.split,
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
