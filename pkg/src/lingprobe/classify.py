"""Utterance-level diagnosis classifiers and their evaluation.

Three input settings are compared: the hand-crafted feature vector alone,
a frozen sentence embedding alone, and their concatenation.  Model
selection uses seeded 5-fold cross-validation inside the train split; the
fixed validation split stays reserved for probe selection.  The test split
is touched exactly once per experiment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import embio
from .corpus import Corpus, POSITIVE_LABEL, require_splits
from .features import fit_standardizer
from .mlp import (
    GRID_HIDDEN_LAYER_COUNTS,
    GRID_UNITS,
    HEAD_LEARNING_RATES,
    MLPConfig,
    TrainConfig,
    accuracy,
    init_mlp,
    predict,
    train,
)
from .util import stable_hash


class ClassifyError(ValueError):
    """Missing sources, misaligned inputs, or invalid evaluation calls."""


class ModelSetting(Enum):
    FEATURES_ONLY = "features-only"
    EMBEDDING_ONLY = "embedding-only"
    EMBEDDING_PLUS_FEATURES = "embedding+features"


SETTING_ORDER = (
    ModelSetting.FEATURES_ONLY,
    ModelSetting.EMBEDDING_ONLY,
    ModelSetting.EMBEDDING_PLUS_FEATURES,
)


@dataclass(frozen=True)
class EvalMetrics:
    """Binary confusion counts and derived rates; positive class is AD.

    Sensitivity and specificity are ``None`` when their denominator is
    zero (no positives / no negatives present) rather than being forced
    to 0.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]


def evaluate(predictions: Sequence[int], labels: Sequence[int]) -> EvalMetrics:
    preds = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if preds.shape != y.shape:
        raise ClassifyError(
            f"predictions ({preds.shape}) and labels ({y.shape}) differ in length"
        )
    if preds.size == 0:
        raise ClassifyError("cannot evaluate an empty prediction vector")
    tp = int(np.sum((preds == 1) & (y == 1)))
    fp = int(np.sum((preds == 1) & (y == 0)))
    tn = int(np.sum((preds == 0) & (y == 0)))
    fn = int(np.sum((preds == 0) & (y == 1)))
    return EvalMetrics(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=(tp + tn) / preds.size,
        sensitivity=tp / (tp + fn) if tp + fn > 0 else None,
        specificity=tn / (tn + fp) if tn + fp > 0 else None,
    )


@dataclass(frozen=True)
class SplitData:
    x_train: np.ndarray
    y_train: np.ndarray
    train_ids: tuple[str, ...]
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.x_train.shape[1]


def assemble_inputs(
    setting: ModelSetting,
    corpus: Corpus,
    store: Optional[embio.EmbeddingStore] = None,
    features: Optional[tuple[Sequence[str], np.ndarray]] = None,
    layer: Optional[int] = None,
) -> SplitData:
    """Per-split input matrices and binary labels for one setting.

    ``features`` is an (ids, matrix) pair as read from a feature CSV.  The
    feature block is z-scored with statistics fit on the train split only;
    the embedding block is taken from the store's final layer unless
    ``layer`` says otherwise.
    """
    require_splits(corpus)
    needs_features = setting in (
        ModelSetting.FEATURES_ONLY,
        ModelSetting.EMBEDDING_PLUS_FEATURES,
    )
    needs_store = setting in (
        ModelSetting.EMBEDDING_ONLY,
        ModelSetting.EMBEDDING_PLUS_FEATURES,
    )
    if needs_features and features is None:
        raise ClassifyError(f"{setting.value} requires a feature table")
    if needs_store and store is None:
        raise ClassifyError(f"{setting.value} requires an embedding store")

    blocks: list[np.ndarray] = []
    if needs_store:
        row_of = embio.align(store, corpus.ids)
        matrix = store.layer(store.n_layers if layer is None else layer)
        blocks.append(np.stack([matrix[row_of[uid]] for uid in corpus.ids]))
    if needs_features:
        ids, feat_matrix = features
        feat_row = {uid: i for i, uid in enumerate(ids)}
        missing = [uid for uid in corpus.ids if uid not in feat_row]
        if missing:
            shown = ", ".join(repr(i) for i in missing[:10])
            raise ClassifyError(f"ids missing from feature table: {shown}")
        raw = np.stack([feat_matrix[feat_row[uid]] for uid in corpus.ids])
        is_train = np.array([u.split == "train" for u in corpus])
        standardizer = fit_standardizer(raw[is_train])
        blocks.append(standardizer.apply(raw))
    x_all = np.concatenate(blocks, axis=1)

    y_all = np.array([1 if u.label == POSITIVE_LABEL else 0 for u in corpus], dtype=int)
    masks = {name: np.array([u.split == name for u in corpus]) for name in ("train", "val", "test")}
    for name, mask in masks.items():
        if not mask.any():
            raise ClassifyError(f"{name} split is empty")
    train_ids = tuple(uid for uid, m in zip(corpus.ids, masks["train"]) if m)
    return SplitData(
        x_train=x_all[masks["train"]],
        y_train=y_all[masks["train"]],
        train_ids=train_ids,
        x_val=x_all[masks["val"]],
        y_val=y_all[masks["val"]],
        x_test=x_all[masks["test"]],
        y_test=y_all[masks["test"]],
    )


ClassifierGridCell = tuple[tuple[int, ...], float]


def default_classifier_grid(setting: ModelSetting) -> list[ClassifierGridCell]:
    """Hidden-layer architectures for the feature model; linear head otherwise."""
    if setting is ModelSetting.FEATURES_ONLY:
        return [
            ((units,) * n_layers, lr)
            for n_layers in GRID_HIDDEN_LAYER_COUNTS
            for units in GRID_UNITS
            for lr in HEAD_LEARNING_RATES
        ]
    return [((), lr) for lr in HEAD_LEARNING_RATES]


@dataclass(frozen=True)
class ExperimentResult:
    setting: ModelSetting
    metrics: EvalMetrics
    chosen_hidden: tuple[int, ...]
    chosen_learning_rate: float
    cell_scores: tuple[float, ...]
    n_folds: int


def _fold_index(train_ids: Sequence[str], n_folds: int, seed: int) -> np.ndarray:
    order = sorted(
        range(len(train_ids)),
        key=lambda i: (stable_hash(seed, "fold", train_ids[i]), train_ids[i]),
    )
    folds = np.empty(len(train_ids), dtype=int)
    for rank, i in enumerate(order):
        folds[i] = rank % n_folds
    return folds


def run_experiment(
    setting: ModelSetting,
    corpus: Corpus,
    store: Optional[embio.EmbeddingStore] = None,
    features: Optional[tuple[Sequence[str], np.ndarray]] = None,
    grid: Optional[Sequence[ClassifierGridCell]] = None,
    seed: int = 0,
    n_folds: int = 5,
    layer: Optional[int] = None,
    train_defaults: Optional[TrainConfig] = None,
) -> ExperimentResult:
    """Cross-validated grid search, final refit, one pass over the test split."""
    if grid is None:
        grid = default_classifier_grid(setting)
    if not grid:
        raise ClassifyError("classifier hyperparameter grid is empty")
    data = assemble_inputs(setting, corpus, store=store, features=features, layer=layer)
    if len(data.train_ids) < n_folds:
        raise ClassifyError(
            f"train split has {len(data.train_ids)} rows, too few for {n_folds}-fold CV"
        )
    folds = _fold_index(data.train_ids, n_folds, seed)

    def make_train_config(lr: float) -> TrainConfig:
        if train_defaults is None:
            return TrainConfig(learning_rate=lr)
        return TrainConfig(
            learning_rate=lr,
            batch_size=train_defaults.batch_size,
            max_epochs=train_defaults.max_epochs,
            patience=train_defaults.patience,
        )

    cell_scores: list[float] = []
    for index, (hidden, lr) in enumerate(grid):
        fold_accs = []
        for fold in range(n_folds):
            held = folds == fold
            cell_seed = stable_hash(seed, setting.value, "cell", index, "fold", fold)
            config = MLPConfig(
                data.input_dim,
                tuple(hidden),
                2,
                seed=stable_hash(cell_seed, "init"),
                allow_linear=not hidden,
            )
            model, _ = train(
                init_mlp(config),
                (data.x_train[~held], data.y_train[~held]),
                (data.x_train[held], data.y_train[held]),
                make_train_config(lr),
                seed=cell_seed,
            )
            fold_accs.append(accuracy(model, data.x_train[held], data.y_train[held]))
        cell_scores.append(float(np.mean(fold_accs)))

    best = int(np.argmax(cell_scores))
    hidden, lr = grid[best]
    final_seed = stable_hash(seed, setting.value, "final")
    config = MLPConfig(
        data.input_dim,
        tuple(hidden),
        2,
        seed=stable_hash(final_seed, "init"),
        allow_linear=not hidden,
    )
    model, _ = train(
        init_mlp(config),
        (data.x_train, data.y_train),
        None,
        make_train_config(lr),
        seed=final_seed,
    )
    metrics = evaluate(predict(model, data.x_test), data.y_test)
    return ExperimentResult(
        setting=setting,
        metrics=metrics,
        chosen_hidden=tuple(hidden),
        chosen_learning_rate=lr,
        cell_scores=tuple(cell_scores),
        n_folds=n_folds,
    )


@dataclass(frozen=True)
class ClassifierReportRow:
    model_name: str
    metrics: EvalMetrics


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def render_classifier_report(rows: Sequence[ClassifierReportRow]) -> str:
    header = ("Model", "Accuracy", "Sensitivity", "Specificity")
    table = [
        (
            row.model_name,
            _fmt(row.metrics.accuracy),
            _fmt(row.metrics.sensitivity),
            _fmt(row.metrics.specificity),
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
    return "\n".join(lines) + "\n"


def write_classifier_report_csv(rows: Sequence[ClassifierReportRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "accuracy", "sensitivity", "specificity"])
        for row in rows:
            writer.writerow(
                [
                    row.model_name,
                    _fmt(row.metrics.accuracy),
                    _fmt(row.metrics.sensitivity),
                    _fmt(row.metrics.specificity),
                ]
            )
