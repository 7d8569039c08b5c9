"""Export per-layer [CLS] hidden states, optionally fine-tuning first.

The exporter feeds the probing toolkit: one binary store holds the
first-token hidden state from every encoder layer, one row per corpus
utterance, in corpus order.  Fine-tuning trains a sequence-classification
head on the train split over the epochs x learning-rate grid, selects the
cell with the best validation accuracy, then exports from that model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from transformers import (
    AutoModel,
    AutoModelForSequenceClassification,
    AutoTokenizer,
)

from .corpusio import Record, read_corpus
from .emwrite import write_store

EPOCHS_GRID = (2, 3, 4, 5, 6)
LEARNING_RATE_GRID = (2e-5, 2e-4)

LABEL_INDEX = {"Control": 0, "AD": 1}


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportConfig:
    model: str
    corpus: str
    out: str
    fine_tune: bool = False
    epochs_grid: tuple[int, ...] = EPOCHS_GRID
    learning_rates: tuple[float, ...] = LEARNING_RATE_GRID
    seed: int = 0
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if self.fine_tune:
            if not set(self.epochs_grid) <= set(EPOCHS_GRID):
                raise ExportError(
                    f"fine-tuning epochs must come from {EPOCHS_GRID}, got {self.epochs_grid}"
                )
            if not set(self.learning_rates) <= set(LEARNING_RATE_GRID):
                raise ExportError(
                    f"fine-tuning learning rates must come from {LEARNING_RATE_GRID}, "
                    f"got {self.learning_rates}"
                )
        if not self.epochs_grid or not self.learning_rates:
            raise ExportError("epochs and learning-rate grids must be nonempty")


def _seed_from(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _max_length(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None)
    if limit is None or limit <= 0:
        limit = int(tokenizer.model_max_length)
    return int(min(limit, tokenizer.model_max_length))


def _collect_cls(model, tokenizer, texts, batch_size, max_length):
    """(n_layers, n, dim) float32 of first-token states, plus truncated row indices."""
    model.eval()
    truncated = []
    per_batch = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            chunk = texts[start : start + batch_size]
            for offset, text in enumerate(chunk):
                if len(tokenizer(text)["input_ids"]) > max_length:
                    truncated.append(start + offset)
            enc = tokenizer(
                chunk,
                padding=True,
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
            )
            out = model(**enc, output_hidden_states=True)
            # hidden_states[0] is the embedding layer; encoder layers follow
            cls = torch.stack([h[:, 0, :] for h in out.hidden_states[1:]])
            per_batch.append(cls.to(torch.float32).cpu().numpy())
    layers = np.concatenate(per_batch, axis=1)
    return layers, truncated


@dataclass
class GridCell:
    epochs: int
    learning_rate: float
    val_accuracy: float


@dataclass
class ExportResult:
    n_layers: int
    n_rows: int
    dim: int
    truncated_ids: list[str]
    cells: list[GridCell] = field(default_factory=list)
    selected: Optional[int] = None


def _write_manifest(config: ExportConfig, result: ExportResult) -> None:
    manifest = {
        "model": config.model,
        "corpus": str(config.corpus),
        "out": str(config.out),
        "seed": config.seed,
        "fine_tune": config.fine_tune,
        "batch_size": config.batch_size,
        "n_layers": result.n_layers,
        "n_rows": result.n_rows,
        "dim": result.dim,
        "truncated_ids": result.truncated_ids,
    }
    if config.fine_tune:
        manifest["grid"] = [
            {
                "epochs": c.epochs,
                "learning_rate": c.learning_rate,
                "val_accuracy": c.val_accuracy,
            }
            for c in result.cells
        ]
        manifest["selected"] = result.selected
    with open(f"{config.out}.manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def _export_model(model, tokenizer, records: list[Record], config: ExportConfig) -> ExportResult:
    texts = [r.text for r in records]
    ids = [r.id for r in records]
    layers, truncated = _collect_cls(
        model, tokenizer, texts, config.batch_size, _max_length(tokenizer, model)
    )
    write_store(ids, layers, config.out)
    return ExportResult(
        n_layers=layers.shape[0],
        n_rows=layers.shape[1],
        dim=layers.shape[2],
        truncated_ids=[records[i].id for i in truncated],
    )


def export(config: ExportConfig) -> ExportResult:
    """Embed the corpus with the pretrained encoder and write the store."""
    records = read_corpus(config.corpus)
    torch.manual_seed(_seed_from(config.seed, "export"))
    tokenizer = AutoTokenizer.from_pretrained(config.model)
    model = AutoModel.from_pretrained(config.model)
    result = _export_model(model, tokenizer, records, config)
    _write_manifest(config, result)
    return result


def _epoch_accuracy(model, tokenizer, records, batch_size, max_length) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            chunk = records[start : start + batch_size]
            enc = tokenizer(
                [r.text for r in chunk],
                padding=True,
                truncation=True,
                max_length=max_length,
                return_tensors="pt",
            )
            logits = model(**enc).logits
            preds = logits.argmax(dim=-1).tolist()
            correct += sum(
                int(p == LABEL_INDEX[r.label]) for p, r in zip(preds, chunk)
            )
    return correct / len(records)


def finetune_then_export(config: ExportConfig) -> ExportResult:
    """Grid-search fine-tuning on the train split, select on val, export.

    One training run per learning rate covers every epoch count in the
    grid: training to e epochs under a fixed seed is a prefix of training
    to e+1, so validation accuracy is snapshotted as each grid epoch
    completes.
    """
    if not config.fine_tune:
        raise ExportError("finetune_then_export requires fine_tune=True")
    records = read_corpus(config.corpus)
    unknown = sorted({r.label for r in records} - set(LABEL_INDEX))
    if unknown:
        raise ExportError(f"unknown labels in corpus: {unknown}")
    train = [r for r in records if r.split == "train"]
    val = [r for r in records if r.split == "val"]
    if not train or not val:
        raise ExportError(
            "fine-tuning needs nonempty train and val splits "
            f"(found {len(train)} train, {len(val)} val)"
        )

    tokenizer = AutoTokenizer.from_pretrained(config.model)
    max_epochs = max(config.epochs_grid)
    cells: list[GridCell] = []
    best: Optional[tuple[float, int]] = None
    best_state = None

    for lr_index, lr in enumerate(config.learning_rates):
        torch.manual_seed(_seed_from(config.seed, "finetune", lr_index))
        model = AutoModelForSequenceClassification.from_pretrained(
            config.model, num_labels=2
        )
        max_length = _max_length(tokenizer, model)
        optimizer = torch.optim.Adam(model.parameters(), lr=lr)
        rng = np.random.default_rng(_seed_from(config.seed, "shuffle", lr_index))
        for epoch in range(1, max_epochs + 1):
            model.train()
            order = rng.permutation(len(train))
            for start in range(0, len(order), config.batch_size):
                chunk = [train[i] for i in order[start : start + config.batch_size]]
                enc = tokenizer(
                    [r.text for r in chunk],
                    padding=True,
                    truncation=True,
                    max_length=max_length,
                    return_tensors="pt",
                )
                labels = torch.tensor([LABEL_INDEX[r.label] for r in chunk])
                optimizer.zero_grad()
                loss = model(**enc, labels=labels).loss
                loss.backward()
                optimizer.step()
            if epoch in config.epochs_grid:
                acc = _epoch_accuracy(model, tokenizer, val, config.batch_size, max_length)
                cells.append(GridCell(epoch, lr, acc))
                if best is None or acc > best[0]:
                    best = (acc, len(cells) - 1)
                    best_state = {
                        k: v.detach().cpu().clone() for k, v in model.state_dict().items()
                    }

    assert best is not None and best_state is not None
    selected = best[1]
    torch.manual_seed(_seed_from(config.seed, "finetune", 0))
    model = AutoModelForSequenceClassification.from_pretrained(config.model, num_labels=2)
    model.load_state_dict(best_state)
    result = _export_model(model, tokenizer, records, config)
    result.cells = cells
    result.selected = selected
    _write_manifest(config, result)
    return result


def run(config: ExportConfig) -> ExportResult:
    if config.fine_tune:
        return finetune_then_export(config)
    return export(config)
