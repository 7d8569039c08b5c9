"""Acceptance suite for the exporter: the cross-component contract.

The exported file must be accepted by the probing toolkit's own reader
(the single tested boundary between the two packages), with the declared
shapes, and the fine-tuning manifest must cover the full hyperparameter
grid with the best cell exported.
"""

import functools
import json
import time

from embexport.export import ExportConfig, export, finetune_then_export

from lingprobe.embio import align, read_embeddings

from conftest import write_corpus


def criterion(name: str, budget_seconds: float):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            ok = False
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - start
                assert elapsed < budget_seconds, (
                    f"{name} took {elapsed:.1f}s, budget {budget_seconds}s"
                )
                ok = True
            finally:
                print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}")
        return run
    return wrap


@criterion("exporter-contract-round-trip", 300.0)
def test_exporter_contract(tiny_model_dir, tmp_path):
    corpus_path = write_corpus(tmp_path / "c.jsonl", n=24)
    out = tmp_path / "emb.lpem"
    result = export(ExportConfig(tiny_model_dir, str(corpus_path), str(out), seed=5))

    store = read_embeddings(out)  # validates magic, sizes, finiteness
    assert (store.n_layers, store.n_rows, store.dim) == (3, 24, 16)
    assert (result.n_layers, result.n_rows, result.dim) == (3, 24, 16)

    corpus_ids = [f"u{i:04d}" for i in range(24)]
    assert store.ids == tuple(corpus_ids)  # row order equals corpus order
    mapping = align(store, corpus_ids)
    assert mapping == {uid: i for i, uid in enumerate(corpus_ids)}


@criterion("finetune-grid-manifest", 300.0)
def test_finetune_grid(tiny_model_dir, tmp_path):
    corpus_path = write_corpus(tmp_path / "c.jsonl", n=40)
    out = tmp_path / "emb.lpem"
    config = ExportConfig(
        tiny_model_dir, str(corpus_path), str(out),
        fine_tune=True, seed=2, batch_size=8,
    )
    result = finetune_then_export(config)

    manifest = json.loads((tmp_path / "emb.lpem.manifest.json").read_text())
    grid = manifest["grid"]
    assert len(grid) == 10  # epochs {2..6} x learning rates {2e-5, 2e-4}
    seen = {(c["epochs"], c["learning_rate"]) for c in grid}
    assert seen == {(e, lr) for e in (2, 3, 4, 5, 6) for lr in (2e-5, 2e-4)}

    scores = [c["val_accuracy"] for c in grid]
    assert scores[manifest["selected"]] == max(scores)
    assert result.selected == manifest["selected"]

    store = read_embeddings(out)
    assert (store.n_layers, store.n_rows, store.dim) == (3, 40, 16)
