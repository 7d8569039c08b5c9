"""Command-line pipeline driver.

Subcommands: ``extract-features``, ``build-probe``, ``train-probe``,
``train-classifier``, ``report``.  A ``--config`` JSON file can mirror any
flag (flags win).  Every subcommand validates its input paths up front,
writes its artifacts plus a run manifest, and exits 0 only if everything
was written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import classify, embio, features, manifest, probing
from .corpus import CorpusError, assign_splits, load_corpus, require_parses
from .features import FeatureError
from .mlp import MLPError
from .parsetree import TreeParseError, parse_ptb

DEFAULT_SEED = 13
DEFAULT_RATIOS = (0.82, 0.09, 0.09)

TASK_BY_NAME = {
    "word-content": probing.ProbingTask.WORD_CONTENT,
    "sentence-length": probing.ProbingTask.SENTENCE_LENGTH,
    "top-constituents": probing.ProbingTask.TOP_CONSTITUENTS,
    "tree-depth": probing.ProbingTask.TREE_DEPTH,
    "bigram-shift": probing.ProbingTask.BIGRAM_SHIFT,
}
NAME_BY_TASK = {v: k for k, v in TASK_BY_NAME.items()}

SETTING_BY_NAME = {s.value: s for s in classify.ModelSetting}

_ERRORS = (
    CorpusError,
    FeatureError,
    TreeParseError,
    MLPError,
    probing.ProbingError,
    classify.ClassifyError,
    embio.EmbeddingFormatError,
    embio.EmbeddingValueError,
    OSError,
)


class CliError(ValueError):
    pass


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise CliError(f"--ratios expects three comma-separated fractions, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated integers, got {text!r}") from None


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def _resolve(args, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return args.config_values.get(name.replace("_", "-"), args.config_values.get(name, default))


def _require_files(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        if not Path(p).is_file():
            raise CliError(f"input file not found: {p}")


def _load_tagged_corpus(path, ratios, seed, by_speaker=False):
    corpus = load_corpus(path)
    if len(corpus) == 0:
        raise CliError(f"corpus {path} is empty")
    return assign_splits(corpus, ratios=ratios, seed=seed, by_speaker=by_speaker)


def _grid_from_args(args, default):
    layer_counts = _resolve(args, "grid_layers")
    units = _resolve(args, "grid_units")
    lrs = _resolve(args, "grid_lrs")
    if layer_counts is None and units is None and lrs is None:
        return default
    layer_counts = _parse_int_list(layer_counts, "--grid-layers") if layer_counts else [1, 2, 3]
    units = _parse_int_list(units, "--grid-units") if units else [10, 100]
    lrs = _parse_float_list(lrs, "--grid-lrs") if lrs else [1e-3, 1e-4]
    grid = []
    for n_layers in layer_counts:
        if n_layers == 0:
            for lr in lrs:
                grid.append(((), lr))
            continue
        for u in units:
            for lr in lrs:
                grid.append(((u,) * n_layers, lr))
    # layer count 0 yields one linear cell per learning rate
    seen = []
    for cell in grid:
        if cell not in seen:
            seen.append(cell)
    return seen


def _parse_trees(corpus):
    try:
        return {u.id: parse_ptb(u.parse) for u in corpus}
    except TreeParseError as exc:
        raise CliError(f"invalid parse string: {exc}") from None


def cmd_extract_features(args) -> int:
    seed = _resolve(args, "seed", DEFAULT_SEED)
    ratios = _parse_ratios(str(_resolve(args, "ratios", "0.82,0.09,0.09")))
    corpus_path = _resolve(args, "corpus")
    out_path = _resolve(args, "out")
    icu_path = _resolve(args, "icu_list")
    if corpus_path is None or out_path is None:
        raise CliError("extract-features requires --corpus and --out")
    _require_files(corpus_path, icu_path)

    corpus = _load_tagged_corpus(corpus_path, ratios, seed)
    require_parses(corpus)
    trees = _parse_trees(corpus)
    icu_words = features.load_icu_words(icu_path)
    train_trees = [trees[u.id] for u in corpus.subset("train")]
    vocab = features.build_rule_vocabulary(train_trees)
    rows = [
        (u.id, u.label, features.extract_features(u, trees[u.id], vocab, icu_words).values)
        for u in corpus
    ]
    features.write_feature_csv(out_path, rows, features.feature_schema(vocab))

    vocab_path = _resolve(args, "vocab_out", f"{out_path}.vocab.json")
    with open(vocab_path, "w", encoding="utf-8") as f:
        json.dump(
            {"rules": list(vocab.rules), "source": vocab.source},
            f,
            ensure_ascii=False,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")

    config = {
        "command": "extract-features",
        "corpus": str(corpus_path),
        "out": str(out_path),
        "vocab_out": str(vocab_path),
        "icu_list": None if icu_path is None else str(icu_path),
        "ratios": list(ratios),
        "seed": seed,
    }
    inputs = [corpus_path] + ([icu_path] if icu_path else [])
    m = manifest.build_manifest("extract-features", config, inputs, [out_path, vocab_path])
    manifest.write_manifest(m, manifest.manifest_path_for(out_path))
    print(f"wrote {out_path} ({len(rows)} rows, {len(features.feature_schema(vocab))} features)")
    return 0


def _probing_config(args, seed) -> probing.ProbingConfig:
    return probing.ProbingConfig(
        seed=seed,
        word_content_targets=int(_resolve(args, "wc_targets", 50)),
    )


def cmd_build_probe(args) -> int:
    seed = _resolve(args, "seed", DEFAULT_SEED)
    ratios = _parse_ratios(str(_resolve(args, "ratios", "0.82,0.09,0.09")))
    corpus_path = _resolve(args, "corpus")
    task_name = _resolve(args, "task")
    if corpus_path is None or task_name is None:
        raise CliError("build-probe requires --corpus and --task")
    _require_files(corpus_path)
    corpus = _load_tagged_corpus(corpus_path, ratios, seed)
    config = _probing_config(args, seed)

    if task_name == "all":
        out_dir = _resolve(args, "out_dir")
        if out_dir is None:
            raise CliError("build-probe --task all requires --out-dir")
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        tasks = list(probing.TASK_ORDER)
        out_of = {t: out_dir / f"probe_{NAME_BY_TASK[t].replace('-', '_')}.jsonl" for t in tasks}
    else:
        if task_name not in TASK_BY_NAME:
            raise CliError(f"unknown probing task {task_name!r}")
        out_path = _resolve(args, "out")
        if out_path is None:
            raise CliError("build-probe requires --out for a single task")
        tasks = [TASK_BY_NAME[task_name]]
        out_of = {tasks[0]: Path(out_path)}

    outputs = []
    for task in tasks:
        dataset = probing.build_probing_dataset(task, corpus, config)
        path = out_of[task]
        probing.write_probing_dataset(dataset, path)
        outputs += [path, Path(f"{path}.meta.json")]
        if task is probing.ProbingTask.BIGRAM_SHIFT:
            derived = _resolve(args, "derived_corpus", str(path.with_name(path.stem + "_corpus.jsonl")))
            probing.write_derived_corpus(dataset, corpus, derived)
            outputs.append(Path(derived))
        print(f"wrote {path} ({len(dataset.instances)} instances, {dataset.n_classes} classes)")

    config_dict = {
        "command": "build-probe",
        "corpus": str(corpus_path),
        "task": task_name,
        "outputs": [str(p) for p in outputs],
        "ratios": list(ratios),
        "seed": seed,
        "wc_targets": config.word_content_targets,
    }
    anchor = outputs[0]
    m = manifest.build_manifest("build-probe", config_dict, [corpus_path], outputs)
    manifest.write_manifest(m, manifest.manifest_path_for(anchor))
    return 0


def cmd_train_probe(args) -> int:
    seed = _resolve(args, "seed", DEFAULT_SEED)
    ratios = _parse_ratios(str(_resolve(args, "ratios", "0.82,0.09,0.09")))
    corpus_path = _resolve(args, "corpus")
    emb_path = _resolve(args, "embeddings")
    bigram_emb_path = _resolve(args, "bigram_embeddings")
    dataset_path = _resolve(args, "dataset")
    out_dir = _resolve(args, "out_dir")
    task_name = _resolve(args, "task")
    layer_arg = _resolve(args, "layer", "all")
    if None in (corpus_path, emb_path, out_dir, task_name):
        raise CliError("train-probe requires --corpus, --embeddings, --task and --out-dir")
    _require_files(corpus_path, emb_path, bigram_emb_path)
    if dataset_path is not None:
        _require_files(dataset_path, f"{dataset_path}.meta.json")

    corpus = _load_tagged_corpus(corpus_path, ratios, seed)
    store = embio.read_embeddings(emb_path)
    bigram_store = (
        embio.read_embeddings(bigram_emb_path) if bigram_emb_path else store
    )
    config = _probing_config(args, seed)
    grid = _grid_from_args(args, None)

    if task_name == "all":
        tasks = list(probing.TASK_ORDER)
        if dataset_path is not None:
            raise CliError("--dataset applies to a single --task, not 'all'")
    elif task_name in TASK_BY_NAME:
        tasks = [TASK_BY_NAME[task_name]]
    else:
        raise CliError(f"unknown probing task {task_name!r}")

    if layer_arg == "all":
        layers = list(range(1, store.n_layers + 1))
    else:
        layers = [int(layer_arg)]

    results = []
    for task in tasks:
        if dataset_path is not None:
            dataset = probing.load_probing_dataset(dataset_path, corpus)
            if dataset.task is not task:
                raise CliError(
                    f"dataset at {dataset_path} holds task {dataset.task.value}, "
                    f"not {task.value}"
                )
        else:
            dataset = probing.build_probing_dataset(task, corpus, config)
        task_store = bigram_store if task is probing.ProbingTask.BIGRAM_SHIFT else store
        task_grid = grid if grid is not None else probing.default_probe_cells()
        for layer in layers:
            result = probing.run_probe(dataset, task_store, layer, task_grid, seed=seed)
            results.append(result)
            print(
                f"{task.value} layer {layer}: test accuracy {result.accuracy:.4f} "
                f"(val {result.val_accuracy:.4f})"
            )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "probe_results.csv"
    with open(results_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["task", "layer", "test_accuracy", "val_accuracy", "hidden_layers", "learning_rate"]
        )
        for r in results:
            writer.writerow(
                [
                    r.task.value,
                    r.layer,
                    repr(r.accuracy),
                    repr(r.val_accuracy),
                    "-".join(str(u) for u in r.hidden_layers) or "linear",
                    repr(r.learning_rate),
                ]
            )
    rows = probing.probe_report(results)
    report_txt = out_dir / "probe_report.txt"
    report_txt.write_text(probing.render_probe_report(rows), encoding="utf-8")
    report_csv = out_dir / "probe_report.csv"
    probing.write_probe_report_csv(rows, report_csv)

    config_dict = {
        "command": "train-probe",
        "corpus": str(corpus_path),
        "embeddings": str(emb_path),
        "bigram_embeddings": None if bigram_emb_path is None else str(bigram_emb_path),
        "dataset": None if dataset_path is None else str(dataset_path),
        "task": task_name,
        "layer": str(layer_arg),
        "grid": None if grid is None else [[list(h), lr] for h, lr in grid],
        "ratios": list(ratios),
        "seed": seed,
        "wc_targets": config.word_content_targets,
    }
    inputs = [corpus_path, emb_path] + ([bigram_emb_path] if bigram_emb_path else [])
    m = manifest.build_manifest(
        "train-probe", config_dict, inputs, [results_path, report_txt, report_csv]
    )
    manifest.write_manifest(m, manifest.manifest_path_for(results_path))
    print(probing.render_probe_report(rows))
    return 0


def cmd_train_classifier(args) -> int:
    seed = _resolve(args, "seed", DEFAULT_SEED)
    ratios = _parse_ratios(str(_resolve(args, "ratios", "0.82,0.09,0.09")))
    corpus_path = _resolve(args, "corpus")
    emb_path = _resolve(args, "embeddings")
    features_path = _resolve(args, "features")
    out_dir = _resolve(args, "out_dir")
    setting_name = _resolve(args, "setting")
    layer = _resolve(args, "layer")
    n_folds = int(_resolve(args, "folds", 5))
    if None in (corpus_path, out_dir, setting_name):
        raise CliError("train-classifier requires --corpus, --setting and --out-dir")
    _require_files(corpus_path, emb_path, features_path)

    if setting_name == "all":
        settings = list(classify.SETTING_ORDER)
    elif setting_name in SETTING_BY_NAME:
        settings = [SETTING_BY_NAME[setting_name]]
    else:
        raise CliError(f"unknown classifier setting {setting_name!r}")

    corpus = _load_tagged_corpus(corpus_path, ratios, seed)
    store = embio.read_embeddings(emb_path) if emb_path else None
    feats = None
    if features_path:
        ids, _labels, matrix, _schema = features.read_feature_csv(features_path)
        feats = (ids, matrix)
    grid = _grid_from_args(args, None)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    detail = []
    for setting in settings:
        result = classify.run_experiment(
            setting,
            corpus,
            store=store,
            features=feats,
            grid=grid,
            seed=seed,
            n_folds=n_folds,
            layer=None if layer is None else int(layer),
        )
        rows.append(classify.ClassifierReportRow(setting.value, result.metrics))
        detail.append(result)
        print(
            f"{setting.value}: accuracy {result.metrics.accuracy:.4f} "
            f"(hidden {result.chosen_hidden or 'linear'}, lr {result.chosen_learning_rate})"
        )

    results_path = out_dir / "classifier_results.csv"
    with open(results_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "model",
                "accuracy",
                "sensitivity",
                "specificity",
                "tp",
                "fp",
                "tn",
                "fn",
                "hidden_layers",
                "learning_rate",
            ]
        )
        for result in detail:
            m = result.metrics
            writer.writerow(
                [
                    result.setting.value,
                    repr(m.accuracy),
                    "" if m.sensitivity is None else repr(m.sensitivity),
                    "" if m.specificity is None else repr(m.specificity),
                    m.tp,
                    m.fp,
                    m.tn,
                    m.fn,
                    "-".join(str(u) for u in result.chosen_hidden) or "linear",
                    repr(result.chosen_learning_rate),
                ]
            )
    report_txt = out_dir / "classifier_report.txt"
    report_txt.write_text(classify.render_classifier_report(rows), encoding="utf-8")
    report_csv = out_dir / "classifier_report.csv"
    classify.write_classifier_report_csv(rows, report_csv)

    config_dict = {
        "command": "train-classifier",
        "corpus": str(corpus_path),
        "embeddings": None if emb_path is None else str(emb_path),
        "features": None if features_path is None else str(features_path),
        "setting": setting_name,
        "layer": None if layer is None else int(layer),
        "folds": n_folds,
        "grid": None if grid is None else [[list(h), lr] for h, lr in grid],
        "ratios": list(ratios),
        "seed": seed,
    }
    inputs = [p for p in (corpus_path, emb_path, features_path) if p]
    m = manifest.build_manifest(
        "train-classifier", config_dict, inputs, [results_path, report_txt, report_csv]
    )
    manifest.write_manifest(m, manifest.manifest_path_for(results_path))
    print(classify.render_classifier_report(rows))
    return 0


def cmd_report(args) -> int:
    out_dir = _resolve(args, "out_dir")
    if out_dir is None:
        raise CliError("report requires --out-dir")
    out_dir = Path(out_dir)
    probe_results = out_dir / "probe_results.csv"
    clf_results = out_dir / "classifier_results.csv"
    sections = []

    if probe_results.is_file():
        results = []
        with open(probe_results, "r", encoding="utf-8", newline="") as f:
            for record in csv.DictReader(f):
                hidden = record["hidden_layers"]
                results.append(
                    probing.ProbeResult(
                        task=probing.ProbingTask(record["task"]),
                        layer=int(record["layer"]),
                        accuracy=float(record["test_accuracy"]),
                        val_accuracy=float(record["val_accuracy"]),
                        hidden_layers=()
                        if hidden == "linear"
                        else tuple(int(u) for u in hidden.split("-")),
                        learning_rate=float(record["learning_rate"]),
                    )
                )
        sections.append(probing.render_probe_report(probing.probe_report(results)))

    if clf_results.is_file():
        rows = []
        with open(clf_results, "r", encoding="utf-8", newline="") as f:
            for record in csv.DictReader(f):
                rows.append(
                    classify.ClassifierReportRow(
                        record["model"],
                        classify.EvalMetrics(
                            tp=int(record["tp"]),
                            fp=int(record["fp"]),
                            tn=int(record["tn"]),
                            fn=int(record["fn"]),
                            accuracy=float(record["accuracy"]),
                            sensitivity=float(record["sensitivity"])
                            if record["sensitivity"]
                            else None,
                            specificity=float(record["specificity"])
                            if record["specificity"]
                            else None,
                        ),
                    )
                )
        sections.append(classify.render_classifier_report(rows))

    if not sections:
        raise CliError(f"no artifacts found in {out_dir}; run train-probe or train-classifier first")

    combined = "\n".join(sections)
    report_path = out_dir / "report.txt"
    report_path.write_text(combined, encoding="utf-8")
    config_dict = {"command": "report", "out_dir": str(out_dir)}
    inputs = [p for p in (probe_results, clf_results) if p.is_file()]
    m = manifest.build_manifest("report", config_dict, inputs, [report_path])
    manifest.write_manifest(m, manifest.manifest_path_for(report_path))
    print(combined)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lingprobe",
        description="Layer-wise linguistic probing and feature-augmented utterance classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file mirroring any flag; flags override")
        p.add_argument("--seed", type=int, help=f"global RNG seed (default {DEFAULT_SEED})")
        p.add_argument("--ratios", help="train,val,test fractions for untagged corpora")

    p = sub.add_parser("extract-features", help="write the per-utterance feature CSV")
    common(p)
    p.add_argument("--corpus", help="transcript JSONL")
    p.add_argument("--out", help="output feature CSV")
    p.add_argument("--vocab-out", help="rule vocabulary JSON (default <out>.vocab.json)")
    p.add_argument("--icu-list", help="override content-unit word list (one word per line)")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("build-probe", help="construct probing datasets")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--task", help="probing task name or 'all'")
    p.add_argument("--out", help="dataset JSONL (single task)")
    p.add_argument("--out-dir", help="directory for --task all")
    p.add_argument("--derived-corpus", help="perturbed-corpus JSONL for re-embedding")
    p.add_argument("--wc-targets", type=int, help="word-content target count (default 50)")
    p.set_defaults(func=cmd_build_probe)

    p = sub.add_parser("train-probe", help="train layer-wise probes and report")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--task", help="probing task name or 'all'")
    p.add_argument("--layer", help="1-based layer index or 'all'")
    p.add_argument("--embeddings", help="embedding store file")
    p.add_argument("--bigram-embeddings", help="store for the perturbed corpus")
    p.add_argument("--dataset", help="pre-built dataset JSONL (single task)")
    p.add_argument("--out-dir")
    p.add_argument("--wc-targets", type=int)
    p.add_argument("--grid-layers", help="comma-separated hidden-layer counts (0 = linear)")
    p.add_argument("--grid-units", help="comma-separated units per layer")
    p.add_argument("--grid-lrs", help="comma-separated learning rates")
    p.set_defaults(func=cmd_train_probe)

    p = sub.add_parser("train-classifier", help="train a diagnosis classifier setting")
    common(p)
    p.add_argument("--corpus")
    p.add_argument("--setting", help="features-only | embedding-only | embedding+features | all")
    p.add_argument("--embeddings")
    p.add_argument("--features", help="feature CSV from extract-features")
    p.add_argument("--layer", help="embedding layer (default: last)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--out-dir")
    p.add_argument("--grid-layers")
    p.add_argument("--grid-units")
    p.add_argument("--grid-lrs")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("report", help="combine existing result tables")
    common(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.config_values = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 1
        if not isinstance(loaded, dict):
            print(f"error: config {args.config} must hold a JSON object", file=sys.stderr)
            return 1
        args.config_values = loaded
    try:
        return args.func(args)
    except (CliError, *_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
