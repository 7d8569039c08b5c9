import json

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "boy", "girl", "cookie", "jar", "falls", "takes", "water",
    "sink", "window", "mother", "on", "is", "and", "overflow", ".",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """Randomly initialized 3-layer encoder saved locally; no downloads."""
    model_dir = tmp_path_factory.mktemp("tiny_model")
    vocab_file = model_dir / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB))
    tokenizer = BertTokenizer(str(vocab_file))
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=tokenizer.vocab_size,
        hidden_size=16,
        num_hidden_layers=3,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=32,
    )
    BertModel(config).save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir)


def write_corpus(path, n=48, with_splits=True, long_row=False):
    words = ["the", "boy", "takes", "a", "cookie", "and", "the", "water", "falls"]
    with open(path, "w", encoding="utf-8") as f:
        for i in range(n):
            text = " ".join(words[: 3 + i % 6]) + " ."
            if long_row and i == 0:
                text = " ".join(["cookie"] * 40)
            record = {
                "id": f"u{i:04d}",
                "speaker": f"s{i % 5}",
                "text": text,
                "label": "AD" if i % 2 else "Control",
            }
            if with_splits:
                record["split"] = "train" if i < int(n * 0.7) else (
                    "val" if i < int(n * 0.85) else "test"
                )
            f.write(json.dumps(record) + "\n")
    return path
