import json

import numpy as np
import pytest

from lingprobe.corpus import (
    Corpus,
    CorpusError,
    assign_splits,
    load_corpus,
    save_corpus,
    tokenize,
)
from gen import make_utterance


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    return path


class TestTokenize:
    def test_detaches_punctuation(self):
        assert tokenize("The boy falls.") == ("the", "boy", "falls", ".")

    def test_empty(self):
        assert tokenize("") == ()

    def test_clitic_split(self):
        assert tokenize("it's overflowing!") == ("it", "'s", "overflowing", "!")

    def test_all_punctuation_marks(self):
        assert tokenize("a, b; c: d? e!") == (
            "a", ",", "b", ";", "c", ":", "d", "?", "e", "!",
        )

    def test_multiple_clitics(self):
        assert tokenize("don't y'all") == ("don", "'t", "y", "'all")


class TestLoadCorpus:
    def test_single_line(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [{"id": "u1", "speaker": "s1", "text": "The boy falls.", "label": "AD"}],
        )
        corpus = load_corpus(path)
        assert len(corpus) == 1
        u = corpus.get("u1")
        assert u.tokens == ("the", "boy", "falls", ".")
        assert u.label == "AD"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        assert len(load_corpus(path)) == 0

    def test_duplicate_id(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [
                {"id": "u1", "speaker": "s1", "text": "a", "label": "AD"},
                {"id": "u1", "speaker": "s2", "text": "b", "label": "Control"},
            ],
        )
        with pytest.raises(CorpusError, match="line 2.*duplicate"):
            load_corpus(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "u1", "speaker": "s", "text": "a", "label": "AD"}\n{broken\n')
        with pytest.raises(CorpusError, match="line 2"):
            load_corpus(path)

    def test_unknown_label(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [{"id": "u1", "speaker": "s1", "text": "a", "label": "MCI"}],
        )
        with pytest.raises(CorpusError, match="label"):
            load_corpus(path)

    def test_missing_key(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [{"id": "u1", "text": "a", "label": "AD"}])
        with pytest.raises(CorpusError, match="speaker"):
            load_corpus(path)

    def test_order_preserved(self, tmp_path):
        records = [
            {"id": f"u{i}", "speaker": "s", "text": "a", "label": "AD"} for i in range(20)
        ]
        corpus = load_corpus(write_jsonl(tmp_path / "c.jsonl", records))
        assert corpus.ids == tuple(f"u{i}" for i in range(20))


def test_save_load_round_trip(tmp_path):
    utterances = tuple(
        make_utterance(
            f"u{i}",
            f"s{i % 3}",
            f"the boy number {i} falls .",
            "AD" if i % 2 else "Control",
            split=("train", "val", "test")[i % 3],
            parse="(S (NN boy))" if i % 2 else None,
        )
        for i in range(12)
    )
    corpus = Corpus(utterances)
    path = tmp_path / "c.jsonl"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


class TestAssignSplits:
    def make(self, n, tagged=None):
        return Corpus(
            tuple(
                make_utterance(f"u{i:04d}", f"s{i % 7}", "a b", "AD", split=tagged)
                for i in range(n)
            )
        )

    def test_exact_division(self):
        tagged = assign_splits(self.make(100), (0.82, 0.09, 0.09), seed=1)
        assert tagged.split_counts == {"train": 82, "val": 9, "test": 9}

    def test_deterministic(self):
        a = assign_splits(self.make(10), (0.82, 0.09, 0.09), seed=7)
        b = assign_splits(self.make(10), (0.82, 0.09, 0.09), seed=7)
        assert [u.split for u in a] == [u.split for u in b]

    def test_pretagged_pass_through_benchmark_counts(self):
        # 4269/429/409 pre-assigned tags are honored verbatim
        counts = {"train": 4269, "val": 429, "test": 409}
        utterances = []
        i = 0
        for split, n in counts.items():
            for _ in range(n):
                utterances.append(make_utterance(f"u{i}", "s", "a", "AD", split=split))
                i += 1
        corpus = Corpus(tuple(utterances))
        tagged = assign_splits(corpus, (0.82, 0.09, 0.09), seed=99)
        assert tagged.split_counts == counts
        assert tagged is corpus

    def test_partial_tagging_rejected(self):
        utterances = (
            make_utterance("u1", "s", "a", "AD", split="train"),
            make_utterance("u2", "s", "a", "AD"),
        )
        with pytest.raises(CorpusError, match="tag all records or none"):
            assign_splits(Corpus(utterances), (0.82, 0.09, 0.09), seed=0)

    def test_bad_ratios(self):
        with pytest.raises(CorpusError, match="sum to 1"):
            assign_splits(self.make(10), (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(CorpusError, match="positive"):
            assign_splits(self.make(10), (1.1, -0.05, -0.05), seed=0)

    def test_order_invariance(self):
        corpus = self.make(50)
        tagged = assign_splits(corpus, (0.6, 0.2, 0.2), seed=3)
        reversed_corpus = Corpus(tuple(reversed(corpus.utterances)))
        tagged_rev = assign_splits(reversed_corpus, (0.6, 0.2, 0.2), seed=3)
        by_id = {u.id: u.split for u in tagged}
        assert all(by_id[u.id] == u.split for u in tagged_rev)

    def test_count_deviation_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(5, 400))
            a = rng.uniform(0.5, 0.9)
            b = (1 - a) * rng.uniform(0.2, 0.8)
            ratios = (a, b, 1 - a - b)
            tagged = assign_splits(self.make(n), ratios, seed=int(rng.integers(1 << 30)))
            counts = tagged.split_counts
            for split, ratio in zip(("train", "val", "test"), ratios):
                assert abs(counts[split] - n * ratio) <= 3

    def test_by_speaker_groups_whole_speakers(self):
        corpus = Corpus(
            tuple(
                make_utterance(f"u{i}", f"s{i % 5}", "a", "AD") for i in range(60)
            )
        )
        tagged = assign_splits(corpus, (0.6, 0.2, 0.2), seed=11, by_speaker=True)
        split_of_speaker = {}
        for u in tagged:
            assert split_of_speaker.setdefault(u.speaker_id, u.split) == u.split
