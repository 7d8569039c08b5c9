import numpy as np
import pytest

from lingprobe.corpus import tokenize
from lingprobe.features import (
    FeatureError,
    N_FEATURES,
    N_RULE_FEATURES,
    RuleVocabulary,
    build_rule_vocabulary,
    extract_features,
    feature_schema,
    fit_standardizer,
    icu_features,
    load_icu_words,
    read_feature_csv,
    stem_token,
    write_feature_csv,
)
from lingprobe.parsetree import parse_ptb
from gen import make_utterance, random_tree

BOY_FALLS = "(S (NP (DT the) (NN boy)) (VP (VBZ falls)))"


# Independent stemming + list-scan oracle.  Deliberately re-implemented
# from the documented rule, not imported from the package.
def oracle_stem(word):
    doubles = set("bdfgmnprt")

    def repair(stem):
        if len(stem) > 3 and stem[-1] == stem[-2] and stem[-1] in doubles:
            return stem[:-1]
        return stem

    if word[-3:] == "ing" and len(word) - 3 >= 3:
        return repair(word[:-3])
    if word[-2:] == "ed" and len(word) - 2 >= 3:
        return repair(word[:-2])
    if word[-2:] == "es" and len(word) - 2 >= 3 and word[-3] in "sxzho":
        return word[:-2]
    if word[-1:] == "s" and word[-2:] != "ss" and len(word) - 1 >= 3:
        return word[:-1]
    return word


def oracle_icu(tokens, words):
    count = 0
    for tok in tokens:
        for w in words:
            if oracle_stem(tok) == oracle_stem(w):
                count += 1
                break
    return count > 0, count


class TestStemming:
    @pytest.mark.parametrize(
        "word,stem",
        [
            ("takes", "take"),
            ("steals", "steal"),
            ("overflowing", "overflow"),
            ("sitting", "sit"),
            ("falls", "fall"),
            ("falling", "fall"),
            ("spilled", "spill"),
            ("glasses", "glass"),
            ("glass", "glass"),
            ("dishes", "dish"),
            ("boy", "boy"),
            ("is", "is"),
            ("added", "add"),
            ("stopped", "stop"),
        ],
    )
    def test_examples(self, word, stem):
        assert stem_token(word) == stem


class TestIcuFeatures:
    def test_pinned_example(self):
        assert icu_features(["the", "boy", "takes", "a", "cookie"]) == (True, 3)

    def test_no_matches(self):
        assert icu_features(["hello", "there"]) == (False, 0)

    def test_empty(self):
        assert icu_features([]) == (False, 0)

    def test_count_bounded_by_tokens(self):
        tokens = tokenize("the boy and the girl wash dishes in the sink .")
        present, count = icu_features(tokens)
        assert present and count <= len(tokens)

    def test_agrees_with_oracle(self):
        words = load_icu_words()
        distractors = ["hello", "piano", "zebra", "xylophone", "harbor", "tunnel"]
        pool = list(words) + distractors
        rng = np.random.default_rng(123)
        for _ in range(500):
            tokens = [pool[i] for i in rng.integers(0, len(pool), size=rng.integers(0, 12))]
            assert icu_features(tokens, words) == oracle_icu(tokens, words)

    def test_word_list_file_override(self, tmp_path):
        path = tmp_path / "words.txt"
        path.write_text("piano\nviolin\n")
        words = load_icu_words(path)
        assert icu_features(["piano", "boy"], words) == (True, 1)


class TestRuleVocabulary:
    def test_tie_break_lexicographic(self):
        trees = [parse_ptb(BOY_FALLS)] * 3
        vocab = build_rule_vocabulary(trees, k=2)
        assert vocab.rules == ("NP→DT NN", "S→NP VP")

    def test_padding(self):
        vocab = build_rule_vocabulary([parse_ptb("(S (NN a) (NN b))")], k=103)
        assert len(vocab.rules) == 103
        assert vocab.rules[0] == "S→NN NN"
        assert vocab.rules[1] == "UNUSED_002"
        assert all(r.startswith("UNUSED_") for r in vocab.rules[1:])

    def test_empty_error(self):
        with pytest.raises(FeatureError, match="empty"):
            build_rule_vocabulary([])

    def test_frequency_order(self):
        trees = [parse_ptb(BOY_FALLS), parse_ptb("(S (NP (DT a) (NN b)) (VP (VBZ c)))"),
                 parse_ptb("(ADJP (JJ red))")]
        vocab = build_rule_vocabulary(trees, k=4)
        # NP->DT NN and S->NP VP and VP->VBZ occur twice; ADJP->JJ once
        assert vocab.rules[:3] == ("NP→DT NN", "S→NP VP", "VP→VBZ")
        assert vocab.rules[3] == "ADJP→JJ"

    def test_fingerprint_tracks_input(self):
        a = build_rule_vocabulary([parse_ptb(BOY_FALLS)])
        b = build_rule_vocabulary([parse_ptb(BOY_FALLS)] * 2)
        assert a.source != b.source


def padded_vocab(rules):
    full = list(rules)
    while len(full) < N_RULE_FEATURES:
        full.append(f"UNUSED_{len(full) + 1:03d}")
    return RuleVocabulary(tuple(full), "test")


class TestExtractFeatures:
    def test_pinned_example(self):
        u = make_utterance("u1", "s1", "the boy falls .", "AD")
        t = parse_ptb(BOY_FALLS)
        vocab = padded_vocab(["S→NP VP", "NP→DT NN"])
        fv = extract_features(u, t, vocab)
        assert fv.values.shape == (N_FEATURES,)
        np.testing.assert_allclose(fv.values[0], 1 / 3)
        np.testing.assert_allclose(fv.values[1], 1 / 3)
        assert np.all(fv.values[2:N_RULE_FEATURES] == 0)
        assert fv.values[N_RULE_FEATURES] == 3  # depth
        # "boy" matches directly and "falls" stems to list entry "fall"
        assert fv.values[-2] == 1 and fv.values[-1] == 2

    def test_single_preterminal(self):
        u = make_utterance("u1", "s1", "dog", "Control")
        fv = extract_features(u, parse_ptb("(NN dog)"), padded_vocab([]))
        assert np.all(fv.values[:N_RULE_FEATURES] == 0)
        assert fv.values[N_RULE_FEATURES] == 1

    def test_output_length_always_119(self):
        rng = np.random.default_rng(5)
        vocab = padded_vocab(["S→NP VP"])
        for i in range(30):
            t = random_tree(rng)
            u = make_utterance(f"u{i}", "s", "some words here", "AD")
            assert extract_features(u, t, vocab).values.shape == (119,)

    def test_phrasal_block(self):
        u = make_utterance("u1", "s1", "the boy falls .", "AD")
        fv = extract_features(u, parse_ptb(BOY_FALLS), padded_vocab([]))
        schema = fv.schema
        v = dict(zip(schema, fv.values))
        assert v["NP_count"] == 1
        np.testing.assert_allclose(v["NP_coverage"], 2 / 3)
        np.testing.assert_allclose(v["NP_mean_len"], 2.0)
        assert v["VP_count"] == 1
        assert v["PP_count"] == 0
        assert v["ADJP_count"] == 0 and v["ADVP_count"] == 0

    def test_deterministic(self):
        u = make_utterance("u1", "s1", "the boy falls .", "AD")
        t = parse_ptb(BOY_FALLS)
        vocab = padded_vocab(["S→NP VP"])
        a = extract_features(u, t, vocab).values
        b = extract_features(u, t, vocab).values
        assert a.tobytes() == b.tobytes()

    def test_wrong_vocab_size_rejected(self):
        u = make_utterance("u1", "s1", "a", "AD")
        with pytest.raises(FeatureError, match="103"):
            extract_features(u, parse_ptb("(NN a)"), RuleVocabulary(("X→Y",), "t"))


class TestSchema:
    def test_partition_104_13_2(self):
        schema = feature_schema(padded_vocab([]))
        assert len(schema) == 119
        rule_block = [n for n in schema if n.startswith("rule:")]
        assert len(rule_block) == 103
        assert schema[103] == "tree_depth"
        phrasal = schema[104:117]
        assert len(phrasal) == 13
        assert schema[117:] == ("icu_present", "icu_count")

    def test_stable_given_vocabulary(self):
        vocab = padded_vocab(["S→NP VP"])
        assert feature_schema(vocab) == feature_schema(vocab)


class TestRuleProportions:
    def test_full_distribution_sums_to_one(self):
        rng = np.random.default_rng(17)
        from lingprobe.parsetree import productions

        for _ in range(200):
            t = random_tree(rng)
            rules = productions(t)
            if not rules:
                continue
            counts = {}
            for r in rules:
                counts[r.key] = counts.get(r.key, 0) + 1
            proportions = [c / len(rules) for c in counts.values()]
            assert abs(sum(proportions) - 1.0) < 1e-12

    def test_projected_vector_sums_at_most_one(self):
        rng = np.random.default_rng(29)
        vocab = padded_vocab(["S→NP VP", "NP→DT NN", "VP→VBZ"])
        for i in range(100):
            t = random_tree(rng)
            u = make_utterance(f"u{i}", "s", "a b", "AD")
            total = extract_features(u, t, vocab).values[:N_RULE_FEATURES].sum()
            assert total <= 1.0 + 1e-12


class TestStandardizer:
    def test_constant_column_zeroed(self):
        m = np.array([[5.0, 1.0], [5.0, 3.0]])
        s = fit_standardizer(m)
        out = s.apply(m)
        np.testing.assert_allclose(out[:, 0], 0.0)

    def test_two_point_column(self):
        m = np.array([[0.0], [2.0]])
        s = fit_standardizer(m)
        np.testing.assert_allclose(s.apply(m).ravel(), [-1.0, 1.0])

    def test_train_set_recentred(self):
        rng = np.random.default_rng(31)
        m = rng.normal(3.0, 2.5, size=(64, 7))
        s = fit_standardizer(m)
        out = s.apply(m)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)

    def test_empty_fit_rejected(self):
        with pytest.raises(FeatureError):
            fit_standardizer(np.empty((0, 3)))


def test_feature_csv_round_trip(tmp_path):
    vocab = padded_vocab(["S→NP VP"])
    schema = feature_schema(vocab)
    rng = np.random.default_rng(2)
    rows = [
        (f"u{i}", "AD" if i % 2 else "Control", rng.uniform(0, 1, size=len(schema)))
        for i in range(5)
    ]
    path = tmp_path / "f.csv"
    write_feature_csv(path, rows, schema)
    ids, labels, matrix, schema_back = read_feature_csv(path)
    assert ids == [r[0] for r in rows]
    assert labels == [r[1] for r in rows]
    assert schema_back == schema
    np.testing.assert_array_equal(matrix, np.stack([r[2] for r in rows]))
