import numpy as np
import pytest

from lingprobe.parsetree import (
    ParseTree,
    TreeParseError,
    depth,
    parse_ptb,
    phrase_stats,
    productions,
    serialize,
    terminals,
    top_constituents,
)
from gen import chain_tree, random_tree

BOY_FALLS = "(S (NP (DT the) (NN boy)) (VP (VBZ falls)))"


class TestParse:
    def test_basic_tree(self):
        t = parse_ptb(BOY_FALLS)
        assert t.label == "S"
        assert len(t.children) == 2
        assert t.children[0].label == "NP"
        assert t.children[0].children[1].token == "boy"

    def test_unbalanced(self):
        with pytest.raises(TreeParseError, match="unbalanced"):
            parse_ptb("(S (NP (DT the)")

    def test_single_preterminal(self):
        t = parse_ptb("(NN dog)")
        assert t.label == "NN"
        assert t.token == "dog"
        assert t.children == ()

    def test_root_wrapper_preserved(self):
        t = parse_ptb("(ROOT (S (NN dog)))")
        assert t.label == "ROOT"
        assert t.children[0].label == "S"

    def test_empty_node(self):
        with pytest.raises(TreeParseError, match="empty node"):
            parse_ptb("(NP)")

    def test_empty_label(self):
        with pytest.raises(TreeParseError, match="empty node label"):
            parse_ptb("( )")

    def test_terminal_with_children(self):
        with pytest.raises(TreeParseError, match="terminal node with children"):
            parse_ptb("(NN dog (X y))")

    def test_multiple_tokens(self):
        with pytest.raises(TreeParseError, match="multiple tokens"):
            parse_ptb("(NN dog cat)")

    def test_trailing_content(self):
        with pytest.raises(TreeParseError, match="trailing"):
            parse_ptb("(NN dog) extra")

    def test_error_offset(self):
        try:
            parse_ptb("(S (NP))")
        except TreeParseError as exc:
            assert exc.offset == 6
        else:
            pytest.fail("expected TreeParseError")

    def test_whitespace_tolerated(self):
        assert parse_ptb("  ( S   ( NN  dog )  ) ") == parse_ptb("(S (NN dog))")


class TestDepth:
    def test_single_preterminal(self):
        assert depth(parse_ptb("(NN dog)")) == 1

    def test_simple_sentence(self):
        assert depth(parse_ptb(BOY_FALLS)) == 3

    def test_nested(self):
        assert depth(parse_ptb("(S (VP (VB eat) (NP (NP (DT a) (NN cookie)))))")) == 5

    def test_chain(self):
        for k in (1, 2, 5, 9):
            assert depth(chain_tree(k)) == k


class TestProductions:
    def test_preterminal_has_none(self):
        assert productions(parse_ptb("(NN dog)")) == []

    def test_preorder_enumeration(self):
        rules = [(r.lhs, r.rhs) for r in productions(parse_ptb(BOY_FALLS))]
        assert rules == [
            ("S", ("NP", "VP")),
            ("NP", ("DT", "NN")),
            ("VP", ("VBZ",)),
        ]

    def test_single_rule(self):
        rules = productions(parse_ptb("(ADJP (JJ red))"))
        assert [(r.lhs, r.rhs) for r in rules] == [("ADJP", ("JJ",))]

    def test_key_format(self):
        rule = productions(parse_ptb(BOY_FALLS))[0]
        assert rule.key == "S→NP VP"


class TestTopConstituents:
    def test_root_wrapped(self):
        t = parse_ptb("(ROOT (S (NP (NN x)) (VP (VB y)) (. .)))")
        assert top_constituents(t) == ["NP", "VP", "."]

    def test_no_s_degenerate(self):
        assert top_constituents(parse_ptb("(NN dog)")) == []

    def test_unary(self):
        assert top_constituents(parse_ptb("(S (VP (VB look)))")) == ["VP"]

    def test_highest_s_wins(self):
        t = parse_ptb("(S (SBAR (S (NN deep))) (VP (VB x)))")
        assert top_constituents(t) == ["SBAR", "VP"]

    def test_fallback_root_children(self):
        t = parse_ptb("(FRAG (NP (NN x)) (PP (IN y)))")
        assert top_constituents(t) == ["NP", "PP"]


class TestPhraseStats:
    def test_np_on_simple_sentence(self):
        assert phrase_stats(parse_ptb(BOY_FALLS), "NP") == (1, 2, 2.0)

    def test_absent_label(self):
        assert phrase_stats(parse_ptb(BOY_FALLS), "PP") == (0, 0, 0.0)

    def test_nested_coverage_deduplicated(self):
        assert phrase_stats(parse_ptb("(NP (NP (NN a)) (NN b))"), "NP") == (2, 2, 1.5)


class TestRandomTreeProperties:
    def test_round_trip(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            t = random_tree(rng)
            assert parse_ptb(serialize(t)) == t

    def test_serialize_normalized_equality(self):
        spaced = "(S   (NP (DT the)   (NN boy))  (VP (VBZ falls)))"
        assert serialize(parse_ptb(spaced)) == " ".join(spaced.split()).replace("( ", "(")

    def test_depth_at_least_one(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            assert depth(random_tree(rng)) >= 1

    def test_production_count_is_internal_node_count(self):
        rng = np.random.default_rng(3)

        def internal_nodes(t: ParseTree) -> int:
            if t.is_preterminal:
                return 0
            return 1 + sum(internal_nodes(c) for c in t.children)

        for _ in range(200):
            t = random_tree(rng)
            assert len(productions(t)) == internal_nodes(t)

    def test_coverage_bounded_by_terminal_count(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            t = random_tree(rng)
            total = len(terminals(t))
            for label in ("NP", "VP", "PP", "NN"):
                _, coverage, _ = phrase_stats(t, label)
                assert coverage <= total
