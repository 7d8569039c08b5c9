"""Penn-Treebank bracketed constituency trees: parsing and queries.

Trees are immutable.  A node either has children (internal node, including
preterminals' parents) or carries a terminal token (preterminal), never
both.  All syntactic features and probing labels are derived from the
queries here, so the conventions below are used consistently everywhere:

* ``depth`` counts nodes on the longest root-to-preterminal path, including
  both endpoints and excluding the lexical terminal itself.
* ``productions`` lists internal-node expansions only; the lexical
  expansion of a preterminal into its token is never a production rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class TreeParseError(ValueError):
    """Raised for malformed bracketed strings; carries a character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: tuple["ParseTree", ...] = ()
    token: Optional[str] = None

    def __post_init__(self) -> None:
        if bool(self.children) == (self.token is not None):
            raise ValueError(
                f"node {self.label!r} must have either children or a token"
            )

    @property
    def is_preterminal(self) -> bool:
        return self.token is not None


@dataclass(frozen=True)
class ProductionRule:
    lhs: str
    rhs: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.rhs:
            raise ValueError("production rule right-hand side must be nonempty")

    @property
    def key(self) -> str:
        return f"{self.lhs}→{' '.join(self.rhs)}"


def parse_ptb(s: str) -> ParseTree:
    """Parse a single bracketed tree, e.g. ``(S (NP (DT the)) (VP (VBZ is)))``.

    A wrapping unary ROOT/TOP node is kept as-is.  Raises
    :class:`TreeParseError` with the offending character offset on
    unbalanced brackets, empty nodes, or terminals mixed with children.
    """
    pos = 0
    n = len(s)

    def skip_ws(i: int) -> int:
        while i < n and s[i].isspace():
            i += 1
        return i

    def read_atom(i: int) -> tuple[str, int]:
        j = i
        while j < n and not s[j].isspace() and s[j] not in "()":
            j += 1
        return s[i:j], j

    def read_node(i: int) -> tuple[ParseTree, int]:
        i = skip_ws(i)
        if i >= n or s[i] != "(":
            raise TreeParseError("expected '('", i)
        open_at = i
        i = skip_ws(i + 1)
        label, i = read_atom(i)
        if not label:
            raise TreeParseError("empty node label", i)
        i = skip_ws(i)
        if i >= n:
            raise TreeParseError("unbalanced brackets: unexpected end of input", open_at)
        if s[i] == "(":
            children = []
            while i < n and s[i] == "(":
                child, i = read_node(i)
                children.append(child)
                i = skip_ws(i)
            if i >= n:
                raise TreeParseError("unbalanced brackets: unexpected end of input", open_at)
            if s[i] != ")":
                raise TreeParseError("token mixed into internal node", i)
            return ParseTree(label, tuple(children)), i + 1
        if s[i] == ")":
            raise TreeParseError(f"empty node {label!r}", i)
        token, i = read_atom(i)
        i = skip_ws(i)
        if i < n and s[i] == "(":
            raise TreeParseError("terminal node with children", i)
        if i < n and s[i] not in ")":
            raise TreeParseError("multiple tokens under one preterminal", i)
        if i >= n:
            raise TreeParseError("unbalanced brackets: unexpected end of input", open_at)
        return ParseTree(label, token=token), i + 1

    tree, pos = read_node(pos)
    pos = skip_ws(pos)
    if pos != n:
        raise TreeParseError("trailing content after tree", pos)
    return tree


def serialize(t: ParseTree) -> str:
    if t.is_preterminal:
        return f"({t.label} {t.token})"
    return f"({t.label} {' '.join(serialize(c) for c in t.children)})"


def depth(t: ParseTree) -> int:
    """Longest root-to-preterminal path length in nodes (terminal excluded)."""
    if t.is_preterminal:
        return 1
    return 1 + max(depth(c) for c in t.children)


def productions(t: ParseTree) -> list[ProductionRule]:
    """Pre-order list of internal-node expansions, duplicates preserved."""
    out: list[ProductionRule] = []

    def walk(node: ParseTree) -> None:
        if node.is_preterminal:
            return
        out.append(ProductionRule(node.label, tuple(c.label for c in node.children)))
        for c in node.children:
            walk(c)

    walk(t)
    return out


def terminals(t: ParseTree) -> list[str]:
    if t.is_preterminal:
        return [t.token]  # type: ignore[list-item]
    out: list[str] = []
    for c in t.children:
        out.extend(terminals(c))
    return out


def top_constituents(t: ParseTree) -> list[str]:
    """Child labels of the highest ``S`` node (breadth-first, leftmost).

    Falls back to the root's children when no ``S`` exists, so ROOT-wrapped
    and bare trees agree.  A bare preterminal yields an empty list.
    """
    frontier = [t]
    while frontier:
        for node in frontier:
            if node.label == "S":
                return [c.label for c in node.children]
        frontier = [c for node in frontier for c in node.children]
    return [c.label for c in t.children]


def phrase_stats(t: ParseTree, label: str) -> tuple[int, int, float]:
    """(count, token coverage, mean terminal yield) for nodes labeled ``label``.

    Coverage counts terminal positions dominated by at least one matching
    node, so nested phrases are not double-counted.
    """
    spans: list[tuple[int, int]] = []

    def walk(node: ParseTree, start: int) -> int:
        if node.is_preterminal:
            end = start + 1
        else:
            end = start
            for c in node.children:
                end = walk(c, end)
        if node.label == label:
            spans.append((start, end))
        return end

    walk(t, 0)
    if not spans:
        return 0, 0, 0.0
    covered: set[int] = set()
    for start, end in spans:
        covered.update(range(start, end))
    mean_length = sum(end - start for start, end in spans) / len(spans)
    return len(spans), len(covered), mean_length
