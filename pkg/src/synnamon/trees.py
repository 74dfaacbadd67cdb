"""Bracketed constituency trees: parsing, serialization, production rule
extraction, corpus filtering, and coverage-preserving train/val splits.

Trees are immutable. A preterminal is a node whose single child is a word
string; every other node has one or more ``Tree`` children.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import (
    EmptyNode,
    EmptyResult,
    MixedChildren,
    TrailingGarbage,
    TreeParseError,
    UnbalancedParens,
)


@dataclass(frozen=True)
class Tree:
    """A labeled constituency tree node.

    ``children`` holds either a single word string (preterminal) or one or
    more ``Tree`` nodes.
    """

    label: str
    children: tuple  # tuple[Tree | str, ...]

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and isinstance(self.children[0], str)

    @property
    def word(self) -> str:
        if not self.is_preterminal:
            raise ValueError(f"node {self.label!r} is not a preterminal")
        return self.children[0]

    def leaves(self) -> list[str]:
        """Words in left-to-right order."""
        out: list[str] = []
        _collect_leaves(self, out)
        return out

    def pos_tags(self) -> list[str]:
        """Preterminal labels in left-to-right leaf order."""
        out: list[str] = []
        _collect_tags(self, out)
        return out

    def __str__(self) -> str:
        return serialize_tree(self)


def _collect_leaves(node: Tree, out: list[str]) -> None:
    if node.is_preterminal:
        out.append(node.children[0])
    else:
        for child in node.children:
            _collect_leaves(child, out)


def _collect_tags(node: Tree, out: list[str]) -> None:
    if node.is_preterminal:
        out.append(node.label)
    else:
        for child in node.children:
            _collect_tags(child, out)


@dataclass(frozen=True, order=True)
class ProductionRule:
    """A rewrite ``lhs -> rhs...`` realized at an internal non-preterminal
    node. Lexical rules (POS tag over a word) are not productions."""

    lhs: str
    rhs: tuple  # tuple[str, ...]

    @property
    def text(self) -> str:
        return f"{self.lhs} -> {' '.join(self.rhs)}"

    def __str__(self) -> str:
        return self.text


# ---------------------------------------------------------------------------
# parsing / serialization


_TOKEN = re.compile(r"[()]|[^\s()]+")


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def parse_tree(text: str) -> Tree:
    """Parse a single bracketed tree.

    Whitespace runs are insignificant. A label-less outer wrapper with one
    child, as written at the top level of Penn Treebank files, is unwrapped.

    Raises UnbalancedParens, EmptyNode, TrailingGarbage, or MixedChildren,
    each reporting a byte offset into ``text``.
    """
    # stack holds open-paren char offsets interleaved with finished items;
    # items are (kind, value, char_offset) with kind in {"(", "word", "tree"}
    stack: list[tuple] = []
    root: tuple | None = None
    for m in _TOKEN.finditer(text):
        tok, at = m.group(), m.start()
        if root is not None:
            if tok == ")":
                raise UnbalancedParens("')' without matching '('",
                                       _byte_offset(text, at))
            raise TrailingGarbage("content after complete tree", _byte_offset(text, at))
        if tok == "(":
            stack.append(("(", None, at))
        elif tok == ")":
            node = _reduce(stack, text, at)
            if stack:
                stack.append(node)
            else:
                root = node
        else:
            if not stack:
                raise TrailingGarbage("token outside any tree", _byte_offset(text, at))
            stack.append(("word", tok, at))
    if stack:
        opens = [s for s in stack if s[0] == "("]
        raise UnbalancedParens(
            f"{len(opens)} unclosed '('", _byte_offset(text, len(text))
        )
    if root is None:
        raise EmptyNode("no tree in input", 0)
    kind, value, at = root
    if kind == "word":
        raise TrailingGarbage("bare token is not a tree", _byte_offset(text, at))
    return value


def _reduce(stack: list[tuple], text: str, close_at: int) -> tuple:
    items: list[tuple] = []
    while stack and stack[-1][0] != "(":
        items.append(stack.pop())
    if not stack:
        raise UnbalancedParens("')' without matching '('", _byte_offset(text, close_at))
    _, _, open_at = stack.pop()
    items.reverse()
    offset = _byte_offset(text, open_at)
    if not items:
        raise EmptyNode("empty node '()'", offset)
    head_kind, head_value, _ = items[0]
    if head_kind != "word":
        # label-less group: tolerated only as a single-child wrapper (PTB root)
        if len(items) == 1:
            return items[0]
        raise EmptyNode("node without a label", offset)
    label, rest = head_value, items[1:]
    if not rest:
        raise EmptyNode(f"node {label!r} has no children", offset)
    kinds = {k for k, _, _ in rest}
    if kinds == {"word"}:
        if len(rest) > 1:
            raise MixedChildren(
                f"node {label!r} has several bare words", offset
            )
        return ("tree", Tree(label, (rest[0][1],)), open_at)
    if kinds != {"tree"}:
        raise MixedChildren(
            f"node {label!r} mixes words and subtrees", offset
        )
    return ("tree", Tree(label, tuple(v for _, v, _ in rest)), open_at)


def serialize_tree(tree: Tree) -> str:
    """Canonical single-space-separated bracketed form."""
    parts: list[str] = []
    _write(tree, parts)
    return "".join(parts)


def _write(node: Tree, parts: list[str]) -> None:
    parts.append("(")
    parts.append(node.label)
    for child in node.children:
        parts.append(" ")
        if isinstance(child, str):
            parts.append(child)
        else:
            _write(child, parts)
    parts.append(")")


# ---------------------------------------------------------------------------
# measures and rule extraction


def tree_height(tree: Tree, convention: str = "nodes") -> int:
    """Longest root-to-word path.

    "nodes" counts nodes including the word leaf ("(NN dog)" -> 2);
    "edges" counts edges instead (always one less).
    """
    if convention not in ("nodes", "edges"):
        raise ValueError(f"unknown height convention {convention!r}")
    h = _node_height(tree)
    return h if convention == "nodes" else h - 1


def _node_height(node: Tree) -> int:
    if node.is_preterminal:
        return 2
    return 1 + max(_node_height(c) for c in node.children)


def extract_productions(tree: Tree) -> tuple[Counter, set[str]]:
    """Production multiset and POS tag set of one tree.

    One production per internal non-preterminal node; preterminal labels go
    into the tag set.
    """
    rules: Counter = Counter()
    tags: set[str] = set()
    _extract(tree, rules, tags)
    return rules, tags


def _extract(node: Tree, rules: Counter, tags: set[str]) -> None:
    if node.is_preterminal:
        tags.add(node.label)
        return
    rules[ProductionRule(node.label, tuple(c.label for c in node.children))] += 1
    for child in node.children:
        _extract(child, rules, tags)


def corpus_rule_frequencies(corpus: list[Tree]) -> Counter:
    total: Counter = Counter()
    for tree in corpus:
        rules, _ = extract_productions(tree)
        total.update(rules)
    return total


# ---------------------------------------------------------------------------
# label normalization (PTB functional tags, empty elements)


_EMPTY_ELEMENT = "-NONE-"
_BASE_LABEL = re.compile(r"[^-=]+")


def normalize_tree(tree: Tree) -> Tree | None:
    """Strip functional tags / coindices from internal labels ("NP-SBJ-1"
    -> "NP") and drop empty-element subtrees. Returns None if nothing
    survives. Labels starting with '-' (-LRB-, -RRB-) are kept verbatim.
    """
    if tree.is_preterminal:
        return None if tree.label == _EMPTY_ELEMENT else tree
    kept = [normalize_tree(c) for c in tree.children]
    kept = [c for c in kept if c is not None]
    if not kept:
        return None
    label = tree.label
    if not label.startswith("-"):
        m = _BASE_LABEL.match(label)
        if m:
            label = m.group()
    return Tree(label, tuple(kept))


# ---------------------------------------------------------------------------
# corpus filtering


@dataclass(frozen=True)
class CorpusFilterConfig:
    allowed_heights: frozenset = frozenset({4, 5})
    top_k_rules: int = 300
    height_convention: str = "nodes"

    def __post_init__(self):
        if not self.allowed_heights or any(h <= 0 for h in self.allowed_heights):
            raise ValueError("allowed_heights must be positive integers")
        if self.top_k_rules < 1:
            raise ValueError("top_k_rules must be >= 1")


def top_rules(corpus: list[Tree], k: int) -> set[ProductionRule]:
    """The k most frequent productions; ties at the boundary broken by the
    lexicographic order of the canonical rule string."""
    freqs = corpus_rule_frequencies(corpus)
    ranked = sorted(freqs.items(), key=lambda item: (-item[1], item[0].text))
    return {rule for rule, _ in ranked[:k]}


def filter_corpus(corpus: list[Tree], cfg: CorpusFilterConfig | None = None) -> list[Tree]:
    """Keep trees of allowed height, then keep those whose productions all
    lie in the top-k rule set computed over the height survivors."""
    if cfg is None:
        cfg = CorpusFilterConfig()
    if not corpus:
        raise EmptyResult("empty corpus")
    by_height = [
        t for t in corpus
        if tree_height(t, cfg.height_convention) in cfg.allowed_heights
    ]
    if not by_height:
        raise EmptyResult(
            f"no tree has height in {sorted(cfg.allowed_heights)}"
        )
    selected = top_rules(by_height, cfg.top_k_rules)
    survivors = []
    for tree in by_height:
        rules, _ = extract_productions(tree)
        if all(r in selected for r in rules):
            survivors.append(tree)
    if not survivors:
        raise EmptyResult("no tree survives the top-k rule constraint")
    return survivors


# ---------------------------------------------------------------------------
# coverage-preserving split


@dataclass
class SplitResult:
    """Train/val partition; ``short`` flags that the requested validation
    size was infeasible and the largest coverage-preserving set was returned.
    """

    train: list
    val: list
    requested_val_size: int
    short: bool = False

    def __iter__(self):
        yield self.train
        yield self.val


def _coverage_items(tree: Tree) -> Counter:
    rules, tags = extract_productions(tree)
    items = Counter({r.text: n for r, n in rules.items()})
    items.update(tags)  # tag strings never collide with "LHS -> ..." texts
    return items


def split_indices(trees: list[Tree], val_fraction: float, seed: int) -> tuple:
    """Index-level form of ``split_corpus``: (train_indices, val_indices,
    requested_val_size), both in original corpus order."""
    if len(trees) < 2:
        raise ValueError("need at least 2 trees to split")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    target = round(val_fraction * len(trees))
    target = min(target, len(trees) - 1)
    per_tree = [_coverage_items(t) for t in trees]
    train_counts = Counter()
    for items in per_tree:
        train_counts.update(items)

    order = list(range(len(trees)))
    random.Random(seed).shuffle(order)
    in_val: set[int] = set()
    for i in order:
        if len(in_val) >= target:
            break
        items = per_tree[i]
        if all(train_counts[k] - n >= 1 for k, n in items.items()):
            in_val.add(i)
            train_counts.subtract(items)

    train_idx = [i for i in range(len(trees)) if i not in in_val]
    val_idx = [i for i in range(len(trees)) if i in in_val]
    return train_idx, val_idx, target


def split_corpus(corpus: list[Tree], val_fraction: float, seed: int) -> SplitResult:
    """Deterministic split where every production and POS tag occurring in
    val also occurs in train.

    Shuffles by seed, then greedily moves trees to val, rejecting any tree
    whose removal from train would break coverage. If the requested size is
    infeasible the largest feasible val set is returned with ``short=True``.
    """
    train_idx, val_idx, target = split_indices(corpus, val_fraction, seed)
    train = [corpus[i] for i in train_idx]
    val = [corpus[i] for i in val_idx]
    return SplitResult(train, val, target, short=len(val) < target)


# ---------------------------------------------------------------------------
# treebank files: one tree per line, '#' comments, blank lines skipped


def read_treebank(path, normalize: bool = True) -> list[Tree]:
    trees: list[Tree] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                tree = parse_tree(stripped)
            except TreeParseError as exc:
                raise type(exc)(f"{path}:{lineno}: {exc.args[0]}", exc.offset) from None
            if normalize:
                normalized = normalize_tree(tree)
                if normalized is None:
                    continue
                tree = normalized
            trees.append(tree)
    return trees


def write_treebank(path, trees: list[Tree]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            fh.write(serialize_tree(tree))
            fh.write("\n")
