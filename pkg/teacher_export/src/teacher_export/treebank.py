"""Minimal bracketed-tree reader for the treebank text format: one tree per
line, '#' comment lines, blank lines skipped.

Kept self-contained so the exporter depends only on the documented file
format, not on the consumer package.
"""

from __future__ import annotations

import re


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


_TOKEN = re.compile(r"[()]|[^\s()]+")
_EMPTY_ELEMENT = "-NONE-"
_BASE_LABEL = re.compile(r"[^-=]+")

# a node is (label, children); children hold nodes or a single word string


def parse(text: str):
    stack: list = []
    root = None
    for m in _TOKEN.finditer(text):
        tok = m.group()
        if root is not None:
            raise ParseError("content after complete tree")
        if tok == "(":
            stack.append("(")
        elif tok == ")":
            items: list = []
            while stack and stack[-1] != "(":
                items.append(stack.pop())
            if not stack:
                raise ParseError("unbalanced ')'")
            stack.pop()
            items.reverse()
            if not items:
                raise ParseError("empty node")
            if isinstance(items[0], tuple):
                # label-less wrapper as written at the top level of PTB files
                if len(items) != 1:
                    raise ParseError("node without a label")
                node = items[0]
            else:
                label, rest = items[0], items[1:]
                if not rest:
                    raise ParseError(f"node {label!r} has no children")
                words = [c for c in rest if isinstance(c, str)]
                if words and (len(words) > 1 or len(rest) > 1):
                    raise ParseError(f"node {label!r} mixes words and subtrees")
                node = (label, rest)
            if stack:
                stack.append(node)
            else:
                root = node
        else:
            if not stack:
                raise ParseError("token outside any tree")
            stack.append(tok)
    if stack:
        raise ParseError("unbalanced '('")
    if root is None or not isinstance(root, tuple):
        raise ParseError("no tree in input")
    return root


def serialize(node) -> str:
    label, children = node
    parts = [label]
    for child in children:
        parts.append(child if isinstance(child, str) else serialize(child))
    return "(" + " ".join(parts) + ")"


def leaves(node) -> list[str]:
    label, children = node
    out: list[str] = []
    for child in children:
        if isinstance(child, str):
            out.append(child)
        else:
            out.extend(leaves(child))
    return out


def normalize(node):
    """Strip functional tags from phrase labels and drop empty elements;
    returns None when nothing survives."""
    label, children = node
    if len(children) == 1 and isinstance(children[0], str):
        return None if label == _EMPTY_ELEMENT else node
    kept = [normalize(c) for c in children]
    kept = [c for c in kept if c is not None]
    if not kept:
        return None
    if not label.startswith("-"):
        m = _BASE_LABEL.match(label)
        if m:
            label = m.group()
    return (label, kept)


def read_trees(path, normalize_labels: bool = True):
    """Yield (line_number, canonical_text, leaf_words) per tree line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                node = parse(stripped)
            except ParseError as exc:
                raise ParseError(str(exc), lineno) from None
            if normalize_labels:
                node = normalize(node)
                if node is None:
                    continue
            out.append((lineno, serialize(node), leaves(node)))
    return out
