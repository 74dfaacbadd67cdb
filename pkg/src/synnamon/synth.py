"""Synthetic corpora with a known teacher registry.

Trees are sampled from a small non-recursive toy grammar, every distinct
word gets a fixed random embedding, and teacher sentence embeddings are
produced by composing a randomly initialized registry over each tree. A
student trained on such data can be scored against a realizable optimum.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .dataset import SentenceRecord
from .modules import Architecture, ModuleRegistry, compose_sentence
from .trees import ProductionRule, Tree


@dataclass(frozen=True)
class ToyGrammar:
    productions: tuple  # tuple[ProductionRule, ...]
    lexicon: dict       # POS tag -> tuple of words
    start: str = "S"


def _rule(text: str) -> ProductionRule:
    lhs, rhs = text.split(" -> ")
    return ProductionRule(lhs, tuple(rhs.split()))


# eight production rules over four POS tags; max tree height is 5
TOY_GRAMMAR_8 = ToyGrammar(
    productions=tuple(_rule(t) for t in (
        "S -> NP VP",
        "NP -> DT NN",
        "NP -> DT JJ NN",
        "NP -> NN",
        "NP -> NN NN",
        "VP -> VBZ",
        "VP -> VBZ NP",
        "VP -> VBZ JJ",
    )),
    lexicon={
        "DT": ("the", "a", "this", "that"),
        "NN": ("dog", "cat", "tree", "cow", "bird", "fox"),
        "JJ": ("red", "old", "happy", "large"),
        "VBZ": ("runs", "sees", "likes", "finds"),
    },
)


def sample_tree(grammar: ToyGrammar, rng: random.Random) -> Tree:
    by_lhs: dict = {}
    for rule in grammar.productions:
        by_lhs.setdefault(rule.lhs, []).append(rule)

    def expand(symbol: str) -> Tree:
        if symbol in grammar.lexicon:
            return Tree(symbol, (rng.choice(grammar.lexicon[symbol]),))
        rule = rng.choice(by_lhs[symbol])
        return Tree(symbol, tuple(expand(s) for s in rule.rhs))

    return expand(grammar.start)


def word_vector(word: str, dim: int, seed: int) -> np.ndarray:
    """Fixed unit-scale gaussian embedding, deterministic in (word, seed)."""
    digest = hashlib.blake2b(f"{seed}\x00word\x00{word}".encode(),
                             digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.normal(0.0, 1.0, size=(1, dim))


def build_teacher(grammar: ToyGrammar, arch: Architecture, dim: int, seed: int,
                  weight_scale: float = 1.0) -> ModuleRegistry:
    """Registry covering every grammar rule and POS tag, randomly
    initialized; ``weight_scale`` inflates all weights to sharpen
    nonlinearities."""
    registry = ModuleRegistry(dim=dim, arch=arch, seed=seed)
    for tag in grammar.lexicon:
        registry.get_or_create(tag, 1)
    for rule in grammar.productions:
        registry.get_or_create(rule.text, len(rule.rhs))
    if weight_scale != 1.0:
        for mod in registry.modules.values():
            mod.w1 = mod.w1 * weight_scale
            if mod.w2 is not None:
                mod.w2 = mod.w2 * weight_scale
    return registry


def make_dataset(
    n_trees: int = 200,
    dim: int = 16,
    teacher_arch: Architecture = Architecture.LINEAR,
    seed: int = 0,
    grammar: ToyGrammar = TOY_GRAMMAR_8,
    teacher_scale: float = 1.0,
) -> tuple[list[SentenceRecord], ModuleRegistry]:
    """Sample trees and emit records whose sentence embeddings come from a
    random teacher registry."""
    rng = random.Random(seed)
    teacher = build_teacher(grammar, teacher_arch, dim, seed + 1,
                            weight_scale=teacher_scale)
    records = []
    for index in range(n_trees):
        tree = sample_tree(grammar, rng)
        vectors = [word_vector(w, dim, seed) for w in tree.leaves()]
        tape = Tape()
        out = compose_sentence(tree, vectors, teacher, tape, strict=True)
        records.append(SentenceRecord(
            id=f"t{index:04d}",
            tree=tree,
            words=tree.leaves(),
            word_vectors=np.vstack(vectors),
            sentence_vector=out.value.copy(),
        ))
    return records, teacher
