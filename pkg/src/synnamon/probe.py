"""Standalone single-module probes: train one production module in
isolation on two-word phrase data and measure generalization MSE by
lexical category.

The probe bypasses POS modules and maps concatenated word vectors straight
through the module under study.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import Tape
from .dataset import _vector
from .distill import TrainConfig
from .errors import EmptyDataset, NonFiniteLoss, SchemaError
from .modules import ModuleParams, init_module, module_apply, module_forward
from .optim import AdamState, adam_step

CATEGORIES = ("determiner", "quantifier", "adjective", "noun-control")

# seed lexicon; override via a JSON file {category: [words, ...]}
DEFAULT_LEXICON = {
    "determiner": ("the", "a", "an", "this", "that", "these", "those"),
    "quantifier": ("some", "all", "several", "twelve", "many", "few"),
    "adjective": ("swarming", "grouped", "red", "large", "happy", "old"),
    "noun-control": ("tree", "stone", "river", "glass", "mountain", "paper"),
}

DEFAULT_PROBE_RULE = "NP -> DT NN"


@dataclass
class PhrasePair:
    first_word: str
    second_word: str
    category: str
    first_vec: np.ndarray   # (1, dim)
    second_vec: np.ndarray  # (1, dim)
    phrase_vec: np.ndarray  # (1, dim)

    @property
    def dim(self) -> int:
        return self.phrase_vec.shape[1]


@dataclass
class CategoryReport:
    """Per-category pair count and mean MSE."""

    rows: dict  # category -> (count, mean_mse)

    def mean_mse(self, category: str) -> float:
        return self.rows[category][1]

    def count(self, category: str) -> int:
        return self.rows[category][0]


def generate_phrase_texts(nouns: list[str], lexicon: dict | None = None) -> list[tuple]:
    """Cross product of category words with the noun list, as
    (first_word, second_word, category) triples."""
    lexicon = dict(DEFAULT_LEXICON if lexicon is None else lexicon)
    triples = []
    for category in CATEGORIES:
        for first in lexicon.get(category, ()):
            for noun in nouns:
                if first == noun:
                    continue
                triples.append((first, noun, category))
    return triples


def load_lexicon(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = set(raw) - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown categories in lexicon: {sorted(unknown)}")
    return {k: tuple(v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# probe dataset: sentence-record JSONL shape with exactly two words and a
# "category" field; the "tree" field is tolerated but not required


def load_phrase_pairs(path) -> list[PhrasePair]:
    pairs: list[PhrasePair] = []
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                raw = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", lineno) from None
            for field in ("dim", "words", "sentence_vec", "category"):
                if field not in raw:
                    raise SchemaError(f"missing field {field!r}", lineno)
            if raw["category"] not in CATEGORIES:
                raise SchemaError(f"unknown category {raw['category']!r}", lineno)
            if not isinstance(raw["words"], list) or len(raw["words"]) != 2:
                raise SchemaError("probe records need exactly two words", lineno)
            if dim is None:
                dim = raw["dim"]
            elif raw["dim"] != dim:
                raise SchemaError(f"dim {raw['dim']} differs from {dim}", lineno)
            vecs = []
            texts = []
            for i, entry in enumerate(raw["words"]):
                if not isinstance(entry, dict) or "text" not in entry or "vec" not in entry:
                    raise SchemaError(f"words[{i}] must have 'text' and 'vec'", lineno)
                texts.append(entry["text"])
                vecs.append(_vector(entry["vec"], dim, f"words[{i}].vec", lineno))
            phrase = _vector(raw["sentence_vec"], dim, "sentence_vec", lineno)
            pairs.append(PhrasePair(
                first_word=texts[0],
                second_word=texts[1],
                category=raw["category"],
                first_vec=vecs[0].reshape(1, -1),
                second_vec=vecs[1].reshape(1, -1),
                phrase_vec=phrase.reshape(1, -1),
            ))
    return pairs


def save_phrase_pairs(path, pairs: list[PhrasePair], tree_template=None) -> None:
    """Write probe JSONL; ``tree_template(pair)`` may supply the bracketed
    tree string for each record."""
    with open(path, "w", encoding="utf-8") as fh:
        for index, pair in enumerate(pairs):
            raw = {
                "id": f"p{index:04d}",
                "dim": pair.dim,
                "words": [
                    {"text": pair.first_word, "vec": pair.first_vec[0].tolist()},
                    {"text": pair.second_word, "vec": pair.second_vec[0].tolist()},
                ],
                "sentence_vec": pair.phrase_vec[0].tolist(),
                "category": pair.category,
            }
            if tree_template is not None:
                raw["tree"] = tree_template(pair)
            fh.write(json.dumps(raw))
            fh.write("\n")


# ---------------------------------------------------------------------------
# training and evaluation


def _pair_loss(module: ModuleParams, pair: PhrasePair) -> float:
    x = np.concatenate([pair.first_vec, pair.second_vec], axis=1)
    diff = module_apply(module, x) - pair.phrase_vec
    return float(np.mean(diff * diff))


def probe_train(pairs: list[PhrasePair], arch, cfg: TrainConfig,
                rule_key: str = DEFAULT_PROBE_RULE) -> ModuleParams:
    """Train a single fan-in-2 module on pairs of one category with the same
    optimizer as end-to-end distillation."""
    if not pairs:
        raise EmptyDataset("no training pairs")
    categories = {p.category for p in pairs}
    if len(categories) != 1:
        raise ValueError(f"training pairs span categories {sorted(categories)}")
    dim = pairs[0].dim
    module = init_module(rule_key, 2, arch, dim, cfg.seed)
    state = AdamState(lr=cfg.lr)
    for epoch in range(cfg.epochs):
        order = list(range(len(pairs)))
        if cfg.shuffle:
            random.Random(f"{cfg.seed}:{epoch}").shuffle(order)
        grad_acc: dict = {}
        pending = 0
        for i in order:
            pair = pairs[i]
            tape = Tape()
            first = tape.constant(pair.first_vec)
            second = tape.constant(pair.second_vec)
            x = autodiff.concat([first, second], tape)
            out = module_forward(module, x, tape)
            loss = autodiff.mse(out, tape.constant(pair.phrase_vec), tape)
            if not np.isfinite(loss.value[0, 0]):
                raise NonFiniteLoss(f"probe loss diverged at epoch {epoch}")
            for key, g in autodiff.backward(tape, loss).items():
                acc = grad_acc.get(key)
                grad_acc[key] = g if acc is None else acc + g
            pending += 1
            if pending == cfg.accumulation:
                updated, _ = adam_step(state, module.parameters(), grad_acc)
                module.set_parameters(updated)
                grad_acc, pending = {}, 0
        if pending:
            updated, _ = adam_step(state, module.parameters(), grad_acc)
            module.set_parameters(updated)
    return module


def probe_eval(module: ModuleParams, pairs: list[PhrasePair]) -> CategoryReport:
    """Mean MSE between module outputs and phrase embeddings, per category."""
    if not pairs:
        raise EmptyDataset("no evaluation pairs")
    if module.fan_in != 2:
        raise ValueError("probe modules have fan-in 2")
    sums: dict = {}
    counts: dict = {}
    for pair in pairs:
        sums[pair.category] = sums.get(pair.category, 0.0) + _pair_loss(module, pair)
        counts[pair.category] = counts.get(pair.category, 0) + 1
    rows = {c: (counts[c], sums[c] / counts[c]) for c in counts}
    return CategoryReport(rows=rows)


def export_category_csv(report: CategoryReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("category,count,mean_mse\n")
        for category in CATEGORIES:
            if category in report.rows:
                count, mean = report.rows[category]
                fh.write(f"{category},{count},{mean!r}\n")


def load_category_csv(path) -> CategoryReport:
    rows: dict = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "category,count,mean_mse":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            category, count, mean = line.strip().split(",")
            rows[category] = (int(count), float(mean))
    return CategoryReport(rows=rows)
