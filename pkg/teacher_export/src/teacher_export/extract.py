"""Word- and sentence-level embedding extraction from pretrained encoders.

Word vectors come from encoding each word in isolation: the arithmetic mean
over its subtoken vectors, with special-token positions excluded. Subtoken
vectors are either rows of the model's input embedding table
(``word_source="input-table"``, the BERT convention) or contextual encoder
outputs (``"encoded"``). Sentence vectors use the CLS position
(``pooling="cls"``) or the model's own pooled representation
(``pooling="native"``).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import treebank

log = logging.getLogger(__name__)

POOLINGS = ("cls", "native")
WORD_SOURCES = ("input-table", "encoded")


class ModelLoadError(RuntimeError):
    pass


class EmptyTokenization(ValueError):
    pass


@dataclass(frozen=True)
class TeacherSpec:
    """Which checkpoint to export from and how to pool it.

    ``word_source=None`` picks the convention matching the pooling mode:
    the input embedding table for CLS models, contextual outputs otherwise.
    """

    model: str
    pooling: str = "cls"
    word_source: str | None = None

    def __post_init__(self):
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.word_source not in WORD_SOURCES + (None,):
            raise ValueError(f"word_source must be one of {WORD_SOURCES}")

    @property
    def resolved_word_source(self) -> str:
        if self.word_source is not None:
            return self.word_source
        return "input-table" if self.pooling == "cls" else "encoded"


class Embedder:
    """Loads the checkpoint once and serves deterministic CPU extractions."""

    def __init__(self, spec: TeacherSpec):
        import torch

        self.spec = spec
        self._torch = torch
        self._cache: dict = {}
        try:
            if spec.pooling == "native":
                from sentence_transformers import SentenceTransformer
                self._st = SentenceTransformer(spec.model, device="cpu")
                self._st.eval()
                # reuse the wrapped transformer for token-level extraction
                self._tokenizer = self._st.tokenizer
                self._encoder = self._st[0].auto_model
            else:
                from transformers import AutoModel, AutoTokenizer
                self._st = None
                self._tokenizer = AutoTokenizer.from_pretrained(spec.model)
                model = AutoModel.from_pretrained(spec.model)
                model.eval()
                if getattr(model.config, "is_encoder_decoder", False):
                    model = model.get_encoder()
                self._encoder = model
        except Exception as exc:
            raise ModelLoadError(f"cannot load {spec.model!r}: {exc}") from exc
        if spec.pooling == "cls" and self._tokenizer.cls_token_id is None:
            raise ModelLoadError(
                f"{spec.model!r} exposes no CLS token; use native pooling"
            )

    @property
    def dim(self) -> int:
        return self.sentence_vector("probe").shape[1]

    def word_vector(self, word: str) -> np.ndarray:
        """(1, D) embedding of one word encoded alone."""
        if not word or word.isspace():
            raise EmptyTokenization("empty word")
        key = ("word", word)
        if key not in self._cache:
            self._cache[key] = self._word_vector(word)
        return self._cache[key]

    def _word_vector(self, word: str) -> np.ndarray:
        torch = self._torch
        if self.spec.resolved_word_source == "input-table":
            ids = self._tokenizer(word, add_special_tokens=False)["input_ids"]
            if not ids:
                raise EmptyTokenization(f"{word!r} yields no subtokens")
            with torch.no_grad():
                table = self._encoder.get_input_embeddings()
                rows = table(torch.tensor(ids))
            vec = rows.mean(dim=0, keepdim=True)
            return vec.numpy().astype(np.float32).astype(np.float64)
        enc = self._tokenizer(word, return_tensors="pt",
                              return_special_tokens_mask=True)
        keep = enc.pop("special_tokens_mask")[0] == 0
        if not bool(keep.any()):
            raise EmptyTokenization(f"{word!r} yields no subtokens")
        with torch.no_grad():
            hidden = self._encoder(**enc).last_hidden_state[0]
        vec = hidden[keep].mean(dim=0, keepdim=True)
        return vec.numpy().astype(np.float32).astype(np.float64)

    def sentence_vector(self, sentence: str) -> np.ndarray:
        """(1, D) sentence embedding under the configured pooling."""
        if not sentence or sentence.isspace():
            raise ValueError("empty sentence")
        torch = self._torch
        if self.spec.pooling == "native":
            vec = self._st.encode([sentence], convert_to_numpy=True,
                                  show_progress_bar=False)
            return vec.astype(np.float32).astype(np.float64)
        enc = self._tokenizer(sentence, return_tensors="pt", truncation=True)
        ids = enc["input_ids"][0].tolist()
        cls_pos = ids.index(self._tokenizer.cls_token_id)
        with torch.no_grad():
            hidden = self._encoder(**enc).last_hidden_state[0]
        vec = hidden[cls_pos:cls_pos + 1]
        return vec.numpy().astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# JSONL schema mirror; records are checked before writing


def validate_record(raw: dict, expected_dim: int | None = None,
                    n_leaves: int | None = None) -> int:
    """Check one record against the interchange schema; returns its dim."""
    for field in ("id", "tree", "dim", "words", "sentence_vec"):
        if field not in raw:
            raise ValueError(f"record missing field {field!r}")
    dim = raw["dim"]
    if expected_dim is not None and dim != expected_dim:
        raise ValueError(f"dim {dim} != dataset dim {expected_dim}")
    if n_leaves is not None and len(raw["words"]) != n_leaves:
        raise ValueError(
            f"{len(raw['words'])} word vectors for {n_leaves} leaves"
        )
    vectors = [w["vec"] for w in raw["words"]] + [raw["sentence_vec"]]
    for vec in vectors:
        if len(vec) != dim:
            raise ValueError(f"vector length {len(vec)} != dim {dim}")
        if not all(np.isfinite(v) for v in vec):
            raise ValueError("non-finite vector entry")
    return dim


def _as_list(vec: np.ndarray) -> list:
    # f32 values carried as exact doubles; json emits their shortest repr
    return [float(v) for v in vec.reshape(-1)]


def export_corpus(embedder: Embedder, trees_path, out_path,
                  normalize_labels: bool = True) -> int:
    """One record per treebank line: id is the line number, word vectors in
    leaf order, sentence vector of the space-joined leaves. Returns the
    number of records written."""
    entries = treebank.read_trees(trees_path, normalize_labels)
    dim: int | None = None
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for lineno, tree_text, words in entries:
            record = {
                "id": str(lineno),
                "tree": tree_text,
                "dim": 0,  # patched below once vectors exist
                "words": [
                    {"text": w, "vec": _as_list(embedder.word_vector(w))}
                    for w in words
                ],
                "sentence_vec": _as_list(
                    embedder.sentence_vector(" ".join(words))
                ),
            }
            record["dim"] = len(record["sentence_vec"])
            dim = validate_record(record, expected_dim=dim,
                                  n_leaves=len(words))
            fh.write(json.dumps(record))
            fh.write("\n")
            written += 1
    log.info("wrote %d records to %s", written, out_path)
    return written


# ---------------------------------------------------------------------------
# probe datasets: two-word phrases by lexical category

DEFAULT_LEXICON = {
    "determiner": ("the", "a", "an", "this", "that", "these", "those"),
    "quantifier": ("some", "all", "several", "twelve", "many", "few"),
    "adjective": ("swarming", "grouped", "red", "large", "happy", "old"),
    "noun-control": ("tree", "stone", "river", "glass", "mountain", "paper"),
}

_CATEGORY_TAG = {
    "determiner": "DT",
    "quantifier": "DT",
    "adjective": "JJ",
    "noun-control": "NN",
}


def load_lexicon(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = set(raw) - set(DEFAULT_LEXICON)
    if unknown:
        raise ValueError(f"unknown categories: {sorted(unknown)}")
    return {k: tuple(v) for k, v in raw.items()}


def export_probe(embedder: Embedder, nouns: list[str], out_path,
                 lexicon: dict | None = None) -> int:
    """Two-word phrase records (category word x noun) whose targets are the
    teacher's embeddings of the raw two-word strings."""
    lexicon = DEFAULT_LEXICON if lexicon is None else lexicon
    dim: int | None = None
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for category in ("determiner", "quantifier", "adjective", "noun-control"):
            for first in lexicon.get(category, ()):
                for noun in nouns:
                    if first == noun:
                        continue
                    record = {
                        "id": f"p{written:04d}",
                        "tree": f"(NP ({_CATEGORY_TAG[category]} {first}) (NN {noun}))",
                        "dim": 0,
                        "words": [
                            {"text": first,
                             "vec": _as_list(embedder.word_vector(first))},
                            {"text": noun,
                             "vec": _as_list(embedder.word_vector(noun))},
                        ],
                        "sentence_vec": _as_list(
                            embedder.sentence_vector(f"{first} {noun}")
                        ),
                        "category": category,
                    }
                    record["dim"] = len(record["sentence_vec"])
                    dim = validate_record(record, expected_dim=dim, n_leaves=2)
                    fh.write(json.dumps(record))
                    fh.write("\n")
                    written += 1
    log.info("wrote %d probe records to %s", written, out_path)
    return written
