"""JSON-lines interchange for sentence records.

One record per line: ``id`` (string), ``tree`` (bracketed string), ``dim``
(int), ``words`` (array of {"text", "vec"} in leaf order), ``sentence_vec``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, LeafCountMismatch, SchemaError, TreeParseError
from .trees import Tree, parse_tree, serialize_tree


@dataclass
class SentenceRecord:
    id: str
    tree: Tree
    words: list[str]
    word_vectors: np.ndarray   # (n_words, dim)
    sentence_vector: np.ndarray  # (1, dim)

    @property
    def dim(self) -> int:
        return self.sentence_vector.shape[1]

    def word_vector(self, i: int) -> np.ndarray:
        return self.word_vectors[i:i + 1, :]

    def word_vector_list(self) -> list[np.ndarray]:
        return [self.word_vectors[i:i + 1, :] for i in range(len(self.words))]


def _vector(raw, dim: int, what: str, line: int) -> np.ndarray:
    if not isinstance(raw, list) or not all(isinstance(x, (int, float)) for x in raw):
        raise SchemaError(f"{what} must be an array of numbers", line)
    if len(raw) != dim:
        raise DimMismatch(f"{what} has length {len(raw)}, expected {dim}", line)
    arr = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise SchemaError(f"{what} contains non-finite values", line)
    return arr


def parse_record(raw: dict, line: int, expected_dim: int | None = None) -> SentenceRecord:
    for field in ("id", "tree", "dim", "words", "sentence_vec"):
        if field not in raw:
            raise SchemaError(f"missing field {field!r}", line)
    if not isinstance(raw["id"], str):
        raise SchemaError("'id' must be a string", line)
    if not isinstance(raw["dim"], int) or isinstance(raw["dim"], bool) or raw["dim"] < 1:
        raise SchemaError("'dim' must be a positive integer", line)
    dim = raw["dim"]
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f"dim {dim} differs from dataset dim {expected_dim}", line)
    try:
        tree = parse_tree(raw["tree"])
    except TreeParseError as exc:
        raise SchemaError(f"bad tree: {exc.args[0]}", line) from None
    if not isinstance(raw["words"], list) or not raw["words"]:
        raise SchemaError("'words' must be a non-empty array", line)
    words: list[str] = []
    vectors: list[np.ndarray] = []
    for i, entry in enumerate(raw["words"]):
        if not isinstance(entry, dict) or "text" not in entry or "vec" not in entry:
            raise SchemaError(f"words[{i}] must have 'text' and 'vec'", line)
        if not isinstance(entry["text"], str):
            raise SchemaError(f"words[{i}].text must be a string", line)
        words.append(entry["text"])
        vectors.append(_vector(entry["vec"], dim, f"words[{i}].vec", line))
    leaves = tree.leaves()
    if len(words) != len(leaves):
        raise LeafCountMismatch(
            f"record {raw['id']!r} has {len(words)} word vectors "
            f"for {len(leaves)} leaves", line
        )
    sentence_vec = _vector(raw["sentence_vec"], dim, "sentence_vec", line)
    return SentenceRecord(
        id=raw["id"],
        tree=tree,
        words=words,
        word_vectors=np.vstack(vectors),
        sentence_vector=sentence_vec.reshape(1, -1),
    )


def load_dataset(path) -> list[SentenceRecord]:
    """Load and validate a JSONL dataset; the dimensionality of the first
    record is enforced on all that follow."""
    records: list[SentenceRecord] = []
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
            if not isinstance(raw, dict):
                raise SchemaError("record must be a JSON object", lineno)
            record = parse_record(raw, lineno, expected_dim=dim)
            if dim is None:
                dim = record.dim
            records.append(record)
    return records


def record_to_json(record: SentenceRecord) -> dict:
    return {
        "id": record.id,
        "tree": serialize_tree(record.tree),
        "dim": record.dim,
        "words": [
            {"text": w, "vec": record.word_vectors[i].tolist()}
            for i, w in enumerate(record.words)
        ],
        "sentence_vec": record.sentence_vector[0].tolist(),
    }


def save_dataset(path, records: list[SentenceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record)))
            fh.write("\n")


def split_records(records: list[SentenceRecord], val_fraction: float,
                  seed: int):
    """Coverage-preserving record split, keyed on the records' trees."""
    from .trees import SplitResult, split_indices

    train_idx, val_idx, target = split_indices(
        [r.tree for r in records], val_fraction, seed
    )
    train = [records[i] for i in train_idx]
    val = [records[i] for i in val_idx]
    return SplitResult(train, val, target, short=len(val) < target)
