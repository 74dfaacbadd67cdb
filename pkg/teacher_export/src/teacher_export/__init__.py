"""Export word- and sentence-level transformer embeddings to the JSONL
interchange format used for syntax-guided distillation."""

__version__ = "0.1.0"

from .extract import (
    DEFAULT_LEXICON,
    Embedder,
    EmptyTokenization,
    ModelLoadError,
    TeacherSpec,
    export_corpus,
    export_probe,
    load_lexicon,
    validate_record,
)
