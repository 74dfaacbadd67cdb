"""Distill transformer sentence embeddings into syntax-structured module
networks: one learnable module per production rule, composed along each
sentence's constituency parse and trained against teacher embeddings."""

__version__ = "0.1.0"

from .autodiff import Tape, affine, backward, concat, grad_check, mse, relu
from .dataset import SentenceRecord, load_dataset, save_dataset
from .distill import (
    TrainConfig,
    TrainHistory,
    chance_mse,
    evaluate,
    export_history_csv,
    load_history_csv,
    train,
)
from .modules import (
    Architecture,
    ModuleParams,
    ModuleRegistry,
    compose_sentence,
    init_module,
    load_checkpoint,
    module_apply,
    module_forward,
    save_checkpoint,
)
from .optim import AdamState, adam_step
from .probe import (
    CategoryReport,
    PhrasePair,
    load_phrase_pairs,
    probe_eval,
    probe_train,
    save_phrase_pairs,
)
from .trees import (
    CorpusFilterConfig,
    ProductionRule,
    SplitResult,
    Tree,
    extract_productions,
    filter_corpus,
    normalize_tree,
    parse_tree,
    read_treebank,
    serialize_tree,
    split_corpus,
    tree_height,
    write_treebank,
)
