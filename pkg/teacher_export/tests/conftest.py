import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

# words the tiny tokenizer knows; pieces make some words multi-subtoken
WHOLE_WORDS = [
    "the", "a", "an", "this", "that", "these", "those",
    "some", "all", "many", "few", "old", "red", "large", "happy",
    "dog", "cat", "cow", "tree", "bird", "stone", "river", "glass",
    "runs", "sits", "sees", "likes", "on", "mat", "sun",
]
PIECES = ["swarm", "##ing", "group", "##ed", "sever", "##al",
          "twelve", "mountain", "paper"]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A randomly initialized BERT-style checkpoint small enough to build
    per session, loaded through the same code paths as a published one."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    path = tmp_path_factory.mktemp("model") / "tiny-bert"
    path.mkdir()
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WHOLE_WORDS + PIECES
    (path / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")

    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    BertTokenizer(str(path / "vocab.txt")).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def cls_embedder(tiny_model_dir):
    from teacher_export import Embedder, TeacherSpec

    return Embedder(TeacherSpec(model=tiny_model_dir, pooling="cls"))


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    """Ten parseable sentences over the tiny vocabulary."""
    lines = [
        "# ten sentences",
        "(S (NP (DT the) (NN dog)) (VP (VBZ runs)))",
        "(S (NP (DT a) (NN cat)) (VP (VBZ sits)))",
        "(S (NP (DT the) (JJ red) (NN bird)) (VP (VBZ sees)))",
        "(S (NP (DT this) (NN cow)) (VP (VBZ likes) (NP (DT the) (NN mat))))",
        "(S (NP (DT that) (NN tree)) (VP (VBZ runs)))",
        "(NP (NN stone) (NN river))",
        "(S (NP (DT an) (JJ old) (NN glass)) (VP (VBZ sits)))",
        "(S (NP (DT these) (NN dog)) (VP (VBZ sees) (NP (DT a) (NN sun))))",
        "(S (NP (JJ swarming) (NN bird)) (VP (VBZ runs)))",
        "(S (NP (DT the) (JJ grouped) (NN cat)) (VP (VBZ sits)))",
    ]
    path = tmp_path_factory.mktemp("corpus") / "trees.txt"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
