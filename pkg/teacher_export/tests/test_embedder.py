import numpy as np
import pytest

from teacher_export import (
    Embedder,
    EmptyTokenization,
    ModelLoadError,
    TeacherSpec,
)


class TestSpec:
    def test_word_source_defaults(self):
        assert TeacherSpec("m", pooling="cls").resolved_word_source == "input-table"
        assert TeacherSpec("m", pooling="native").resolved_word_source == "encoded"
        assert TeacherSpec("m", pooling="native",
                           word_source="input-table").resolved_word_source == \
            "input-table"

    def test_validation(self):
        with pytest.raises(ValueError):
            TeacherSpec("m", pooling="mean")
        with pytest.raises(ValueError):
            TeacherSpec("m", word_source="static")

    def test_missing_model_raises(self):
        with pytest.raises(ModelLoadError):
            Embedder(TeacherSpec("/nonexistent/model-dir"))


class TestWordVectors:
    def test_single_subtoken_equals_table_row(self, cls_embedder):
        import torch
        tok = cls_embedder._tokenizer
        (idx,) = tok("dog", add_special_tokens=False)["input_ids"]
        with torch.no_grad():
            row = cls_embedder._encoder.get_input_embeddings()(
                torch.tensor([idx])).numpy()
        got = cls_embedder.word_vector("dog")
        assert got.shape == (1, 32)
        assert np.array_equal(got, row.astype(np.float32).astype(np.float64))

    def test_two_subtokens_meaned(self, cls_embedder):
        import torch
        tok = cls_embedder._tokenizer
        ids = tok("swarming", add_special_tokens=False)["input_ids"]
        assert len(ids) == 2
        with torch.no_grad():
            rows = cls_embedder._encoder.get_input_embeddings()(
                torch.tensor(ids)).numpy().astype(np.float64)
        got = cls_embedder.word_vector("swarming")
        assert np.allclose(got, rows.mean(axis=0, keepdims=True), atol=1e-7)

    def test_unknown_word_still_embeds(self, cls_embedder):
        vec = cls_embedder.word_vector("zzzz")
        assert vec.shape == (1, 32)
        assert np.isfinite(vec).all()

    def test_empty_word_rejected(self, cls_embedder):
        with pytest.raises(EmptyTokenization):
            cls_embedder.word_vector(" ")

    def test_encoded_source_excludes_specials(self, tiny_model_dir):
        import torch
        embedder = Embedder(TeacherSpec(tiny_model_dir, pooling="cls",
                                        word_source="encoded"))
        tok = embedder._tokenizer
        enc = tok("swarming", return_tensors="pt",
                  return_special_tokens_mask=True)
        mask = enc.pop("special_tokens_mask")[0] == 0
        with torch.no_grad():
            hidden = embedder._encoder(**enc).last_hidden_state[0]
        manual = hidden[mask].mean(dim=0, keepdim=True).numpy()
        got = embedder.word_vector("swarming")
        assert np.allclose(got, manual.astype(np.float64), atol=1e-7)
        # contextual outputs differ from the static table rows
        table = Embedder(TeacherSpec(tiny_model_dir, pooling="cls"))
        assert not np.allclose(got, table.word_vector("swarming"), atol=1e-3)

    def test_deterministic(self, cls_embedder):
        a = cls_embedder.word_vector("cat")
        b = cls_embedder.word_vector("cat")
        assert np.array_equal(a, b)


class TestSentenceVectors:
    def test_cls_position_vector(self, cls_embedder):
        import torch
        sentence = "the dog runs"
        enc = cls_embedder._tokenizer(sentence, return_tensors="pt")
        with torch.no_grad():
            hidden = cls_embedder._encoder(**enc).last_hidden_state[0]
        got = cls_embedder.sentence_vector(sentence)
        assert np.allclose(got, hidden[0:1].numpy().astype(np.float64),
                           atol=1e-7)

    def test_deterministic(self, cls_embedder):
        a = cls_embedder.sentence_vector("the cat sits")
        b = cls_embedder.sentence_vector("the cat sits")
        assert np.array_equal(a, b)

    def test_one_word_sentence_differs_from_word_vector(self, cls_embedder):
        word = cls_embedder.word_vector("dog")
        sent = cls_embedder.sentence_vector("dog")
        assert not np.allclose(word, sent, atol=1e-3)

    def test_native_pooling(self, tiny_model_dir):
        embedder = Embedder(TeacherSpec(tiny_model_dir, pooling="native"))
        vec = embedder.sentence_vector("the dog runs")
        assert vec.shape == (1, 32)
        assert np.isfinite(vec).all()
        assert np.array_equal(vec, embedder.sentence_vector("the dog runs"))
        # word vectors in native mode come from contextual subtoken means
        w = embedder.word_vector("swarming")
        assert w.shape == (1, 32)

    def test_dim_property(self, cls_embedder):
        assert cls_embedder.dim == 32
