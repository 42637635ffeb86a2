"""Tests for the hierarchical document scaler."""

import datetime

import numpy as np
import pytest

from polyscale.corpus import Corpus, LabelScheme, Manifesto, Polarity, Sentence
from polyscale.diffcore import check_gradients, constant
from polyscale.embedalign import EmbeddingTable
from polyscale.hiermodel import (
    POLARITY_ORDER,
    DocPrediction,
    ModelConfig,
    Vocabulary,
    combine_losses,
    document_loss,
    effective_rile,
    forward_document,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
    training_documents,
)

SCHEME = LabelScheme.default()


def make_sentence(text, gold=None, position=1):
    return Sentence(
        text=text, tokens=tuple(text.split()), position_index=position, gold_code=gold
    )


def make_doc(mid, texts, codes=None, rile=None, lang="aa", country="AA",
             party="p1", date=datetime.date(2010, 5, 1)):
    codes = codes or [None] * len(texts)
    sentences = tuple(
        make_sentence(text, gold=code, position=i + 1)
        for i, (text, code) in enumerate(zip(texts, codes))
    )
    return Manifesto(
        id=mid, party_id=party, country=country, language=lang,
        election_date=date, sentences=sentences, rile_gold=rile, ches_gold=None,
    )


def small_corpus():
    docs = (
        make_doc("m1", ["taxes must fall now", "markets need freedom"],
                 codes=["401", "401"], rile=0.6),
        make_doc("m2", ["we defend welfare services", "public housing for all"],
                 codes=["504", "504"], rile=-0.5),
        make_doc("m3", ["grenzen sichern jetzt", "steuern runter sofort"],
                 codes=["601", "401"], rile=0.4, lang="bb", country="BB", party="p2"),
        make_doc("m4", ["mehr wohlfahrt jetzt", "schulen fuer alle"],
                 codes=["504", "506"], rile=-0.6, lang="bb", country="BB", party="p3"),
    )
    return Corpus(manifestos=docs, scheme=SCHEME)


def tiny_config(**overrides):
    base = dict(embed_dim=6, word_hidden=4, sentence_hidden=4, epochs=2,
                learning_rate=0.01, seed=3)
    base.update(overrides)
    return ModelConfig(**base)


def np_softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


class TestVocabulary:
    def test_language_namespacing(self):
        docs = [
            make_doc("m1", ["tax now"], rile=0.1, lang="aa"),
            make_doc("m2", ["tax now"], rile=0.1, lang="bb"),
        ]
        vocab = Vocabulary.build(docs, cap=100)
        assert vocab.id_of("aa", "tax") != vocab.id_of("bb", "tax")

    def test_unknown_token_falls_back_per_language(self):
        docs = [make_doc("m1", ["tax now"], rile=0.1, lang="aa")]
        vocab = Vocabulary.build(docs, cap=100)
        assert vocab.id_of("aa", "zeppelin") == vocab.index["aa:<unk>"]

    def test_unseen_language_raises(self):
        docs = [make_doc("m1", ["tax now"], rile=0.1, lang="aa")]
        vocab = Vocabulary.build(docs, cap=100)
        with pytest.raises(ValueError, match="language 'zz'"):
            vocab.id_of("zz", "tax")

    def test_tokens_are_case_folded(self):
        docs = [make_doc("m1", ["Tax TAX tax"], rile=0.1)]
        vocab = Vocabulary.build(docs, cap=100)
        assert vocab.id_of("aa", "Tax") == vocab.id_of("aa", "tax")

    def test_cap_keeps_most_frequent(self):
        docs = [make_doc("m1", ["rare common common common other other"], rile=0.1)]
        vocab = Vocabulary.build(docs, cap=3)  # 1 unk slot + 2 tokens
        assert "aa:common" in vocab.index
        assert "aa:other" in vocab.index
        assert "aa:rare" not in vocab.index
        assert vocab.id_of("aa", "rare") == vocab.index["aa:<unk>"]

    def test_build_is_deterministic(self):
        docs = list(small_corpus().manifestos)
        assert Vocabulary.build(docs, 50).tokens == Vocabulary.build(docs, 50).tokens


class TestForward:
    def setup_method(self):
        self.corpus = small_corpus()
        self.params, _ = train(self.corpus, tiny_config(epochs=0))

    def test_output_shapes(self):
        fwd = forward_document(self.params, self.corpus.manifestos[0])
        assert all(t.value.shape == (57,) for t in fwd.code_logits)
        assert all(t.value.shape == (3,) for t in fwd.pol_probs)
        assert fwd.doc_vector.value.shape == (57 + 8,)
        assert fwd.rile_hat.value.shape == ()
        assert -1.0 < float(fwd.rile_hat.value) < 1.0

    def test_doc_vector_is_mean_of_prob_state_blocks(self):
        fwd = forward_document(self.params, self.corpus.manifestos[0])
        for logits, probs in zip(fwd.code_logits, fwd.code_probs):
            assert np.allclose(np_softmax(logits.value), probs.value, atol=1e-12)
        mean_probs = np.mean(np.stack([p.value for p in fwd.code_probs]), axis=0)
        assert np.allclose(fwd.doc_vector.value[:57], mean_probs, atol=1e-12)

    def test_document_head_recomputation(self):
        fwd = forward_document(self.params, self.corpus.manifestos[1])
        w = self.params.store["doc_head.weight"].value
        b = self.params.store["doc_head.bias"].value
        expected = np.tanh(fwd.doc_vector.value @ w + b)
        assert float(fwd.rile_hat.value) == pytest.approx(float(expected), rel=1e-12)

    def test_forward_is_deterministic(self):
        doc = self.corpus.manifestos[0]
        a = forward_document(self.params, doc)
        b = forward_document(self.params, doc)
        assert np.array_equal(a.rile_hat.value, b.rile_hat.value)
        assert np.array_equal(a.doc_vector.value, b.doc_vector.value)


class TestLosses:
    def test_combined_worked_value(self):
        total = combine_losses(
            constant(1.0), constant(2.0), constant(3.0), constant(4.0),
            alpha=0.3, beta=0.1, gamma=0.7,
        )
        assert float(total.value) == pytest.approx(4.8, rel=1e-12)

    def test_alpha_one_reduces_to_sentence_loss_bitwise(self):
        l_s = constant(0.123456789123456789)
        total = combine_losses(l_s, constant(9.9), constant(8.8), constant(7.7),
                               alpha=1.0, beta=0.0, gamma=0.0)
        assert float(total.value) == float(l_s.value)

    def test_absent_components_are_skipped(self):
        total = combine_losses(None, constant(2.0), None, None,
                               alpha=0.3, beta=0.1, gamma=0.7)
        assert float(total.value) == pytest.approx(0.7 * 2.0, rel=1e-12)

    def test_no_components_raises(self):
        with pytest.raises(ValueError, match="no loss components"):
            combine_losses(None, None, None, None, alpha=1.0, beta=0.0, gamma=0.0)

    def test_document_loss_components_fully_annotated(self):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config(epochs=0))
        total, parts = document_loss(params, corpus.manifestos[0])
        assert set(parts) == {"sentence", "doc", "polarity", "structure"}
        fwd = forward_document(params, corpus.manifestos[0])
        assert parts["doc"] == pytest.approx(
            (float(fwd.rile_hat.value) - 0.6) ** 2, rel=1e-9
        )

    def test_document_loss_score_only_doc(self):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config(epochs=0))
        doc = make_doc("m9", ["words without labels", "more words here"], rile=0.2)
        total, parts = document_loss(params, doc)
        assert set(parts) == {"doc", "structure"}

    def test_structure_margin_recomputation(self):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config(epochs=0))
        doc = corpus.manifestos[1]
        _, parts = document_loss(params, doc)
        fwd = forward_document(params, doc)
        margins = [float(p.value[1] - p.value[0]) for p in fwd.pol_probs]
        expected = (float(np.mean(margins)) - doc.rile_gold) ** 2
        assert parts["structure"] == pytest.approx(expected, rel=1e-9)

    def test_effective_rile_prefers_explicit_then_derives(self):
        explicit = make_doc("m1", ["a b"], codes=["104"], rile=0.25)
        assert effective_rile(explicit, SCHEME) == 0.25
        derived = make_doc("m2", ["a b", "c d"], codes=["104", "104"])
        assert effective_rile(derived, SCHEME) == 1.0
        unusable = make_doc("m3", ["a b", "c d"], codes=["104", None])
        assert effective_rile(unusable, SCHEME) is None

    def test_training_documents_filters(self):
        docs = (
            make_doc("m1", ["a b"], codes=["104"], rile=0.5),
            make_doc("m2", ["a b"], codes=[None]),
        )
        corpus = Corpus(manifestos=docs, scheme=SCHEME)
        assert [d.id for d in training_documents(corpus)] == ["m1"]


class TestGradients:
    def test_full_model_gradient_check_on_small_fixture(self):
        corpus = small_corpus()
        config = tiny_config(embed_dim=4, word_hidden=3, sentence_hidden=3, epochs=0)
        params, _ = train(corpus, config)
        doc = corpus.manifestos[0]

        def loss_fn():
            total, _ = document_loss(params, doc, config)
            return total

        names = [
            "embed.matrix", "word_fwd.wx_i", "word_bwd.wh_c", "sent_fwd.b_f",
            "sent_bwd.wx_o", "code_head.weight", "pol_head.bias",
            "doc_head.weight", "doc_head.bias",
        ]
        worst = check_gradients(loss_fn, params.store, epsilon=1e-4, names=names)
        assert worst <= 1e-4


class TestTrain:
    def test_loss_decreases(self):
        corpus = small_corpus()
        params, logs = train(corpus, tiny_config(epochs=8))
        assert logs[-1].mean_loss < logs[0].mean_loss

    def test_training_is_deterministic(self):
        corpus = small_corpus()
        params_a, logs_a = train(corpus, tiny_config())
        params_b, logs_b = train(corpus, tiny_config())
        assert logs_a == logs_b
        for name in params_a.store.names:
            assert np.array_equal(
                params_a.store[name].value, params_b.store[name].value
            )

    def test_unlabeled_documents_do_not_change_training(self):
        base = small_corpus()
        extra = base.manifestos + (
            make_doc("x1", ["noise tokens everywhere", "unrelated words"]),
        )
        bigger = Corpus(manifestos=extra, scheme=SCHEME)
        params_a, _ = train(base, tiny_config())
        params_b, _ = train(bigger, tiny_config())
        for name in params_a.store.names:
            assert np.array_equal(
                params_a.store[name].value, params_b.store[name].value
            )

    def test_no_trainable_documents_raises(self):
        corpus = Corpus(
            manifestos=(make_doc("m1", ["a b"], codes=[None]),), scheme=SCHEME
        )
        with pytest.raises(ValueError, match="no trainable documents"):
            train(corpus, tiny_config())

    def test_epoch_logs_have_components(self):
        _, logs = train(small_corpus(), tiny_config(epochs=1))
        assert len(logs) == 1
        assert {"sentence", "doc", "polarity", "structure"} <= set(logs[0].components)


class TestPredict:
    def test_prediction_fields(self):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config())
        preds = predict(params, corpus)
        assert [p.manifesto_id for p in preds] == ["m1", "m2", "m3", "m4"]
        for pred, doc in zip(preds, corpus.manifestos):
            assert isinstance(pred, DocPrediction)
            assert len(pred.codes) == len(doc.sentences)
            assert all(code in SCHEME.codes for code in pred.codes)
            assert all(pol in POLARITY_ORDER for pol in pred.polarities)
            assert -1.0 <= pred.rile_hat <= 1.0
            assert pred.doc_vector.shape == (57 + 8,)

    def test_predict_unseen_language_raises(self):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config())
        alien = make_doc("z1", ["palabras nuevas aqui"], lang="zz", country="AA")
        with pytest.raises(ValueError, match="language 'zz'"):
            predict(params, [alien])


class TestCheckpoint:
    def test_round_trip_preserves_predictions_bitwise(self, tmp_path):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config())
        path = tmp_path / "model.pscl"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.config == params.config
        assert loaded.vocab.tokens == params.vocab.tokens
        assert loaded.scheme == params.scheme
        for name in params.store.names:
            assert np.array_equal(loaded.store[name].value, params.store[name].value)
        before = predict(params, corpus)
        after = predict(loaded, corpus)
        for a, b in zip(before, after):
            assert a.rile_hat == b.rile_hat
            assert a.codes == b.codes
            assert np.array_equal(a.doc_vector, b.doc_vector)

    def test_magic_is_checked(self, tmp_path):
        path = tmp_path / "bogus.pscl"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError, match="not a model checkpoint"):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        corpus = small_corpus()
        params, _ = train(corpus, tiny_config())
        path = tmp_path / "model.pscl"
        save_checkpoint(params, path)
        clipped = path.read_bytes()[:-16]
        path.write_bytes(clipped)
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_frozen_embeddings_round_trip(self, tmp_path):
        corpus = small_corpus()
        docs = training_documents(corpus)
        vocab_probe = Vocabulary.build(docs, 20_000)
        words = list(vocab_probe.tokens)
        rng = np.random.default_rng(5)
        table = EmbeddingTable(tuple(words), rng.normal(size=(len(words), 6)))
        config = tiny_config(trainable_embeddings=False)
        params, _ = train(corpus, config, embeddings=table)
        assert "embed.matrix" not in params.store
        assert params.frozen_embed is not None
        path = tmp_path / "model.pscl"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.frozen_embed, params.frozen_embed)
        before = predict(params, corpus)
        after = predict(loaded, corpus)
        assert all(a.rile_hat == b.rile_hat for a, b in zip(before, after))

    def test_frozen_without_table_raises(self):
        with pytest.raises(ValueError, match="pretrained"):
            train(small_corpus(), tiny_config(trainable_embeddings=False))
