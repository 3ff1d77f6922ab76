"""Explanation bundles and the projection layer."""
import numpy as np
import pytest

from triagekit.corpus import CorpusConfig, generate_corpus
from triagekit.errors import UnsupportedHeadError
from triagekit.explain import (
    embed_training_set,
    explain_instance,
    fit_projection,
    project_query,
)
from triagekit.textpipe import clean_text


@pytest.fixture(scope="module")
def setup(small_corpus_mod, tokenizer_mod, attention_model_mod):
    return small_corpus_mod, tokenizer_mod, attention_model_mod


@pytest.fixture(scope="module")
def small_corpus_mod():
    return generate_corpus(CorpusConfig(n_patients=40, seed=21))


@pytest.fixture(scope="module")
def tokenizer_mod(small_corpus_mod):
    from triagekit.textpipe import train_tokenizer

    return train_tokenizer(small_corpus_mod, 4000)


@pytest.fixture(scope="module")
def attention_model_mod(tokenizer_mod):
    from conftest import tiny_model_config
    from triagekit.encoder import HEAD_LABEL_ATTENTION, build_model

    return build_model(
        tiny_model_config(tokenizer_mod.vocab_size, head_kind=HEAD_LABEL_ATTENTION),
        seed=17,
    ).eval()


class TestExplainInstance:
    def test_weights_sum_to_one(self, setup):
        corpus, tok, model = setup
        inst = next(i for i in corpus.accepted() if i.documents)
        bundle = explain_instance(inst, model, tok, segment_size=128)
        total = sum(s.weight for s in bundle.spans) + bundle.special_token_weight
        assert abs(total - 1.0) < 1e-6

    def test_spans_reconstruct_cleaned_text(self, setup):
        corpus, tok, model = setup
        inst = next(i for i in corpus.accepted() if len(i.documents) >= 2)
        bundle = explain_instance(inst, model, tok, segment_size=128)
        cleaned = [clean_text(d.text) for d in inst.documents]
        for span in bundle.spans:
            piece = cleaned[span.doc_index][span.char_start:span.char_end]
            assert piece and not piece.startswith(" ") and not piece.endswith(" ")

    def test_dominant_span_carries_max_display_weight(self, setup):
        corpus, tok, model = setup
        inst = next(i for i in corpus.accepted() if i.documents)
        bundle = explain_instance(inst, model, tok, segment_size=128)
        best = max(bundle.spans, key=lambda s: s.weight)
        assert best.display_weight == 1.0

    def test_stable_across_runs(self, setup):
        corpus, tok, model = setup
        inst = next(i for i in corpus.accepted() if i.documents)
        a = explain_instance(inst, model, tok, segment_size=128)
        b = explain_instance(inst, model, tok, segment_size=128)
        assert a.as_dict() == b.as_dict()

    def test_label_override(self, setup):
        from triagekit.corpus import TeamLabel

        corpus, tok, model = setup
        inst = next(i for i in corpus.accepted() if i.documents)
        bundle = explain_instance(inst, model, tok, segment_size=128, label=TeamLabel.PN)
        assert bundle.label == TeamLabel.PN
        total = sum(s.weight for s in bundle.spans) + bundle.special_token_weight
        assert abs(total - 1.0) < 1e-6

    def test_pooled_head_rejected(self, setup, small_tokenizer, pooled_model):
        corpus, _, _ = setup
        inst = corpus.accepted()[0]
        with pytest.raises(UnsupportedHeadError):
            explain_instance(inst, pooled_model, small_tokenizer)


class TestEmbeddings:
    def test_identical_instances_identical_embeddings(self, setup):
        corpus, tok, model = setup
        inst = corpus.accepted()[0]
        out = embed_training_set([inst, inst], model, tok, segment_size=128)
        assert np.array_equal(out[0], out[1])

    def test_dimension_is_hidden_dim(self, setup):
        corpus, tok, model = setup
        out = embed_training_set(corpus.accepted()[:3], model, tok, segment_size=128)
        assert out.shape == (3, model.config.hidden_dim)


class TestPCA:
    def test_planar_data_distances_preserved(self, rng):
        basis = rng.normal(size=(2, 24))
        Z = rng.normal(size=(40, 2))
        X = Z @ basis
        pm = fit_projection(X, [None] * 40, [str(i) for i in range(40)], method="pca")
        def pdist(A):
            return np.sqrt(((A[:, None, :] - A[None, :, :]) ** 2).sum(-1))
        assert np.abs(pdist(X) - pdist(pm.coords)).max() < 1e-6

    def test_deterministic_including_sign(self, rng):
        X = rng.normal(size=(30, 8))
        a = fit_projection(X, [None] * 30, [str(i) for i in range(30)], method="pca")
        b = fit_projection(X, [None] * 30, [str(i) for i in range(30)], method="pca")
        assert np.array_equal(a.coords, b.coords)

    def test_variance_ordering(self, rng):
        X = rng.normal(size=(50, 6)) * np.array([5, 3, 1, 1, 1, 1])
        pm = fit_projection(X, [None] * 50, [str(i) for i in range(50)], method="pca")
        var = pm.metadata["explained_variance"]
        assert var[0] >= var[1]

    def test_query_on_training_point_coincides(self, rng):
        X = rng.normal(size=(10, 5))
        pm = fit_projection(X, [None] * 10, [str(i) for i in range(10)], method="pca")
        assert np.allclose(project_query(pm, X[4]), pm.coords[4])

    def test_query_at_mean_is_origin(self, rng):
        X = rng.normal(size=(10, 5))
        pm = fit_projection(X, [None] * 10, [str(i) for i in range(10)], method="pca")
        assert np.allclose(project_query(pm, X.mean(axis=0)), (0.0, 0.0), atol=1e-9)

    def test_too_few_points_rejected(self, rng):
        X = rng.normal(size=(2, 5))
        with pytest.raises(ValueError):
            fit_projection(X, [None] * 2, ["a", "b"], method="pca")

    def test_dimension_mismatch_rejected(self, rng):
        X = rng.normal(size=(10, 5))
        pm = fit_projection(X, [None] * 10, [str(i) for i in range(10)], method="pca")
        with pytest.raises(ValueError):
            project_query(pm, np.zeros(7))


class TestTSNE:
    def test_kl_divergence_decreases(self, rng):
        X = rng.normal(size=(100, 12)) + np.repeat(np.eye(5, 12) * 6, 20, axis=0)
        pm = fit_projection(X, [None] * 100, [str(i) for i in range(100)],
                            method="tsne", iterations=300, seed=3)
        assert pm.metadata["final_kl"] < pm.metadata["initial_kl"]

    def test_query_nearest_neighbour_oracle(self, rng):
        X = rng.normal(size=(30, 6))
        pm = fit_projection(X, [None] * 30, [str(i) for i in range(30)],
                            method="tsne", iterations=100, seed=1)
        q = rng.normal(size=6)
        nn = int(np.square(X - q).sum(axis=1).argmin())
        assert project_query(pm, q) == (pm.coords[nn, 0], pm.coords[nn, 1])

    def test_seeded_determinism(self, rng):
        X = rng.normal(size=(25, 4))
        a = fit_projection(X, [None] * 25, [str(i) for i in range(25)],
                           method="tsne", iterations=50, seed=9)
        b = fit_projection(X, [None] * 25, [str(i) for i in range(25)],
                           method="tsne", iterations=50, seed=9)
        assert np.array_equal(a.coords, b.coords)
