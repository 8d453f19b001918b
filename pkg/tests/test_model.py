import numpy as np
import pytest

from conftest import make_vocab, random_doc
from topicxfer.corpus import Corpus, Document
from topicxfer.errors import ConfigError, CorpusError
from topicxfer.model import (ForwardTrace, ModelParams, TrainConfig,
                             document_vector, ensure_alignments, forward,
                             gradients, init_params, load_model, log_likelihood,
                             loss, save_model, train)
from topicxfer.transfer import (KnowledgeBase, SourceWeight, TransferSpec,
                                make_transfer_context)


def zero_params(h, k, activation="sigmoid"):
    return ModelParams(np.zeros((h, k)), np.zeros((k, h)), np.zeros(k),
                       np.zeros(h), activation=activation)


def make_ctx(rng, h, k, modes=("lvt", "gvt"), n_sources=1, lam=0.7, gamma=0.3):
    vocab = make_vocab(k)
    kbs, weights = [], []
    for s in range(n_sources):
        sid = f"s{s}"
        kbs.append(KnowledgeBase(sid, vocab, rng.normal(size=(h, k)),
                                 rng.normal(size=(h, k))))
        weights.append(SourceWeight(sid, lam if "lvt" in modes else 0.0,
                                    gamma if "gvt" in modes else 0.0))
    spec = TransferSpec(weights, lvt_enabled="lvt" in modes, gvt_enabled="gvt" in modes)
    return make_transfer_context(kbs, vocab, spec, h)


# ----------------------------------------------------------------- init

def test_init_zero_scale_gives_zero_params():
    p = init_params(3, 4, seed=0, init_scale=0.0)
    for arr in (p.W, p.U, p.b, p.c):
        assert np.all(arr == 0.0)


def test_init_same_seed_is_bitwise_identical():
    a = init_params(4, 7, seed=123, init_scale=0.2)
    b = init_params(4, 7, seed=123, init_scale=0.2)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.U, b.U)


def test_init_distribution_statistics():
    # statistical check against the seeded generator
    draws = np.concatenate([init_params(2, 3, seed=s, init_scale=0.1).W.ravel()
                            for s in range(1, 1701)])
    assert draws.size >= 10_000
    assert np.abs(draws).max() <= 0.1
    assert abs(draws.mean()) < 0.05


def test_init_rejects_bad_dims():
    with pytest.raises(ConfigError):
        init_params(0, 5, seed=0)


# ----------------------------------------------------------------- forward / loss

def test_single_word_uniform_logprob():
    p = zero_params(3, 2)
    p.W[:] = np.random.default_rng(0).normal(size=(3, 2))
    p.c[:] = 0.4
    trace = forward(Document(np.array([0])), p)
    assert trace.log_probs[0] == pytest.approx(np.log(0.5), abs=1e-15)


def test_uniform_model_total_logprob(rng):
    k, d = 4, 6
    p = zero_params(2, k)
    doc = random_doc(rng, k, d)
    assert log_likelihood(doc, p) == pytest.approx(-d * np.log(k), abs=1e-12)


def test_uniform_loss_value(rng):
    p = zero_params(5, 4)
    doc = random_doc(rng, 4, 3)
    assert loss(doc, p) == pytest.approx(3 * np.log(4), abs=1e-12)


def test_loss_zero_penalty_when_w_equals_topics(rng):
    h, k = 2, 5
    ctx = make_ctx(rng, h, k, modes=("gvt",), gamma=3.0)
    z = ctx.projected["s0"].topics
    p = ModelParams(z.copy(), np.zeros((k, h)), np.zeros(k), np.zeros(h))
    ensure_alignments(p, ctx)
    doc = random_doc(rng, k, 4)
    assert loss(doc, p, ctx) == pytest.approx(-log_likelihood(doc, p, ctx), abs=1e-15)


def test_loss_adds_hand_summed_penalty(rng):
    h, k = 2, 3
    ctx = make_ctx(rng, h, k, modes=("gvt",), gamma=0.8)
    p = init_params(h, k, seed=5, init_scale=0.4)
    ensure_alignments(p, ctx)
    p.alignments["s0"] = rng.normal(size=(h, h))
    doc = random_doc(rng, k, 4)
    z = ctx.projected["s0"].topics
    penalty = 0.0
    for j in range(h):
        row = p.alignments["s0"][j] @ p.W - z[j]
        penalty += 0.8 * float(row @ row)
    assert loss(doc, p, ctx) == pytest.approx(-log_likelihood(doc, p, ctx) + penalty,
                                              abs=1e-12)


def test_forward_trace_shape_and_signs(rng):
    p = init_params(4, 7, seed=2, init_scale=0.5)
    doc = random_doc(rng, 7, 9)
    trace = forward(doc, p)
    assert isinstance(trace, ForwardTrace)
    assert trace.log_probs.shape == (9,)
    assert (trace.log_probs <= 0).all()
    assert trace.hidden.shape == (9, 4)


def test_forward_rejects_out_of_range_indices():
    p = zero_params(2, 3)
    with pytest.raises(CorpusError):
        forward(Document(np.array([5])), p)


# ----------------------------------------------------------------- gradients

def test_softmax_minus_onehot_at_zero_params():
    k = 5
    p = zero_params(3, k)
    g = gradients(Document(np.array([2])), p)
    expect = np.full(k, 1.0 / k)
    expect[2] -= 1.0
    np.testing.assert_allclose(g.b, expect, atol=1e-15)


def test_zero_gamma_zeroes_alignment_gradients(rng):
    ctx = make_ctx(rng, 3, 5, modes=("lvt", "gvt"), n_sources=2, gamma=0.4)
    ctx.spec.sources[1].gamma = 0.0
    p = init_params(3, 5, seed=1)
    ensure_alignments(p, ctx)
    g = gradients(random_doc(rng, 5, 4), p, ctx)
    assert np.all(g.alignments["s1"] == 0.0)
    assert np.any(g.alignments["s0"] != 0.0)


def _fd_check(doc, params, ctx, eps=1e-5, rtol=1e-4, atol=1e-7):
    g = gradients(doc, params, ctx)
    pairs = [(params.W, g.W), (params.U, g.U), (params.b, g.b), (params.c, g.c)]
    for sid, ga in g.alignments.items():
        pairs.append((params.alignments[sid], ga))
    for arr, analytic in pairs:
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = loss(doc, params, ctx)
            arr[idx] = old - eps
            down = loss(doc, params, ctx)
            arr[idx] = old
            fd = (up - down) / (2 * eps)
            a = analytic[idx]
            assert abs(a - fd) <= max(atol, rtol * max(abs(a), abs(fd))), \
                f"gradient mismatch at {idx}: analytic {a}, fd {fd}"


@pytest.mark.parametrize("mode", ["none", "lvt", "gvt", "mvt"])
def test_gradients_match_finite_differences(rng, mode):
    h, k, d = 3, 6, 5
    params = init_params(h, k, seed=9, init_scale=0.4)
    ctx = None
    if mode != "none":
        modes = {"lvt": ("lvt",), "gvt": ("gvt",), "mvt": ("lvt", "gvt")}[mode]
        ctx = make_ctx(rng, h, k, modes=modes)
        ensure_alignments(params, ctx)
        for a in params.alignments.values():
            a += rng.normal(scale=0.2, size=a.shape)
    _fd_check(random_doc(rng, k, d), params, ctx)


# ----------------------------------------------------------------- document vectors

def test_document_vector_constant_at_zero_params():
    p = zero_params(3, 4)
    vec = document_vector(Document(np.array([1, 2])), p)
    np.testing.assert_array_equal(vec, np.full(3, 0.5))


def test_document_vector_single_word_definition(rng):
    h, k = 3, 5
    p = init_params(h, k, seed=3, init_scale=0.5)
    ctx = make_ctx(rng, h, k, modes=("lvt",), lam=0.9)
    vec = document_vector(Document(np.array([2])), p, ctx)
    pre = p.c + p.W[:, 2] + 0.9 * ctx.projected["s0"].embeddings[:, 2]
    np.testing.assert_allclose(vec, 1.0 / (1.0 + np.exp(-pre)), atol=1e-15)


def test_document_vector_permutation_invariant(rng):
    p = init_params(4, 8, seed=4, init_scale=0.7)
    words = rng.integers(0, 8, size=12).astype(np.int64)
    base = document_vector(Document(words), p)
    for _ in range(5):
        perm = rng.permutation(words.size)
        np.testing.assert_array_equal(base, document_vector(Document(words[perm]), p))


# ----------------------------------------------------------------- training

def _tiny_corpus(rng, k=6, n=8, dmax=7):
    vocab = make_vocab(k)
    docs = [random_doc(rng, k, int(rng.integers(1, dmax))) for _ in range(n)]
    return Corpus(vocab, docs)


def test_train_rejects_zero_epochs():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_zero_learning_rate_is_identity(rng):
    corpus = _tiny_corpus(rng)
    cfg = TrainConfig(learning_rate=0.0, epochs=1, seed=7, n_topics=3)
    params, _ = train(corpus, cfg)
    fresh = init_params(3, 6, seed=7)
    assert np.array_equal(params.W, fresh.W)
    assert np.array_equal(params.U, fresh.U)
    assert np.array_equal(params.b, fresh.b)
    assert np.array_equal(params.c, fresh.c)


def test_training_reduces_loss(rng):
    corpus = _tiny_corpus(rng, k=10, n=20)
    cfg = TrainConfig(learning_rate=0.05, epochs=30, seed=1, n_topics=3)
    _, stats = train(corpus, cfg)
    assert stats[-1].train_loss < stats[0].train_loss


def test_training_is_deterministic(rng):
    corpus = _tiny_corpus(rng)
    cfg = TrainConfig(learning_rate=0.02, epochs=5, seed=42, n_topics=2)
    a, _ = train(corpus, cfg)
    b, _ = train(corpus, cfg)
    for x, y in ((a.W, b.W), (a.U, b.U), (a.b, b.b), (a.c, b.c)):
        assert np.array_equal(x, y)


def test_early_stopping_returns_best_epoch(rng):
    corpus = _tiny_corpus(rng, k=8, n=12)
    validation = _tiny_corpus(rng, k=8, n=6)
    cfg = TrainConfig(learning_rate=0.3, epochs=40, seed=3, n_topics=3,
                      validation_patience=3)
    params, stats = train(corpus, cfg, validation=validation)
    best = min(s.validation_ppl for s in stats)
    from topicxfer.evaluate import perplexity
    assert perplexity(params, validation) == pytest.approx(best, rel=1e-12)


def test_momentum_zero_matches_plain_sgd(rng):
    corpus = _tiny_corpus(rng)
    a, _ = train(corpus, TrainConfig(learning_rate=0.05, epochs=3, seed=5, n_topics=2))
    b, _ = train(corpus, TrainConfig(learning_rate=0.05, epochs=3, seed=5, n_topics=2,
                                     momentum=0.0))
    assert np.array_equal(a.W, b.W)


def test_train_with_momentum_runs(rng):
    corpus = _tiny_corpus(rng, k=8, n=10)
    cfg = TrainConfig(learning_rate=0.05, epochs=10, seed=2, n_topics=3, momentum=0.5)
    _, stats = train(corpus, cfg)
    assert stats[-1].train_loss < stats[0].train_loss


# ----------------------------------------------------------------- persistence

def test_model_bundle_roundtrip(tmp_path, rng):
    vocab = make_vocab(5)
    params = init_params(3, 5, seed=8, init_scale=0.3)
    params.alignments["src"] = rng.normal(size=(3, 3))
    params.trained_epochs = 17
    save_model(params, vocab, tmp_path / "bundle", seed=8)
    loaded, vocab2, meta, lvt = load_model(tmp_path / "bundle")
    assert vocab2 == vocab
    assert lvt is None
    assert meta["activation"] == "sigmoid"
    assert loaded.trained_epochs == 17
    np.testing.assert_array_equal(loaded.W, params.W)
    np.testing.assert_array_equal(loaded.U, params.U)
    np.testing.assert_array_equal(loaded.b, params.b)
    np.testing.assert_array_equal(loaded.c, params.c)
    np.testing.assert_array_equal(loaded.alignments["src"], params.alignments["src"])


def test_loss_is_nonnegative(rng):
    ctx = make_ctx(rng, 3, 5, modes=("gvt",), gamma=0.7)
    p = init_params(3, 5, seed=12, init_scale=0.8)
    ensure_alignments(p, ctx)
    for _ in range(10):
        doc = random_doc(rng, 5, int(rng.integers(1, 8)))
        assert loss(doc, p, ctx) >= 0.0
        assert loss(doc, p) >= 0.0
