"""Backend equivalence and brute-force oracles for the hot kernels."""

import numpy as np
import pytest

from topicxfer import kernels


def _random_instance(rng, h, k, d, lvt=False):
    W = rng.normal(scale=0.6, size=(h, k))
    U = rng.normal(scale=0.6, size=(k, h))
    b = rng.normal(scale=0.3, size=k)
    c = rng.normal(scale=0.3, size=h)
    doc = rng.integers(0, k, size=d).astype(np.int64)
    mat = rng.normal(scale=0.4, size=(h, k)) if lvt else kernels.EMPTY_LVT
    return doc, W, U, b, c, mat


def _naive_logprobs(doc, W, U, b, c, lvt, use_lvt, act):
    """Oracle: recompute each hidden state from scratch (no running pre-activation)."""
    out = np.empty(doc.size)
    for i in range(doc.size):
        pre = c.copy()
        for q in range(i):
            pre = pre + W[:, doc[q]]
            if use_lvt:
                pre = pre + lvt[:, doc[q]]
        h = np.tanh(pre) if act == kernels.ACT_TANH else 1.0 / (1.0 + np.exp(-pre))
        logits = b + U @ h
        m = logits.max()
        out[i] = logits[doc[i]] - m - np.log(np.exp(logits - m).sum())
    return out


@pytest.mark.parametrize("act", [kernels.ACT_SIGMOID, kernels.ACT_TANH])
@pytest.mark.parametrize("use_lvt", [False, True])
def test_forward_matches_naive_recomputation(rng, act, use_lvt):
    for trial in range(20):
        h, k, d = rng.integers(1, 6), rng.integers(2, 9), rng.integers(1, 10)
        doc, W, U, b, c, lvt = _random_instance(rng, h, k, d, lvt=use_lvt)
        logps, hidden, final = kernels.doc_forward(doc, W, U, b, c, lvt, use_lvt, act)
        oracle = _naive_logprobs(doc, W, U, b, c, lvt, use_lvt, act)
        assert np.abs(logps - oracle).max() <= 1e-12
        assert hidden.shape == (d, h)
        assert (logps <= 0).all()


def test_backends_agree(rng):
    impls = kernels.IMPLEMENTATIONS
    if "numba" not in impls:
        pytest.skip("numba backend not available")
    for _ in range(10):
        h, k, d = rng.integers(1, 6), rng.integers(2, 9), rng.integers(1, 10)
        doc, W, U, b, c, lvt = _random_instance(rng, h, k, d, lvt=True)
        for act in (kernels.ACT_SIGMOID, kernels.ACT_TANH):
            ra = impls["numba"]["doc_grads"](doc, W, U, b, c, lvt, True, act)
            rb = impls["numpy"]["doc_grads"](doc, W, U, b, c, lvt, True, act)
            for a, b_ in zip(ra, rb):
                assert np.abs(a - b_).max() <= 1e-10


def test_conditionals_normalize(rng):
    # explicit summation of the per-position distribution on small K
    h, k, d = 3, 5, 4
    doc, W, U, b, c, _ = _random_instance(rng, h, k, d)
    _, hidden, _ = kernels.doc_forward(doc, W, U, b, c, kernels.EMPTY_LVT, False,
                                       kernels.ACT_SIGMOID)
    for i in range(d):
        logits = b + U @ hidden[i]
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        assert abs(probs.sum() - 1.0) <= 1e-12


def test_uniform_model_logprobs():
    doc = np.array([0], dtype=np.int64)
    W = np.random.default_rng(0).normal(size=(4, 2))
    c = np.random.default_rng(1).normal(size=4)
    logps, _, _ = kernels.doc_forward(doc, W, np.zeros((2, 4)), np.zeros(2), c,
                                      kernels.EMPTY_LVT, False, kernels.ACT_SIGMOID)
    assert logps[0] == pytest.approx(np.log(0.5), abs=1e-15)


def test_last_word_gets_no_column_gradient(rng):
    doc, W, U, b, c, _ = _random_instance(rng, 3, 6, 5)
    _, dw_cols, _, _, _ = kernels.doc_grads(doc, W, U, b, c, kernels.EMPTY_LVT,
                                            False, kernels.ACT_SIGMOID)
    assert np.all(dw_cols[-1] == 0.0)


def _brute_force_windows(doc, n_tracked, window):
    """Oracle: enumerate every window explicitly."""
    d = len(doc)
    width = min(window, d)
    starts = range(d - width + 1)
    singles = np.zeros(n_tracked, dtype=np.int64)
    joints = np.zeros((n_tracked, n_tracked), dtype=np.int64)
    for s in starts:
        seen = sorted({m for m in doc[s:s + width] if m >= 0})
        for x, ix in enumerate(seen):
            singles[ix] += 1
            for iy in seen[x + 1:]:
                joints[ix, iy] += 1
                joints[iy, ix] += 1
    return singles, joints, len(list(starts))


@pytest.mark.parametrize("window", [2, 3, 7, 40])
def test_window_counts_match_enumeration(rng, window):
    for _ in range(10):
        d = int(rng.integers(1, 30))
        doc = rng.integers(-1, 5, size=d).astype(np.int64)
        got = kernels.window_counts(doc, 5, window)
        want = _brute_force_windows(doc, 5, window)
        assert np.array_equal(got[0], want[0])
        assert np.array_equal(got[1], want[1])
        assert got[2] == want[2]
