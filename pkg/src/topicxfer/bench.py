"""Benchmark the numba-compiled kernels against the pure-numpy fallbacks."""

import time

import numpy as np

from . import kernels


def _make_instance(rng, n_topics, vocab_size, doc_len, n_docs):
    W = rng.uniform(-0.05, 0.05, size=(n_topics, vocab_size))
    U = rng.uniform(-0.05, 0.05, size=(vocab_size, n_topics))
    b = np.zeros(vocab_size)
    c = np.zeros(n_topics)
    docs = [rng.integers(0, vocab_size, size=doc_len).astype(np.int64)
            for _ in range(n_docs)]
    return W, U, b, c, docs


def run_benchmark(n_topics=50, vocab_size=2000, doc_len=80, n_docs=40,
                  repeats=3, window=20, seed=0):
    """Time doc_forward / doc_grads / window_counts on every available backend.

    Returns a dict with per-backend times (seconds for the full workload, best
    of `repeats`), the numpy/numba speedups, and cross-backend agreement.
    """
    rng = np.random.default_rng(seed)
    W, U, b, c, docs = _make_instance(rng, n_topics, vocab_size, doc_len, n_docs)
    lvt = kernels.EMPTY_LVT
    tracked = [np.where(rng.random(doc_len) < 0.3, d % 16, -1).astype(np.int64)
               for d in docs]

    results = {"backends": sorted(kernels.IMPLEMENTATIONS),
               "params": {"n_topics": n_topics, "vocab_size": vocab_size,
                          "doc_len": doc_len, "n_docs": n_docs}}
    outputs = {}
    for name, impl in kernels.IMPLEMENTATIONS.items():
        fw, gr, wc = impl["doc_forward"], impl["doc_grads"], impl["window_counts"]
        # warmup (includes JIT compilation for the numba backend)
        fw(docs[0], W, U, b, c, lvt, False, kernels.ACT_SIGMOID)
        gr(docs[0], W, U, b, c, lvt, False, kernels.ACT_SIGMOID)
        wc(tracked[0], 16, window)
        times = {}
        for label, fn, data in (("forward", fw, docs), ("grads", gr, docs)):
            best = np.inf
            for _ in range(repeats):
                start = time.perf_counter()
                for d in data:
                    fn(d, W, U, b, c, lvt, False, kernels.ACT_SIGMOID)
                best = min(best, time.perf_counter() - start)
            times[label] = best
        best = np.inf
        for _ in range(repeats):
            start = time.perf_counter()
            for d in tracked:
                wc(d, 16, window)
            best = min(best, time.perf_counter() - start)
        times["window_counts"] = best
        results[name] = times
        outputs[name] = gr(docs[0], W, U, b, c, lvt, False, kernels.ACT_SIGMOID)

    if "numba" in outputs:
        a, bk = outputs["numba"], outputs["numpy"]
        results["max_logp_diff"] = float(np.abs(a[0] - bk[0]).max())
        results["speedup"] = {
            label: results["numpy"][label] / results["numba"][label]
            for label in ("forward", "grads", "window_counts")
        }
    return results


def format_results(results):
    lines = [
        "kernel benchmark "
        f"(H={results['params']['n_topics']}, K={results['params']['vocab_size']}, "
        f"D={results['params']['doc_len']}, docs={results['params']['n_docs']})",
        f"active backend: {kernels.BACKEND}",
    ]
    header = f"{'kernel':<16}" + "".join(f"{b:>12}" for b in results["backends"])
    if "speedup" in results:
        header += f"{'speedup':>10}"
    lines.append(header)
    for label in ("forward", "grads", "window_counts"):
        row = f"{label:<16}"
        for backend in results["backends"]:
            row += f"{results[backend][label] * 1e3:>10.2f}ms"
        if "speedup" in results:
            row += f"{results['speedup'][label]:>9.1f}x"
        lines.append(row)
    if "max_logp_diff" in results:
        lines.append(f"max |logp| backend difference: {results['max_logp_diff']:.3e}")
    return "\n".join(lines)
