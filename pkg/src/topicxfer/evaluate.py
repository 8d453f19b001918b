"""Model quality metrics: held-out perplexity, sliding-window topic coherence,
retrieval precision at recall fractions, and topic / nearest-neighbor inspection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CorpusError
from .fileio import format_float
from .model import document_vector, forward

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2)
DEFAULT_WINDOW = 110
DEFAULT_TOP_N = 10


@dataclass
class EvalReport:
    """One configuration's scores: perplexity, coherence, precision per fraction."""

    ppl: float
    coh: float
    ir: list[tuple[float, float]] = field(default_factory=list)
    fingerprint: str = ""

    def __post_init__(self):
        fractions = [f for f, _ in self.ir]
        if any(f2 <= f1 for f1, f2 in zip(fractions, fractions[1:])):
            raise ValueError("retrieval fractions must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for _, p in self.ir):
            raise ValueError("retrieval precision must lie in [0, 1]")

    def to_text(self):
        lines = [
            f"ppl={format_float(self.ppl)}",
            f"coh={format_float(self.coh)}",
            f"fingerprint={self.fingerprint}",
        ]
        for frac, prec in self.ir:
            lines.append(f"ir {format_float(frac)} {format_float(prec)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        ppl = coh = None
        fingerprint = ""
        ir = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("ir "):
                _, frac, prec = line.split()
                ir.append((float(frac), float(prec)))
            elif "=" in line:
                key, value = line.split("=", 1)
                if key == "ppl":
                    ppl = float(value)
                elif key == "coh":
                    coh = float(value)
                elif key == "fingerprint":
                    fingerprint = value
        if ppl is None or coh is None:
            raise CorpusError("malformed evaluation report")
        return cls(ppl, coh, ir, fingerprint)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def perplexity(params, corpus, ctx=None):
    """Average held-out perplexity per word: exp(-mean_t log p(v_t) / |v_t|)."""
    if len(corpus) == 0:
        raise CorpusError("cannot evaluate perplexity on an empty corpus")
    per_doc = np.empty(len(corpus))
    for t, doc in enumerate(corpus):
        per_doc[t] = forward(doc, params, ctx).log_probs.sum() / len(doc)
    return float(np.exp(-per_doc.mean()))


def top_words(params, vocabulary, topic_index, n):
    """The n heaviest words of one topic row, descending weight, ties by word index."""
    if not 0 <= topic_index < params.n_topics:
        raise ValueError(f"topic index {topic_index} out of range")
    if not 1 <= n <= params.vocab_size:
        raise ValueError(f"n must be in [1, {params.vocab_size}]")
    row = params.W[topic_index]
    order = np.lexsort((np.arange(row.size), -row))
    return [vocabulary.token(i) for i in order[:n]]


def all_topics(params, vocabulary, n):
    """Top-n word lists for every topic."""
    return [top_words(params, vocabulary, j, n) for j in range(params.n_topics)]


def nearest_neighbors(params, vocabulary, word, n):
    """The n words whose W columns are most cosine-similar to the query word's column."""
    if word not in vocabulary:
        raise CorpusError(f"word not in vocabulary: {word!r}")
    k = params.vocab_size
    if not 1 <= n <= k - 1:
        raise ValueError(f"n must be in [1, {k - 1}]")
    w = vocabulary.index(word)
    cols = params.W
    norms = np.linalg.norm(cols, axis=0)
    sims = np.full(k, -1.0)
    if norms[w] > 0:
        valid = norms > 0
        sims[valid] = (cols[:, valid].T @ cols[:, w]) / (norms[valid] * norms[w])
    order = np.lexsort((np.arange(k), -sims))
    order = order[order != w]
    return [vocabulary.token(i) for i in order[:n]]


def coherence(topics, reference, window=DEFAULT_WINDOW, top_n=DEFAULT_TOP_N):
    """Mean pairwise NPMI of each topic's top words over sliding reference windows.

    Word and pair probabilities are window-containment counts divided by the
    total window count; windows run at stride 1 within each reference document
    (a document shorter than the window is a single window).  Pairs with zero
    joint count score -1, as do pairs involving a word absent from the
    reference vocabulary.
    """
    if top_n < 2:
        raise ValueError("top_n must be >= 2")
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(reference) == 0:
        raise CorpusError("coherence needs a non-empty reference corpus")
    clipped = []
    for topic in topics:
        words = list(topic[:top_n])
        if len(words) < 2:
            raise ValueError("every topic must supply at least 2 words")
        clipped.append(words)

    vocab = reference.vocabulary
    tracked = sorted({w for topic in clipped for w in topic if w in vocab})
    missing = sorted({w for topic in clipped for w in topic if w not in vocab})
    if missing:
        log.info("coherence: %d topic words absent from the reference vocabulary: %s",
                 len(missing), ", ".join(missing[:10]))
    tracked_id = {w: i for i, w in enumerate(tracked)}
    m = len(tracked)
    singles = np.zeros(m, dtype=np.int64)
    joints = np.zeros((m, m), dtype=np.int64)
    total_windows = 0
    if m > 0:
        vocab_to_tracked = np.full(len(vocab), -1, dtype=np.int64)
        for w, i in tracked_id.items():
            vocab_to_tracked[vocab.index(w)] = i
        for doc in reference:
            mapped = vocab_to_tracked[doc.words]
            s, j, nw = kernels.window_counts(mapped, m, window)
            singles += s
            joints += j
            total_windows += nw

    def pair_npmi(w1, w2):
        if w1 not in tracked_id or w2 not in tracked_id:
            return -1.0
        i1, i2 = tracked_id[w1], tracked_id[w2]
        joint = joints[i1, i2]
        if joint == 0:
            return -1.0
        p12 = joint / total_windows
        if p12 >= 1.0:
            return 1.0
        p1 = singles[i1] / total_windows
        p2 = singles[i2] / total_windows
        return math.log(p12 / (p1 * p2)) / (-math.log(p12))

    topic_scores = []
    for words in clipped:
        pair_scores = [pair_npmi(words[x], words[y])
                       for x in range(len(words)) for y in range(x + 1, len(words))]
        topic_scores.append(sum(pair_scores) / len(pair_scores))
    return sum(topic_scores) / len(topic_scores)


def retrieval_precision(train, queries, vector_fn, fractions=DEFAULT_FRACTIONS):
    """Label-match precision of cosine retrieval from the training set.

    Every query ranks all training documents by descending cosine similarity
    of their vectors (ties by ascending training index; zero-norm vectors get
    similarity -1).  At fraction f the top ceil(f * |train|) are retrieved and
    scored by the share carrying the query's label; the mean over queries is
    reported per fraction.
    """
    if not train.labeled or not queries.labeled:
        raise CorpusError("retrieval evaluation needs labeled corpora")
    fractions = sorted(set(fractions))
    if not fractions or fractions[0] <= 0 or fractions[-1] > 1:
        raise ValueError("fractions must lie in (0, 1]")
    train_vecs = np.stack([vector_fn(doc) for doc in train.documents])
    query_vecs = np.stack([vector_fn(doc) for doc in queries.documents])
    train_labels = [train.label_of(doc) for doc in train.documents]
    query_labels = [queries.label_of(doc) for doc in queries.documents]

    t_norm = np.linalg.norm(train_vecs, axis=1)
    q_norm = np.linalg.norm(query_vecs, axis=1)
    sims = np.full((len(queries), len(train)), -1.0)
    tv = np.where(t_norm[:, None] > 0, train_vecs / np.maximum(t_norm, 1e-300)[:, None], 0.0)
    qv = np.where(q_norm[:, None] > 0, query_vecs / np.maximum(q_norm, 1e-300)[:, None], 0.0)
    good = (q_norm > 0)[:, None] & (t_norm > 0)[None, :]
    sims[good] = (qv @ tv.T)[good]

    n_train = len(train)
    counts = [math.ceil(f * n_train) for f in fractions]
    sums = np.zeros(len(fractions))
    idx = np.arange(n_train)
    for qi in range(len(queries)):
        order = np.lexsort((idx, -sims[qi]))
        matches = np.array([train_labels[t] == query_labels[qi] for t in order])
        hit_prefix = np.cumsum(matches)
        for fi, cnt in enumerate(counts):
            sums[fi] += hit_prefix[cnt - 1] / cnt
    return [(f, float(sums[fi] / len(queries))) for fi, f in enumerate(fractions)]


def model_vector_fn(params, ctx=None):
    """Document-vector provider over a fixed parameter set."""
    return lambda doc: document_vector(doc, params, ctx)
