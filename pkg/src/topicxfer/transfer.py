"""Knowledge bases and the transfer mechanisms.

A knowledge base exports a trained source model's topic-word matrix twice:
columns as word embeddings E (one per source word) and rows as topic vectors
Z.  Local-view transfer adds lambda-weighted projected E columns to the
model's pre-activation at every autoregressive step; global-view transfer
adds gamma * ||A^k W - Z^k||_F^2 per source to the loss, with a learned H x H
alignment A^k.  Both views together is multi-view transfer; more than one
source is multi-source transfer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import ConfigError, CorpusError
from .fileio import read_kv, read_matrix, write_kv, write_matrix


@dataclass
class KnowledgeBase:
    """One source's exported representations: embeddings E (E_dim x K_s), topics Z (H_s x K_s)."""

    source_id: str
    vocabulary: Vocabulary
    embeddings: np.ndarray
    topics: np.ndarray | None = None

    def __post_init__(self):
        k = len(self.vocabulary)
        if self.embeddings.ndim != 2 or self.embeddings.shape[1] != k:
            raise ConfigError(
                f"KB {self.source_id!r}: embeddings must have one column per word "
                f"(got {self.embeddings.shape}, vocabulary {k})")
        if self.topics is not None and (self.topics.ndim != 2 or self.topics.shape[1] != k):
            raise ConfigError(
                f"KB {self.source_id!r}: topics must have one column per word "
                f"(got {self.topics.shape}, vocabulary {k})")
        arrays = [self.embeddings] + ([self.topics] if self.topics is not None else [])
        for arr in arrays:
            if not np.isfinite(arr).all():
                raise ConfigError(f"KB {self.source_id!r}: non-finite entries")

    @property
    def embedding_dim(self):
        return self.embeddings.shape[0]

    @property
    def n_topics(self):
        return None if self.topics is None else self.topics.shape[0]


@dataclass
class ProjectedKB:
    """A knowledge base re-indexed against a target vocabulary.

    Columns of target words absent from the source are exactly zero; covered
    marks the matched words.
    """

    source_id: str
    embeddings: np.ndarray            # E_dim x K_t
    topics: np.ndarray | None         # H_s x K_t
    covered: np.ndarray               # bool (K_t,)
    coverage: float


@dataclass
class SourceWeight:
    source_id: str
    lam: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise ConfigError(f"source {self.source_id!r}: lambda and gamma must be >= 0")


@dataclass
class TransferSpec:
    """Per-source transfer weights plus which views are active."""

    sources: list[SourceWeight]
    lvt_enabled: bool = False
    gvt_enabled: bool = False
    gvt_mask_oov: bool = False

    def __post_init__(self):
        ids = [s.source_id for s in self.sources]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate source ids in transfer spec")
        if self.lvt_enabled and not any(s.lam > 0 for s in self.sources):
            raise ConfigError("local-view transfer enabled but every lambda is zero")
        if self.gvt_enabled and not any(s.gamma > 0 for s in self.sources):
            raise ConfigError("global-view transfer enabled but every gamma is zero")

    @classmethod
    def for_mode(cls, mode, weights, gvt_mask_oov=False):
        """Build a spec for a mode name, disabling views whose weights are all zero."""
        sources = [SourceWeight(sid, lam, gamma) for sid, lam, gamma in weights]
        lvt = mode in ("lvt", "mvt") and any(s.lam > 0 for s in sources)
        gvt = mode in ("gvt", "mvt") and any(s.gamma > 0 for s in sources)
        return cls(sources, lvt_enabled=lvt, gvt_enabled=gvt, gvt_mask_oov=gvt_mask_oov)

    @property
    def active(self):
        return self.lvt_enabled or self.gvt_enabled


class TransferContext:
    """Projected knowledge bases plus weights, ready to plug into training.

    Alignment matrices are owned by the model parameters during training; this
    context only provides their identity initialization.
    """

    def __init__(self, spec, projected, n_topics, target_vocab_size):
        self.spec = spec
        self.projected = projected          # dict source_id -> ProjectedKB
        self.n_topics = n_topics
        self.target_vocab_size = target_vocab_size
        self.lvt_matrix = None
        if spec.lvt_enabled:
            combined = np.zeros((n_topics, target_vocab_size))
            for sw in spec.sources:
                if sw.lam > 0:
                    combined += sw.lam * projected[sw.source_id].embeddings
            self.lvt_matrix = combined

    @property
    def lvt_enabled(self):
        return self.spec.lvt_enabled

    @property
    def gvt_enabled(self):
        return self.spec.gvt_enabled

    @property
    def coverage(self):
        return {sid: pkb.coverage for sid, pkb in self.projected.items()}

    def gvt_source_ids(self):
        """Sources that take part in the alignment penalty."""
        if not self.spec.gvt_enabled:
            return []
        return [sw.source_id for sw in self.spec.sources
                if self.projected[sw.source_id].topics is not None]

    def gvt_terms(self, alignments=None):
        """Yield (source_id, gamma, Z', covered, A) for each penalty source."""
        for sw in self.spec.sources:
            pkb = self.projected[sw.source_id]
            if pkb.topics is None:
                continue
            if alignments is not None and sw.source_id in alignments:
                A = alignments[sw.source_id]
            else:
                A = np.eye(self.n_topics)
            yield sw.source_id, sw.gamma, pkb.topics, pkb.covered, A

    def initial_alignments(self):
        return {sid: np.eye(self.n_topics) for sid in self.gvt_source_ids()}


class InferenceContext:
    """Inference-time stand-in rebuilt from a model bundle's saved transfer matrix.

    Carries only the combined local-view embedding matrix; the alignment
    penalty plays no role outside training.
    """

    def __init__(self, lvt_matrix):
        self.lvt_matrix = lvt_matrix
        self.lvt_enabled = lvt_matrix is not None
        self.gvt_enabled = False
        self.target_vocab_size = None if lvt_matrix is None else lvt_matrix.shape[1]


def build_kb(params, vocabulary, source_id):
    """Export a trained model as a knowledge base: E and Z are both copies of W."""
    if params.vocab_size != len(vocabulary):
        raise ConfigError(
            f"model vocabulary size {params.vocab_size} does not match "
            f"the given vocabulary ({len(vocabulary)})")
    return KnowledgeBase(source_id, vocabulary, params.W.copy(), params.W.copy())


def project_kb(kb, target_vocab):
    """Re-index a knowledge base against a target vocabulary (zero columns for misses)."""
    k_t = len(target_vocab)
    emb = np.zeros((kb.embedding_dim, k_t))
    top = None if kb.topics is None else np.zeros((kb.topics.shape[0], k_t))
    covered = np.zeros(k_t, dtype=bool)
    for w, token in enumerate(target_vocab):
        if token in kb.vocabulary:
            src = kb.vocabulary.index(token)
            emb[:, w] = kb.embeddings[:, src]
            if top is not None:
                top[:, w] = kb.topics[:, src]
            covered[w] = True
    return ProjectedKB(kb.source_id, emb, top, covered, covered.sum() / k_t)


def make_transfer_context(kbs, target_vocab, spec, n_topics):
    """Project every referenced KB and validate the dimension contract.

    Local view requires each weighted source's embedding dimension to equal the
    model's topic count; global view requires each weighted source's topic
    count to equal it (so alignments are square).
    """
    by_id = {}
    for kb in kbs:
        if kb.source_id in by_id:
            raise ConfigError(f"duplicate knowledge base id {kb.source_id!r}")
        by_id[kb.source_id] = kb
    projected = {}
    for sw in spec.sources:
        if sw.source_id not in by_id:
            raise ConfigError(f"transfer spec references unknown source {sw.source_id!r}")
        kb = by_id[sw.source_id]
        if spec.lvt_enabled and sw.lam > 0 and kb.embedding_dim != n_topics:
            raise ConfigError(
                f"source {sw.source_id!r}: embedding dimension {kb.embedding_dim} "
                f"must equal the model's topic count {n_topics} for local-view transfer")
        if spec.gvt_enabled and sw.gamma > 0:
            if kb.topics is None:
                raise ConfigError(
                    f"source {sw.source_id!r} has no topic matrix; "
                    "embedding-only sources support local-view transfer only")
            if kb.n_topics != n_topics:
                raise ConfigError(
                    f"source {sw.source_id!r}: topic count {kb.n_topics} must equal "
                    f"the model's topic count {n_topics} for global-view transfer")
        projected[sw.source_id] = project_kb(kb, target_vocab)
    return TransferContext(spec, projected, n_topics, len(target_vocab))


def lvt_term(word_index, ctx):
    """Combined source-embedding column added to the pre-activation for one word."""
    if not ctx.lvt_enabled:
        raise ConfigError("local-view transfer is not enabled in this context")
    return ctx.lvt_matrix[:, word_index].copy()


def _residuals(W, ctx, alignments):
    for source_id, gamma, Z, covered, A in ctx.gvt_terms(alignments):
        R = A @ W - Z
        if ctx.spec.gvt_mask_oov:
            R[:, ~covered] = 0.0
        yield source_id, gamma, R, A


def gvt_penalty(W, ctx, alignments=None):
    """sum_k gamma^k ||A^k W - Z'^k||_F^2 over the projected topic matrices."""
    if not ctx.gvt_enabled:
        raise ConfigError("global-view transfer is not enabled in this context")
    total = 0.0
    for _, gamma, R, _ in _residuals(W, ctx, alignments):
        total += gamma * float((R * R).sum())
    return total


def gvt_gradients(W, ctx, alignments=None):
    """Gradients of gvt_penalty: (d/dW, {source_id: d/dA^k})."""
    if not ctx.gvt_enabled:
        raise ConfigError("global-view transfer is not enabled in this context")
    dW = np.zeros_like(W)
    dA = {}
    for source_id, gamma, R, A in _residuals(W, ctx, alignments):
        dW += 2.0 * gamma * (A.T @ R)
        dA[source_id] = 2.0 * gamma * (R @ W.T)
    return dW, dA


def gvt_residual_norms(W, ctx, alignments=None):
    """Frobenius norm of A^k W - Z'^k per source (for the training log)."""
    return {sid: float(np.linalg.norm(R)) for sid, _, R, _ in _residuals(W, ctx, alignments)}


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_kb(kb, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_kv(os.path.join(out_dir, "meta.txt"), [
        ("source_id", kb.source_id),
        ("E_dim", kb.embedding_dim),
        ("H_s", kb.n_topics if kb.topics is not None else 0),
        ("has_Z", int(kb.topics is not None)),
    ])
    kb.vocabulary.save(os.path.join(out_dir, "vocab.txt"))
    write_matrix(os.path.join(out_dir, "E.mat"), kb.embeddings)
    if kb.topics is not None:
        write_matrix(os.path.join(out_dir, "Z.mat"), kb.topics)


def load_kb(bundle_dir):
    meta = read_kv(os.path.join(bundle_dir, "meta.txt"))
    vocab = Vocabulary.load(os.path.join(bundle_dir, "vocab.txt"))
    E = read_matrix(os.path.join(bundle_dir, "E.mat"))
    Z = None
    if int(meta.get("has_Z", 0)):
        Z = read_matrix(os.path.join(bundle_dir, "Z.mat"))
    return KnowledgeBase(meta["source_id"], vocab, E, Z)


def load_embeddings_text(path, source_id):
    """Import external word vectors (one line per word: token v1 v2 ... vE).

    Produces an embedding-only knowledge base, usable for local-view transfer.
    """
    tokens = []
    rows = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise CorpusError(f"{path}: line {lineno}: expected 'token v1 v2 ...'")
            tok, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise CorpusError(
                    f"{path}: line {lineno}: expected {dim} values, got {len(values)}")
            tokens.append(tok)
            rows.append([float(v) for v in values])
    if not tokens:
        raise CorpusError(f"{path}: no embeddings found")
    vocab = Vocabulary(tokens)
    return KnowledgeBase(source_id, vocab, np.array(rows).T)
