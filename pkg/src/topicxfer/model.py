"""The autoregressive topic model: parameters, forward pass, loss, gradients, training.

A document v = (v_1 .. v_D) is modeled as prod_i p(v_i | v_<i).  The hidden
state at step i is h_i = g(c + sum_{q<i} W[:, v_q]) and each conditional is a
K-way softmax of b + U h_i.  The running pre-activation makes one pass linear
in D instead of quadratic.  Transfer hooks: a context can add per-word source
embedding columns to the pre-activation (local view) and a squared alignment
penalty on W toward source topic rows (global view).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, CorpusError, NumericalError
from .fileio import read_kv, read_matrix, read_vector, write_kv, write_matrix

ACTIVATIONS = ("sigmoid", "tanh")


def _act_code(activation):
    if activation == "sigmoid":
        return kernels.ACT_SIGMOID
    if activation == "tanh":
        return kernels.ACT_TANH
    raise ConfigError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")


@dataclass
class TrainConfig:
    """Hyperparameters for SGD training."""

    learning_rate: float = 0.001
    epochs: int = 50
    seed: int = 0
    n_topics: int = 200
    activation: str = "sigmoid"
    shuffle_words: bool = True
    shuffle_docs: bool = True
    init_scale: float = 0.01
    validation_patience: int = 10
    momentum: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.n_topics < 1:
            raise ConfigError("n_topics must be >= 1")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be >= 0")
        if self.validation_patience < 1:
            raise ConfigError("validation_patience must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        _act_code(self.activation)


@dataclass
class ModelParams:
    """Model parameter set: W (H x K), U (K x H), b (K,), c (H,), alignments A^k."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    c: np.ndarray
    activation: str = "sigmoid"
    alignments: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        h, k = self.W.shape
        if self.U.shape != (k, h) or self.b.shape != (k,) or self.c.shape != (h,):
            raise ConfigError(
                f"inconsistent parameter shapes: W {self.W.shape}, U {self.U.shape}, "
                f"b {self.b.shape}, c {self.c.shape}"
            )
        for arr in (self.W, self.U, self.b, self.c, *self.alignments.values()):
            if not np.isfinite(arr).all():
                raise NumericalError("non-finite model parameter")
        _act_code(self.activation)

    @property
    def n_topics(self):
        return self.W.shape[0]

    @property
    def vocab_size(self):
        return self.W.shape[1]

    def copy(self):
        return ModelParams(
            self.W.copy(), self.U.copy(), self.b.copy(), self.c.copy(),
            activation=self.activation,
            alignments={k: v.copy() for k, v in self.alignments.items()},
        )


@dataclass
class ForwardTrace:
    """Per-position hidden states and log-probabilities for one document."""

    log_probs: np.ndarray     # (D,), each <= 0
    hidden: np.ndarray        # (D, H)
    pre_activation: np.ndarray  # (H,), after the full document


@dataclass
class Gradients:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    c: np.ndarray
    alignments: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    validation_ppl: float | None = None
    gvt_residuals: dict[str, float] = field(default_factory=dict)


def _init_from_rng(rng, n_topics, vocab_size, init_scale, activation):
    W = rng.uniform(-init_scale, init_scale, size=(n_topics, vocab_size))
    U = rng.uniform(-init_scale, init_scale, size=(vocab_size, n_topics))
    return ModelParams(W, U, np.zeros(vocab_size), np.zeros(n_topics),
                       activation=activation)


def init_params(n_topics, vocab_size, seed, init_scale=0.01, activation="sigmoid"):
    """Seeded uniform [-init_scale, init_scale] weights, zero biases."""
    if n_topics < 1 or vocab_size < 1:
        raise ConfigError("n_topics and vocab_size must be >= 1")
    rng = np.random.default_rng(seed)
    return _init_from_rng(rng, n_topics, vocab_size, init_scale, activation)


def _kernel_args(words, params, ctx):
    words = np.ascontiguousarray(words, dtype=np.int64)
    if words.size == 0:
        raise CorpusError("cannot run the model on an empty document")
    if words.min() < 0 or words.max() >= params.vocab_size:
        raise CorpusError("word index out of range for this model")
    use_lvt = ctx is not None and ctx.lvt_enabled
    lvt = ctx.lvt_matrix if use_lvt else kernels.EMPTY_LVT
    return words, lvt, use_lvt, _act_code(params.activation)


def forward(doc, params, ctx=None):
    """Autoregressive forward pass over one document (incremental pre-activation)."""
    words, lvt, use_lvt, act = _kernel_args(_doc_words(doc), params, ctx)
    logps, hidden, final = kernels.doc_forward(
        words, params.W, params.U, params.b, params.c, lvt, use_lvt, act)
    if not np.isfinite(logps).all():
        pos = int(np.flatnonzero(~np.isfinite(logps))[0])
        raise NumericalError(f"non-finite log-probability at position {pos}")
    return ForwardTrace(logps, hidden, final)


def _doc_words(doc):
    return doc.words if hasattr(doc, "words") else np.asarray(doc, dtype=np.int64)


def log_likelihood(doc, params, ctx=None):
    """log p(v) for one document."""
    return float(forward(doc, params, ctx).log_probs.sum())


def loss(doc, params, ctx=None):
    """Negative log-likelihood, plus the alignment penalty when global transfer is on."""
    value = -log_likelihood(doc, params, ctx)
    if ctx is not None and ctx.gvt_enabled:
        from .transfer import gvt_penalty

        value += gvt_penalty(params.W, ctx, alignments=params.alignments)
    return value


def gradients(doc, params, ctx=None):
    """Exact gradients of loss() with respect to W, U, b, c and each alignment A^k."""
    words, lvt, use_lvt, act = _kernel_args(_doc_words(doc), params, ctx)
    logps, dw_cols, dU, db, dc = kernels.doc_grads(
        words, params.W, params.U, params.b, params.c, lvt, use_lvt, act)
    if not np.isfinite(logps).all():
        pos = int(np.flatnonzero(~np.isfinite(logps))[0])
        raise NumericalError(f"non-finite log-probability at position {pos}")
    dW = np.zeros_like(params.W)
    np.add.at(dW.T, words, dw_cols)
    grads = Gradients(dW, dU, db, dc)
    if ctx is not None and ctx.gvt_enabled:
        from .transfer import gvt_gradients

        gW, gA = gvt_gradients(params.W, ctx, alignments=params.alignments)
        grads.W += gW
        grads.alignments = gA
    return grads


def document_vector(doc, params, ctx=None):
    """Hidden state after the whole document: g(c + sum of word columns + transfer terms).

    Word order does not matter; columns are summed in sorted-index order so the
    result is exactly permutation-invariant.
    """
    words, lvt, use_lvt, act = _kernel_args(_doc_words(doc), params, ctx)
    ordered = np.sort(words)
    cols = params.W[:, ordered]
    if use_lvt:
        cols = cols + lvt[:, ordered]
    pre = params.c + cols.sum(axis=1)
    if act == kernels.ACT_TANH:
        return np.tanh(pre)
    return 1.0 / (1.0 + np.exp(-pre))


def _corpus_ppl(corpus, params, ctx):
    from .evaluate import perplexity

    return perplexity(params, corpus, ctx)


def ensure_alignments(params, ctx):
    """Give params an identity alignment for every global-transfer source it lacks."""
    if ctx is None or not ctx.gvt_enabled:
        return
    for source_id in ctx.gvt_source_ids():
        if source_id not in params.alignments:
            params.alignments[source_id] = np.eye(params.n_topics)


def train(corpus, config, ctx=None, validation=None, callback=None):
    """Per-document SGD over the corpus.

    Returns (params, stats) where stats is the per-epoch metrics log.  With a
    validation corpus, returns the parameters of the best validation-perplexity
    epoch and stops early after validation_patience non-improving epochs.
    """
    if len(corpus) == 0:
        raise CorpusError("cannot train on an empty corpus")
    if ctx is not None and ctx.target_vocab_size != len(corpus.vocabulary):
        raise ConfigError("transfer context was projected to a different vocabulary")
    rng = np.random.default_rng(config.seed)
    params = _init_from_rng(rng, config.n_topics, len(corpus.vocabulary),
                            config.init_scale, config.activation)
    ensure_alignments(params, ctx)

    lvt_on = ctx is not None and ctx.lvt_enabled
    gvt_on = ctx is not None and ctx.gvt_enabled
    lvt = ctx.lvt_matrix if lvt_on else kernels.EMPTY_LVT
    act = _act_code(config.activation)
    lr = config.learning_rate
    use_momentum = config.momentum > 0.0
    if use_momentum:
        vel = Gradients(np.zeros_like(params.W), np.zeros_like(params.U),
                        np.zeros_like(params.b), np.zeros_like(params.c),
                        {k: np.zeros_like(a) for k, a in params.alignments.items()})

    stats = []
    best_params = None
    best_ppl = np.inf
    best_epoch = -1
    epochs_run = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus)) if config.shuffle_docs else np.arange(len(corpus))
        total_loss = 0.0
        for di in order:
            words = corpus.documents[di].words
            if config.shuffle_words:
                words = words[rng.permutation(words.size)]
            words = np.ascontiguousarray(words, dtype=np.int64)
            logps, dw_cols, dU, db, dc = kernels.doc_grads(
                words, params.W, params.U, params.b, params.c, lvt, lvt_on, act)
            doc_loss = -logps.sum()
            gvt_grads = None
            if gvt_on:
                from .transfer import gvt_gradients, gvt_penalty

                doc_loss += gvt_penalty(params.W, ctx, alignments=params.alignments)
                gvt_grads = gvt_gradients(params.W, ctx, alignments=params.alignments)
            if not np.isfinite(doc_loss):
                raise NumericalError(
                    f"training diverged: non-finite loss at epoch {epoch}, document {di}")
            total_loss += doc_loss

            if use_momentum:
                dW = np.zeros_like(params.W)
                np.add.at(dW.T, words, dw_cols)
                if gvt_grads is not None:
                    dW += gvt_grads[0]
                vel.W *= config.momentum
                vel.W += dW
                vel.U *= config.momentum
                vel.U += dU
                vel.b *= config.momentum
                vel.b += db
                vel.c *= config.momentum
                vel.c += dc
                params.W -= lr * vel.W
                params.U -= lr * vel.U
                params.b -= lr * vel.b
                params.c -= lr * vel.c
                if gvt_grads is not None:
                    for sid, dA in gvt_grads[1].items():
                        vel.alignments[sid] *= config.momentum
                        vel.alignments[sid] += dA
                        params.alignments[sid] -= lr * vel.alignments[sid]
            else:
                for q in range(words.size):
                    params.W[:, words[q]] -= lr * dw_cols[q]
                params.U -= lr * dU
                params.b -= lr * db
                params.c -= lr * dc
                if gvt_grads is not None:
                    params.W -= lr * gvt_grads[0]
                    for sid, dA in gvt_grads[1].items():
                        params.alignments[sid] -= lr * dA

        entry = EpochStats(epoch, total_loss / len(corpus))
        if gvt_on:
            from .transfer import gvt_residual_norms

            entry.gvt_residuals = gvt_residual_norms(params.W, ctx, params.alignments)
        if validation is not None:
            entry.validation_ppl = _corpus_ppl(validation, params, ctx)
        stats.append(entry)
        if callback is not None:
            callback(entry)
        epochs_run = epoch + 1
        if validation is not None:
            if entry.validation_ppl < best_ppl:
                best_ppl = entry.validation_ppl
                best_params = params.copy()
                best_epoch = epoch
            elif epoch - best_epoch >= config.validation_patience:
                break

    final = best_params if best_params is not None else params
    final.trained_epochs = epochs_run
    return final, stats


# ---------------------------------------------------------------------------
# model bundle persistence
# ---------------------------------------------------------------------------

def save_model(params, vocabulary, out_dir, seed=0, lvt_matrix=None):
    """Persist a model bundle: meta.txt, vocab.txt, W/U/b/c matrices, alignments."""
    os.makedirs(out_dir, exist_ok=True)
    meta = [
        ("H", params.n_topics),
        ("K", params.vocab_size),
        ("activation", params.activation),
        ("seed", seed),
        ("trained_epochs", getattr(params, "trained_epochs", 0)),
        ("has_lvt", int(lvt_matrix is not None)),
    ]
    write_kv(os.path.join(out_dir, "meta.txt"), meta)
    vocabulary.save(os.path.join(out_dir, "vocab.txt"))
    write_matrix(os.path.join(out_dir, "W.mat"), params.W)
    write_matrix(os.path.join(out_dir, "U.mat"), params.U)
    write_matrix(os.path.join(out_dir, "b.mat"), params.b)
    write_matrix(os.path.join(out_dir, "c.mat"), params.c)
    for source_id, A in params.alignments.items():
        write_matrix(os.path.join(out_dir, f"A.{source_id}.mat"), A)
    if lvt_matrix is not None:
        write_matrix(os.path.join(out_dir, "lvt.mat"), lvt_matrix)


def load_model(bundle_dir):
    """Load a model bundle.  Returns (params, vocabulary, meta, lvt_matrix or None)."""
    from .corpus import Vocabulary

    meta = read_kv(os.path.join(bundle_dir, "meta.txt"))
    vocabulary = Vocabulary.load(os.path.join(bundle_dir, "vocab.txt"))
    W = read_matrix(os.path.join(bundle_dir, "W.mat"))
    U = read_matrix(os.path.join(bundle_dir, "U.mat"))
    b = read_vector(os.path.join(bundle_dir, "b.mat"))
    c = read_vector(os.path.join(bundle_dir, "c.mat"))
    alignments = {}
    for name in sorted(os.listdir(bundle_dir)):
        if name.startswith("A.") and name.endswith(".mat"):
            alignments[name[2:-4]] = read_matrix(os.path.join(bundle_dir, name))
    params = ModelParams(W, U, b, c, activation=meta.get("activation", "sigmoid"),
                         alignments=alignments)
    params.trained_epochs = int(meta.get("trained_epochs", 0))
    lvt = None
    if int(meta.get("has_lvt", 0)):
        lvt = read_matrix(os.path.join(bundle_dir, "lvt.mat"))
    if len(vocabulary) != params.vocab_size:
        raise ConfigError(f"{bundle_dir}: vocabulary size does not match W")
    return params, vocabulary, meta, lvt
