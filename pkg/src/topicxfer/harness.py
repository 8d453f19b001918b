"""Experiment runner: end-to-end pipelines for source training, KB export,
transfer training with hyperparameter grids, zero-shot and data-augmentation
baselines, and report emission.

Experiment config files are line-oriented ``key = value`` with
``source.<id>.<key>`` namespacing (no nesting).
"""

from __future__ import annotations

import collections
import contextlib
import hashlib
import os
from dataclasses import dataclass, field

from . import corpus as corpuslib
from .errors import ConfigError, CorpusError, TopicxferError
from .evaluate import (DEFAULT_FRACTIONS, DEFAULT_TOP_N, DEFAULT_WINDOW,
                       EvalReport, all_topics, coherence, model_vector_fn,
                       perplexity, retrieval_precision)
from .fileio import format_float
from .model import TrainConfig, save_model, train
from .transfer import (TransferSpec, build_kb, load_kb, make_transfer_context,
                       save_kb)

MODES = ("baseline", "lvt", "gvt", "mvt", "zero-shot", "data-augment")
DEFAULT_LAMBDA_GRID = (0.1, 0.5, 1.0)
DEFAULT_GAMMA_GRID = (0.1, 0.01, 0.001)


@dataclass
class SourceConfig:
    source_id: str
    corpus_path: str | None = None
    kb_path: str | None = None
    lam_override: float | None = None
    gamma_override: float | None = None

    def __post_init__(self):
        if (self.corpus_path is None) == (self.kb_path is None):
            raise ConfigError(
                f"source {self.source_id!r}: give exactly one of a corpus path or a KB path")


@dataclass
class ExperimentConfig:
    mode: str
    target_train: str
    target_test: str
    out_dir: str
    target_validation: str | None = None
    labeled: bool = True
    sources: list[SourceConfig] = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    min_freq: int = 1
    max_vocab: int | None = None
    lambda_grid: list[float] = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    gamma_grid: list[float] = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    eval_fractions: list[float] = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    coherence_window: int = DEFAULT_WINDOW
    coherence_top_n: int = DEFAULT_TOP_N
    coherence_reference: str | None = None
    gvt_mask_oov: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.mode != "baseline" and not self.sources:
            raise ConfigError(f"mode {self.mode!r} requires at least one source")
        if self.mode in ("lvt", "mvt") and not self.lambda_grid:
            raise ConfigError("lambda_grid must be non-empty for this mode")
        if self.mode in ("gvt", "mvt") and not self.gamma_grid:
            raise ConfigError("gamma_grid must be non-empty for this mode")
        if self.mode in ("lvt", "gvt", "mvt") and self.target_validation is None:
            raise ConfigError("grid-search modes need a validation split")


def _parse_bool(value):
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _parse_floats(value):
    return [float(v) for v in value.split()]


def parse_config(path):
    """Parse an experiment config file into an ExperimentConfig."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = stripped.split("=", 1)
            entries[key.strip()] = value.strip()

    sources = {}
    plain = {}
    for key, value in entries.items():
        if key.startswith("source."):
            parts = key.split(".", 2)
            if len(parts) != 3:
                raise ConfigError(f"{path}: malformed source key {key!r}")
            _, sid, attr = parts
            sources.setdefault(sid, {})[attr] = value
        else:
            plain[key] = value

    train_keys = {
        "learning_rate": float, "epochs": int, "seed": int, "topics": int,
        "activation": str, "shuffle_words": _parse_bool, "shuffle_docs": _parse_bool,
        "init_scale": float, "patience": int, "momentum": float,
    }
    train_kwargs = {}
    for key, cast in train_keys.items():
        if key in plain:
            value = cast(plain.pop(key))
            field_name = {"topics": "n_topics", "patience": "validation_patience"}.get(key, key)
            train_kwargs[field_name] = value

    known = {
        "mode": str, "target.train": str, "target.validation": str,
        "target.test": str, "labeled": _parse_bool, "out": str,
        "min_freq": int, "max_vocab": int,
        "lambda_grid": _parse_floats, "gamma_grid": _parse_floats,
        "eval_fractions": _parse_floats,
        "coherence_window": int, "coherence_top_n": int, "coherence_reference": str,
        "gvt_mask_oov": _parse_bool,
    }
    values = {}
    for key, value in plain.items():
        if key not in known:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        values[key] = known[key](value)
    for required in ("mode", "target.train", "target.test", "out"):
        if required not in values:
            raise ConfigError(f"{path}: missing required key {required!r}")

    source_configs = []
    for sid in sorted(sources):
        attrs = sources[sid]
        unknown = set(attrs) - {"corpus", "kb", "lambda", "gamma"}
        if unknown:
            raise ConfigError(f"{path}: unknown source key(s) {sorted(unknown)} for {sid!r}")
        source_configs.append(SourceConfig(
            sid,
            corpus_path=attrs.get("corpus"),
            kb_path=attrs.get("kb"),
            lam_override=float(attrs["lambda"]) if "lambda" in attrs else None,
            gamma_override=float(attrs["gamma"]) if "gamma" in attrs else None,
        ))

    return ExperimentConfig(
        mode=values["mode"],
        target_train=values["target.train"],
        target_validation=values.get("target.validation"),
        target_test=values["target.test"],
        out_dir=values["out"],
        labeled=values.get("labeled", True),
        sources=source_configs,
        train=TrainConfig(**train_kwargs),
        min_freq=values.get("min_freq", 1),
        max_vocab=values.get("max_vocab"),
        lambda_grid=values.get("lambda_grid", list(DEFAULT_LAMBDA_GRID)),
        gamma_grid=values.get("gamma_grid", list(DEFAULT_GAMMA_GRID)),
        eval_fractions=values.get("eval_fractions", list(DEFAULT_FRACTIONS)),
        coherence_window=values.get("coherence_window", DEFAULT_WINDOW),
        coherence_top_n=values.get("coherence_top_n", DEFAULT_TOP_N),
        coherence_reference=values.get("coherence_reference"),
        gvt_mask_oov=values.get("gvt_mask_oov", False),
    )


def _weights_for(config, lam, gamma):
    """Per-source (id, lambda, gamma), applying fixed per-source overrides."""
    out = []
    for src in config.sources:
        out.append((
            src.source_id,
            src.lam_override if src.lam_override is not None else lam,
            src.gamma_override if src.gamma_override is not None else gamma,
        ))
    return out


def candidate_grid(config):
    """The shared (lambda, gamma) candidate list for the config's mode."""
    if config.mode == "lvt":
        return [(lam, 0.0) for lam in config.lambda_grid]
    if config.mode == "gvt":
        return [(0.0, g) for g in config.gamma_grid]
    if config.mode == "mvt":
        return [(lam, g) for lam in config.lambda_grid for g in config.gamma_grid]
    return []


def grid_search(train_corpus, validation, kbs, config, candidates):
    """Train one model per candidate; select the minimum validation perplexity.

    Ties keep the first-listed candidate.  Returns
    (best_index, table, best_params, best_stats, best_ctx) where table rows
    are (lam, gamma, validation_ppl).
    """
    if not candidates:
        raise ConfigError("grid search needs at least one candidate")
    if validation is None:
        raise ConfigError("grid search needs a validation corpus")
    table = []
    best = None
    for index, (lam, gamma) in enumerate(candidates):
        spec = TransferSpec.for_mode(config.mode, _weights_for(config, lam, gamma),
                                     gvt_mask_oov=config.gvt_mask_oov)
        ctx = None
        if spec.active:
            ctx = make_transfer_context(kbs, train_corpus.vocabulary, spec,
                                        config.train.n_topics)
        params, stats = train(train_corpus, config.train, ctx, validation)
        val_ppl = min(s.validation_ppl for s in stats)
        table.append((lam, gamma, val_ppl))
        if best is None or val_ppl < best[1]:
            best = (index, val_ppl, params, stats, ctx)
    return best[0], table, best[2], best[3], best[4]


def _fingerprint(config, selected_weights, lvt_on, gvt_on):
    """Stable hash of the effective experiment: data, training, eval, active transfer.

    Transfer weights that resolved to zero leave no trace, so a transfer mode
    with all-zero weights fingerprints identically to the baseline.
    """
    lines = [
        f"target.train={config.target_train}",
        f"target.validation={config.target_validation}",
        f"target.test={config.target_test}",
        f"labeled={config.labeled}",
        f"mode_family={'union' if config.mode in ('zero-shot', 'data-augment') else 'target'}",
        f"includes_target_train={config.mode != 'zero-shot'}",
        f"min_freq={config.min_freq}",
        f"max_vocab={config.max_vocab}",
        f"eval_fractions={config.eval_fractions}",
        f"coherence={config.coherence_window},{config.coherence_top_n},{config.coherence_reference}",
    ]
    tc = config.train
    lines.append(
        "train="
        f"{tc.learning_rate},{tc.epochs},{tc.seed},{tc.n_topics},{tc.activation},"
        f"{tc.shuffle_words},{tc.shuffle_docs},{tc.init_scale},"
        f"{tc.validation_patience},{tc.momentum}")
    if config.mode in ("zero-shot", "data-augment"):
        for src in config.sources:
            lines.append(f"union_source={src.source_id},{src.corpus_path}")
    active = [(sid, lam, gamma) for sid, lam, gamma in selected_weights
              if lam > 0 or gamma > 0]
    for sid, lam, gamma in sorted(active):
        lines.append(f"transfer={sid},{lam if lvt_on else 0.0},{gamma if gvt_on else 0.0}")
    if active:
        lines.append(f"gvt_mask_oov={config.gvt_mask_oov}")
    digest = hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()
    return digest[:16]


def _prepare_kbs(config, out_dir, audit):
    """Build (train + export) or load each source knowledge base."""
    kbs = []
    for src in config.sources:
        with _stage(f"preparing knowledge base {src.source_id!r}"):
            if src.kb_path is not None:
                kbs.append(load_kb(src.kb_path))
                audit.append(("kb", f"source:{src.source_id}", 0))
                continue
            source_corpus = corpuslib.load_corpus_file(
                src.corpus_path, labeled=config.labeled,
                min_freq=config.min_freq, max_size=config.max_vocab)
            audit.append(("kb", f"source:{src.source_id}", len(source_corpus)))
            params, _ = train(source_corpus, config.train)
            kb = build_kb(params, source_corpus.vocabulary, src.source_id)
            save_kb(kb, os.path.join(out_dir, f"kb.{src.source_id}"))
            kbs.append(kb)
    return kbs


def _union_vocabulary(raw_doc_groups, min_freq, max_vocab):
    """Vocabulary over concatenated corpora; overflowing max_vocab is an error."""
    counts = collections.Counter()
    for docs in raw_doc_groups:
        for doc in docs:
            counts.update(doc)
    qualifying = sum(1 for n in counts.values() if n >= min_freq)
    if max_vocab is not None and qualifying > max_vocab:
        raise ConfigError(
            f"vocabulary union holds {qualifying} tokens, above the configured "
            f"maximum {max_vocab}")
    all_docs = [doc for docs in raw_doc_groups for doc in docs]
    return corpuslib.build_vocabulary(all_docs, min_freq=min_freq, max_size=max_vocab)


def _concat_encode(parts, vocabulary, labeled):
    """Encode (name, raw_docs, labels) parts against one vocabulary; merge labels."""
    label_names = None
    if labeled:
        label_names = []
        seen = set()
        for _, _, labels in parts:
            for lab in labels:
                if lab not in seen:
                    seen.add(lab)
                    label_names.append(lab)
    documents = []
    per_part = []
    total_docs_dropped = 0
    total_tokens_dropped = 0
    for name, raw_docs, labels in parts:
        part = corpuslib.encode_corpus(raw_docs, labels, vocabulary,
                                       label_names=label_names)
        documents.extend(part.documents)
        per_part.append((name, len(part)))
        total_docs_dropped += part.docs_dropped
        total_tokens_dropped += part.tokens_dropped
    merged = corpuslib.Corpus(vocabulary, documents, label_names=label_names,
                              split="train", docs_dropped=total_docs_dropped,
                              tokens_dropped=total_tokens_dropped)
    return merged, per_part


def _write_train_log(path, stats):
    with open(path, "w", encoding="utf-8") as fh:
        for s in stats:
            parts = [f"epoch {s.epoch}", f"loss {format_float(s.train_loss)}"]
            if s.validation_ppl is not None:
                parts.append(f"val_ppl {format_float(s.validation_ppl)}")
            for sid in sorted(s.gvt_residuals):
                parts.append(f"residual.{sid} {format_float(s.gvt_residuals[sid])}")
            fh.write(" ".join(parts) + "\n")


def _write_selection(path, table, best_index):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (lam, gamma, ppl) in enumerate(table):
            fh.write(f"candidate {i} lam {format_float(lam)} "
                     f"gamma {format_float(gamma)} val_ppl {format_float(ppl)}\n")
        fh.write(f"selected {best_index}\n")


@contextlib.contextmanager
def _stage(name):
    """Prefix errors escaping an experiment stage with the stage name."""
    try:
        yield
    except TopicxferError as exc:
        raise type(exc)(f"{name}: {exc}") from exc
    except OSError as exc:
        raise CorpusError(f"{name}: {exc}") from exc


def _write_audit(path, audit):
    with open(path, "w", encoding="utf-8") as fh:
        for role, name, count in audit:
            fh.write(f"{role} {name} {count}\n")


def run_experiment(config):
    """Run one experiment end to end; persists artifacts and returns the report."""
    os.makedirs(config.out_dir, exist_ok=True)
    audit = []
    ctx = None
    selection = None
    selected_weights = []

    if config.mode in ("baseline", "lvt", "gvt", "mvt"):
        with _stage("loading target corpora"):
            train_corpus = corpuslib.load_corpus_file(
                config.target_train, labeled=config.labeled,
                min_freq=config.min_freq, max_size=config.max_vocab)
            vocabulary = train_corpus.vocabulary
            validation = None
            if config.target_validation is not None:
                validation = corpuslib.load_corpus_file(
                    config.target_validation, vocabulary=vocabulary,
                    labeled=config.labeled, split="validation")
        audit.append(("train", "target_train", len(train_corpus)))
        if config.mode == "baseline":
            with _stage("training"):
                params, stats = train(train_corpus, config.train, None, validation)
        else:
            kbs = _prepare_kbs(config, config.out_dir, audit)
            candidates = candidate_grid(config)
            with _stage("grid search"):
                best_index, table, params, stats, ctx = grid_search(
                    train_corpus, validation, kbs, config, candidates)
            selection = (table, best_index)
            selected_weights = _weights_for(config, *candidates[best_index])
        audit.append(("train", "total", len(train_corpus)))
    elif config.mode in ("zero-shot", "data-augment"):
        parts = []
        with _stage("loading training corpora"):
            for src in config.sources:
                if src.corpus_path is None:
                    raise ConfigError(
                        f"mode {config.mode!r} needs corpus-backed sources "
                        f"({src.source_id!r} is a prebuilt KB)")
                raw_docs, labels = corpuslib.read_raw_file(src.corpus_path,
                                                           labeled=config.labeled)
                parts.append((f"source:{src.source_id}", raw_docs, labels))
            if config.mode == "data-augment":
                raw_docs, labels = corpuslib.read_raw_file(config.target_train,
                                                           labeled=config.labeled)
                parts.append(("target_train", raw_docs, labels))
            vocabulary = _union_vocabulary([docs for _, docs, _ in parts],
                                           config.min_freq, config.max_vocab)
            train_corpus, per_part = _concat_encode(parts, vocabulary, config.labeled)
        for name, count in per_part:
            audit.append(("train", name, count))
        audit.append(("train", "total", len(train_corpus)))
        with _stage("training"):
            params, stats = train(train_corpus, config.train)
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ConfigError(f"unknown mode {config.mode!r}")

    with _stage("evaluating"):
        test = corpuslib.load_corpus_file(config.target_test, vocabulary=vocabulary,
                                          labeled=config.labeled, split="test")
        audit.append(("eval", "target_test", len(test)))

        lvt_on = ctx is not None and ctx.lvt_enabled
        gvt_on = ctx is not None and ctx.gvt_enabled
        ppl = perplexity(params, test, ctx)

        reference_path = config.coherence_reference or config.target_train
        reference = corpuslib.load_corpus_file(reference_path, labeled=config.labeled)
        audit.append(("eval", "coherence_reference", len(reference)))
        topics = all_topics(params, vocabulary, config.coherence_top_n)
        coh = coherence(topics, reference, window=config.coherence_window,
                        top_n=config.coherence_top_n)

        ir = []
        if config.labeled:
            pool = corpuslib.load_corpus_file(config.target_train,
                                              vocabulary=vocabulary, labeled=True)
            audit.append(("eval", "retrieval_pool", len(pool)))
            ir = retrieval_precision(pool, test, model_vector_fn(params, ctx),
                                     config.eval_fractions)

    fingerprint = _fingerprint(config, selected_weights, lvt_on, gvt_on)
    report = EvalReport(ppl, coh, ir, fingerprint)

    save_model(params, vocabulary, os.path.join(config.out_dir, "model"),
               seed=config.train.seed,
               lvt_matrix=ctx.lvt_matrix if lvt_on else None)
    report.save(os.path.join(config.out_dir, "report.txt"))
    _write_train_log(os.path.join(config.out_dir, "train_log.txt"), stats)
    _write_audit(os.path.join(config.out_dir, "ingestion.txt"), audit)
    if selection is not None:
        _write_selection(os.path.join(config.out_dir, "selection.txt"), *selection)
    return report
