"""Corpus ingestion: vocabularies, index-encoded documents, and the line-based file format.

A corpus file holds one document per line.  In labeled mode each line is
``label<TAB>token token ...``; in unlabeled mode the whole line is tokens.
A vocabulary file holds one token per line (index = line number).
"""

from __future__ import annotations

import collections
from dataclasses import dataclass

import numpy as np

from .errors import CorpusError

SPLITS = ("train", "validation", "test")


def _trim(token):
    """Strip non-alphanumeric characters from both ends of a token."""
    start, end = 0, len(token)
    while start < end and not token[start].isalnum():
        start += 1
    while end > start and not token[end - 1].isalnum():
        end -= 1
    return token[start:end]


def tokenize(text):
    """Lowercase, split on whitespace, trim non-alphanumeric edges, drop empties."""
    out = []
    for raw in text.lower().split():
        tok = _trim(raw)
        if tok:
            out.append(tok)
    return out


class Vocabulary:
    """Ordered set of distinct tokens with mutually inverse token<->index maps."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if not tokens:
            raise CorpusError("empty vocabulary")
        self._tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}
        if len(self._index) != len(tokens):
            dupes = [t for t, n in collections.Counter(tokens).items() if n > 1]
            raise CorpusError(f"duplicate vocabulary tokens: {dupes[:5]}")

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    def __iter__(self):
        return iter(self._tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self):
        return list(self._tokens)

    def index(self, token):
        try:
            return self._index[token]
        except KeyError:
            raise CorpusError(f"token not in vocabulary: {token!r}") from None

    def token(self, index):
        return self._tokens[index]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


@dataclass
class Document:
    """One encoded document: vocabulary indices in order, optional label index."""

    words: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.int64)
        if self.words.ndim != 1 or self.words.size == 0:
            raise CorpusError("documents must contain at least one word index")

    def __len__(self):
        return int(self.words.size)


@dataclass
class Corpus:
    """Encoded documents sharing one vocabulary, tagged with a split name."""

    vocabulary: Vocabulary
    documents: list[Document]
    label_names: list[str] | None = None
    split: str = "train"
    docs_dropped: int = 0
    tokens_dropped: int = 0

    def __post_init__(self):
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}, expected one of {SPLITS}")
        k = len(self.vocabulary)
        for doc in self.documents:
            if doc.words.min(initial=0) < 0 or doc.words.max(initial=0) >= k:
                raise CorpusError("document word index out of vocabulary range")
            if doc.label is not None:
                if self.label_names is None or not 0 <= doc.label < len(self.label_names):
                    raise CorpusError("document label index out of range")

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def labeled(self):
        return self.label_names is not None

    def label_of(self, doc):
        """Label string for a document of this corpus (None when unlabeled)."""
        if doc.label is None:
            return None
        return self.label_names[doc.label]

    def decode(self, doc):
        return [self.vocabulary.token(i) for i in doc.words]


def build_vocabulary(raw_docs, min_freq=1, max_size=None):
    """Build a vocabulary from tokenized documents.

    Keeps tokens with corpus frequency >= min_freq, ordered by descending
    frequency then ascending token, truncated to the max_size most frequent.
    """
    if not raw_docs:
        raise CorpusError("cannot build a vocabulary from zero documents")
    if min_freq < 1:
        raise CorpusError("min_freq must be >= 1")
    if max_size is not None and max_size < 1:
        raise CorpusError("max_size must be >= 1")
    counts = collections.Counter()
    for doc in raw_docs:
        counts.update(doc)
    kept = [(tok, n) for tok, n in counts.items() if n >= min_freq]
    if not kept:
        raise CorpusError("empty vocabulary: every token fell below min_freq")
    kept.sort(key=lambda item: (-item[1], item[0]))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary([tok for tok, _ in kept])


def encode_corpus(raw_docs, labels, vocabulary, split="train", label_names=None):
    """Map tokenized documents onto vocabulary indices.

    Out-of-vocabulary tokens are dropped (counted in tokens_dropped); documents
    that become empty are dropped (counted in docs_dropped).  When label_names
    is given, any label outside it is an ingestion error; otherwise label names
    are collected in order of first appearance.
    """
    if labels is not None and len(labels) != len(raw_docs):
        raise CorpusError("labels and documents must align one-to-one")
    if labels is None:
        names = None
    elif label_names is not None:
        names = list(label_names)
        known = set(names)
        for lab in labels:
            if lab not in known:
                raise CorpusError(f"label not in label set: {lab!r}")
    else:
        names = []
        seen = set()
        for lab in labels:
            if lab not in seen:
                seen.add(lab)
                names.append(lab)
    name_index = {n: i for i, n in enumerate(names)} if names is not None else None

    documents = []
    docs_dropped = 0
    tokens_dropped = 0
    for pos, doc in enumerate(raw_docs):
        idx = [vocabulary.index(t) for t in doc if t in vocabulary]
        tokens_dropped += len(doc) - len(idx)
        if not idx:
            docs_dropped += 1
            continue
        label = name_index[labels[pos]] if labels is not None else None
        documents.append(Document(np.array(idx, dtype=np.int64), label))
    return Corpus(
        vocabulary,
        documents,
        label_names=names,
        split=split,
        docs_dropped=docs_dropped,
        tokens_dropped=tokens_dropped,
    )


def read_raw_file(path, labeled=False):
    """Parse a corpus file into (tokenized docs, labels or None)."""
    raw_docs = []
    labels = [] if labeled else None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if labeled:
                if "\t" not in line:
                    raise CorpusError(
                        f"{path}: line {lineno}: expected 'label<TAB>tokens'"
                    )
                label, text = line.split("\t", 1)
                labels.append(label)
            else:
                text = line
            raw_docs.append(tokenize(text))
    if not raw_docs:
        raise CorpusError(f"{path}: file contains no documents")
    return raw_docs, labels


def load_corpus_file(path, vocabulary=None, labeled=False, split="train",
                     min_freq=1, max_size=None, label_names=None):
    """Load a corpus file, building a vocabulary unless one is supplied."""
    raw_docs, labels = read_raw_file(path, labeled=labeled)
    if vocabulary is None:
        vocabulary = build_vocabulary(raw_docs, min_freq=min_freq, max_size=max_size)
    return encode_corpus(raw_docs, labels, vocabulary, split=split,
                         label_names=label_names)


def write_corpus_file(corpus, path):
    """Write a corpus back out in the line format (labels included when present)."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            text = " ".join(corpus.decode(doc))
            if corpus.labeled:
                fh.write(f"{corpus.label_of(doc)}\t{text}\n")
            else:
                fh.write(text + "\n")
