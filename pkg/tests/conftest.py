import numpy as np
import pytest

from topicxfer.corpus import Document, Vocabulary


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_vocab(k):
    return Vocabulary([f"w{i}" for i in range(k)])


def random_doc(rng, k, d):
    return Document(rng.integers(0, k, size=d).astype(np.int64))
