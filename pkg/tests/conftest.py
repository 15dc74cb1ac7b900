"""Session fixtures: one small deterministic corpus shared across the suite."""

import pytest
from hypothesis import settings

from adapterqa.data import Vocab
from adapterqa.synth import SynthSpec, generate_corpus

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")

SMALL_SPEC = SynthSpec(
    languages=["synthetic-a", "synthetic-b"],
    n_train=24,
    n_test=8,
    n_unlabeled=30,
    n_entities=12,
    n_relations=5,
    n_values=16,
    facts_per_context=3,
    seed=7,
)


@pytest.fixture(scope="session")
def small_corpora():
    return generate_corpus(SMALL_SPEC)


@pytest.fixture(scope="session")
def corpus_a(small_corpora):
    return small_corpora["synthetic-a"]


@pytest.fixture(scope="session")
def corpus_b(small_corpora):
    return small_corpora["synthetic-b"]


@pytest.fixture(scope="session")
def shared_vocab(small_corpora):
    texts = []
    for corpus in small_corpora.values():
        for ex in corpus.train:
            texts.append(ex.question)
            texts.append(ex.context)
        texts.extend(corpus.unlabeled)
    return Vocab.build(texts, max_size=600)
