"""Shared fixtures: the reference lab (pretrained base + corpus) is built
once per session and reused by the trainer tests and the acceptance suite.
"""

from types import SimpleNamespace

import pytest

import loralab as L
from loralab import emotions, trainer

REF_MODEL_SEED = 42
TEACHER_SEED = 11
PRETRAIN_SEED = 1
TRAIN_SEED = 2
CORPUS_SEED = 3

PRETRAIN_STEPS = 2000
CORPUS_UTTS = 200
LEN_RANGE = (4, 8)


@pytest.fixture(scope="session")
def lab():
    config = L.ModelConfig()
    model = L.Synthesizer(config, L.RngState(REF_MODEL_SEED))
    teacher = trainer.make_pretrain_corpus(
        config, n_utts=64, len_range=LEN_RANGE, seed=TEACHER_SEED
    )
    curve = trainer.pretrain_base(
        model, teacher, L.TrainConfig(steps=PRETRAIN_STEPS, batch=8, seed=PRETRAIN_SEED)
    )
    corpus = emotions.gen_corpus(
        model, n_utts=CORPUS_UTTS, len_range=LEN_RANGE, seed=CORPUS_SEED
    )
    return SimpleNamespace(
        config=config, model=model, teacher=teacher, curve=curve, corpus=corpus
    )
