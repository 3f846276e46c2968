"""loralab: a desk-scale lab for low-rank adapter placement in a toy
five-module synthesizer.

Train a neutral base model, attach low-rank adapter bundles at any of
eight placement schemes, fine-tune them per emotion against an analytic
target corpus, and hot-swap the resulting bundles without touching the
frozen base weights.
"""

from . import adapterio, emotions, kernel, layers, lora, schemes, trainer
from .adapterio import AdapterBundle, AdapterRegistry, load_base, load_bundle, save_base, save_bundle
from .emotions import EMOTIONS, NON_NEUTRAL, apply_emotion, classify, gen_corpus, match_rate
from .kernel import Param, backward, finite_diff_grad
from .rng import RngState
from .schemes import SCHEME_IDS, SCHEMES
from .synthesizer import ModelConfig, Synthesizer, SynthOutput
from .trainer import (
    RunReport,
    TrainConfig,
    fine_tune_full,
    make_pretrain_corpus,
    pretrain_base,
    rank_sweep,
    scheme_sweep,
    train_adapter,
)

__version__ = "0.1.0"
