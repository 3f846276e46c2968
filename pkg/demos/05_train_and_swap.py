"""End to end: pretrain a small base, train two emotion bundles, hot-swap.

Takes about a minute.  Run:  python demos/05_train_and_swap.py
"""

import numpy as np

from loralab import (
    ModelConfig, RngState, Synthesizer, TrainConfig,
    adapterio, emotions, trainer,
)

config = ModelConfig()
model = Synthesizer(config, RngState(42))

teacher = trainer.make_pretrain_corpus(config, n_utts=48, seed=11)
curve = trainer.pretrain_base(model, teacher, TrainConfig(steps=600, batch=8, seed=1))
print(f"pretrain: loss {curve[0]:.3f} -> {curve[-1]:.3f}")

corpus = emotions.gen_corpus(model, n_utts=80, len_range=(4, 8), seed=3)
print(f"corpus: {len(corpus.train_idx)} train / {len(corpus.test_idx)} test utterances")

registry = adapterio.AdapterRegistry()
for emo in ("angry", "sad"):
    bundle, rep = trainer.train_adapter(
        model, "g", emo, corpus, r=4, cfg=TrainConfig(steps=500, batch=8, seed=2)
    )
    registry.register(bundle)
    print(f"trained {emo}: match_{emo} = {rep.match_rates[emo]:.3f} "
          f"({rep.trainable_params} trainable scalars, base untouched)")

tokens = corpus.test[0].tokens
neutral_out = model.forward(tokens).output

print("\nhot-swapping on one utterance:")
for emo in ("angry", "sad", None, "angry", None):
    registry.swap(model, emo)
    out = model.forward(tokens)
    label = emotions.classify(
        out.output, out.durations,
        (corpus.test[0].neutral_dur, corpus.test[0].neutral_out),
        corpus.max_duration,
    )
    print(f"  attached={str(emo):<8s} frames={out.output.shape[0]:<3d} "
          f"oracle says: {label}")

print("\nafter the final swap to none the base is bitwise restored:",
      np.array_equal(model.forward(tokens).output, neutral_out))
