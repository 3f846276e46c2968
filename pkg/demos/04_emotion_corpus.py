"""The synthetic emotion corpus and its nearest-candidate oracle.

Run:  python demos/04_emotion_corpus.py
"""

import numpy as np

from loralab import ModelConfig, RngState, Synthesizer, emotions

model = Synthesizer(ModelConfig(), RngState(42))
model.pretrained = True  # corpus generation asks for a pretrained base

corpus = emotions.gen_corpus(model, n_utts=50, len_range=(4, 8), seed=3)
print(f"{len(corpus.utterances)} utterances, "
      f"{len(corpus.train_idx)} train / {len(corpus.test_idx)} test")

u = corpus.utterances[0]
print("\nutterance 0, neutral durations:", np.round(u.neutral_dur, 2))
for emo in emotions.EMOTIONS:
    dur, out = u.targets[emo]
    tr = emotions.TRANSFORMS[emo]
    print(f"  {emo:<9s} gain {tr.gain:<4} dur x{tr.dur_scale:<4} "
          f"-> {out.shape[0]:>2d} frames, mean |feature| {np.abs(out).mean():.3f}")

print("\nthe oracle labels every transformed target correctly:")
hits = 0
for utt in corpus.utterances:
    ref = (utt.neutral_dur, utt.neutral_out)
    for emo in emotions.EMOTIONS:
        d, o = utt.targets[emo]
        hits += emotions.classify(o, d, ref, corpus.max_duration) == emo
print(f"  {hits}/{len(corpus.utterances) * 5} correct")

print("\nand it is stable under small perturbations of the observation:")
rng = RngState(9)
d, o = u.targets["angry"]
noisy = o + rng.normal(o.shape, std=0.01)
print("  classify(0.99-ish angry) ->",
      emotions.classify(noisy, d, (u.neutral_dur, u.neutral_out), corpus.max_duration))
