"""Small-scale rank and scheme sweeps and the fine-tune comparison table.

Budgets here are deliberately tiny so the demo finishes in a couple of
minutes; the acceptance suite runs the authoritative budgets. Run:

    python demos/06_sweep_tables.py
"""

from loralab import ModelConfig, RngState, Synthesizer, TrainConfig, emotions, trainer
from loralab.reports import format_aligned

config = ModelConfig()
model = Synthesizer(config, RngState(42))
trainer.pretrain_base(
    model, trainer.make_pretrain_corpus(config, n_utts=48, seed=11),
    TrainConfig(steps=600, batch=8, seed=1),
)
corpus = emotions.gen_corpus(model, n_utts=60, seed=3)
cfg = TrainConfig(steps=150, batch=4, seed=2)

print("scheme sweep (match rate of each adapter for its own emotion):")
rows = []
for emo in emotions.NON_NEUTRAL:
    reports = trainer.scheme_sweep(model, emo, corpus, r=4, cfg=cfg)
    rows.append([emo.capitalize()] + [f"{r.match_rates[emo]:.2f}" for r in reports])
print(format_aligned(["emotion", "tts", *"abcdefgh"], rows))

print("rank sweep on scheme g:")
rows = []
for emo in emotions.NON_NEUTRAL:
    reports = trainer.rank_sweep(model, "g", emo, corpus, (2, 4, 8, 16), cfg)
    rows.append([emo.capitalize()] + [f"{r.match_rates[emo]:.2f}" for r in reports])
print(format_aligned(["emotion", "r=2", "r=4", "r=8", "r=16"], rows))

print("scheme g (r=1) vs full fine-tuning under the same budget:")
rows = []
for emo in emotions.NON_NEUTRAL:
    _, rep_g = trainer.train_adapter(model, "g", emo, corpus, 1, None, cfg)
    _, rep_ft = trainer.fine_tune_full(model, emo, corpus, cfg)
    rows.append([emo.capitalize(), f"{rep_g.match_rates[emo]:.2f}",
                 f"{rep_ft.match_rates[emo]:.2f}"])
print(format_aligned(["emotion", "g", "fine-tune"], rows))
