"""A walk through the five-module synthesizer's inference path.

Run:  python demos/02_toy_synthesizer.py
"""

import numpy as np

from loralab import ModelConfig, RngState, Synthesizer

model = Synthesizer(ModelConfig(), RngState(42))
tokens = [5, 17, 30, 9]

out = model.forward(tokens)
print("tokens:", tokens)
print("predicted durations (frames per token):", np.round(out.durations, 3))
print("rounded frame counts:", out.frame_counts, "-> total", out.frame_counts.sum())
print("projection mu/logvar:", out.mu.shape, out.logvar.shape)
print("acoustic features (flow output):", out.acoustic.shape)
print("decoder output:", out.output.shape)

print("\nevery linear/conv layer has a unique dotted path:")
for path, kind, shape in model.layer_paths():
    print(f"  {path:<28s} {kind:<7s} {shape}")

# the flow is exactly invertible: acoustic features map back to the latent
z = RngState(1).normal((10, model.config.hidden))
a = model.flow_forward(z).value
back = model.flow_inverse(a)
print(f"\nflow round-trip max error: {np.abs(back - z).max():.2e}")

# sampled mode draws the latent around mu; a seed pins the draw
s1 = model.forward(tokens, mode="sampled", rng=RngState(7))
s2 = model.forward(tokens, mode="sampled", rng=RngState(7))
s3 = model.forward(tokens, mode="sampled", rng=RngState(8))
print("same sampling seed reproduces bitwise:", np.array_equal(s1.output, s2.output))
print("different seed differs:", not np.array_equal(s1.output, s3.output))
