"""Low-rank adapters on a single layer: attach, train, merge, detach.

Run:  python demos/01_low_rank_adapters.py
"""

import numpy as np

from loralab import kernel as K, lora
from loralab.layers import Linear
from loralab.rng import RngState
from loralab.trainer import Adam, TrainConfig

rng = RngState(0)
layer = Linear(16, 16, rng.split("layer"))
x = rng.split("data").normal((8, 16))
target = 1.3 * layer.forward(x).value  # teach the adapter a 30% gain

print("base output row 0, first 4 channels:", layer.forward(x).value[0, :4])

adapted = lora.attach(layer, r=2, rng=rng.split("adapter"))
print("\nafter attach (B starts at zero) the layer is bit-identical:")
print("identical:", np.array_equal(adapted.forward(x).value, layer.forward(x).value))
print("trainable adapter scalars:", adapted.pair.numel(),
      "vs", layer.W.numel() + layer.b.numel(), "frozen base scalars")

opt = Adam([adapted.pair.A, adapted.pair.B], TrainConfig(lr=0.01, steps=300, batch=1, seed=0))
for step in range(300):
    opt.zero_grad()
    loss = K.mse(adapted.forward(x), target)
    K.backward(loss)
    opt.step()
print(f"\nafter 300 adapter steps: loss {loss.value:.2e}")

w_bits = layer.W.value.copy()
unmerged_out = adapted.forward(x).value
adapted.merge()
print("merged: forward now uses a single folded weight")
print("max |merged - unmerged| forward diff:",
      np.abs(adapted.forward(x).value - unmerged_out).max())
adapted.unmerge()
print("unmerge restores the base weight bitwise:", np.array_equal(layer.W.value, w_bits))

base = adapted.detach()
print("detach returns the pristine layer:", base is layer,
      "| trainable flags restored:", layer.W.trainable)
