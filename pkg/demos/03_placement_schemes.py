"""The eight placement schemes and what each one adapts.

Run:  python demos/03_placement_schemes.py
"""

from loralab import ModelConfig, RngState, Synthesizer, lora, schemes

model = Synthesizer(ModelConfig(), RngState(0))
full = sum(p.numel() for p in model.named_params().values())

print(f"{'scheme':<7} {'modules':<48} layers  r=4 params  % of {full}")
for sid in schemes.SCHEME_IDS:
    modules = ",".join(sorted(schemes.modules_of(sid)))
    paths = schemes.apply(model, sid, r=4, rng=RngState(1))
    n = lora.count_trainable_scalars(model)
    schemes.detach_all(model)
    print(f"{sid:<7} {modules:<48} {len(paths):<7d} {n:<10d} {100 * n / full:.1f}%")

print("\nscheme g adapts these layers:")
paths = schemes.apply(model, "g", r=4, rng=RngState(1))
for p in paths:
    layer = model.layers[p]
    print(f"  {p:<28s} rank {layer.pair.rank} ({layer.pair.numel()} scalars)")
schemes.detach_all(model)
print("\nnote: the duration head has one output unit, so its rank clamps to 1")
