"""The eight adapter placement schemes, keyed by a single ASCII letter.

Each scheme names the synthesizer modules whose linear/conv layers receive
adapters. The mapping is centralized here so a correction touches exactly
one table. Embedding tables are never adapted.
"""

from __future__ import annotations

from . import lora
from .errors import ConfigError, StateError
from .rng import RngState
from .synthesizer import Synthesizer

SCHEMES: dict[str, frozenset[str]] = {
    "a": frozenset({"text_encoder"}),
    "b": frozenset({"flow"}),
    "c": frozenset({"decoder"}),
    "d": frozenset({"flow", "decoder"}),
    "e": frozenset({"duration_predictor"}),
    "f": frozenset({"duration_predictor", "text_encoder"}),
    "g": frozenset({"duration_predictor", "flow", "decoder"}),
    "h": frozenset({"duration_predictor", "flow", "decoder", "projection"}),
}

SCHEME_IDS = tuple(sorted(SCHEMES))


def modules_of(scheme_id: str) -> frozenset[str]:
    try:
        return SCHEMES[scheme_id]
    except KeyError:
        raise ConfigError(
            f"unknown scheme {scheme_id!r}; valid ids are {', '.join(SCHEME_IDS)}"
        ) from None


def apply(
    model: Synthesizer,
    scheme_id: str,
    r: int,
    alpha: float | None = None,
    rng: RngState | None = None,
) -> list[str]:
    """Attach adapters to every linear/conv layer of the scheme's modules.

    The per-layer rank is clamped to min(r, d_in_eff, d_out_eff): the
    duration head has a single output unit, so a fixed global rank would
    reject every sweep value above 1. Returns the adapted paths in order.
    """
    modules = modules_of(scheme_id)
    if any(lora.is_adapted(layer) for layer in model.layers.values()):
        raise StateError("model already carries adapters; detach first")
    rng = rng or RngState(0)
    adapted: list[str] = []
    for path in list(model.layers):
        if model.module_of(path) not in modules:
            continue
        layer = model.layers[path]
        r_eff = min(r, layer.d_in_eff, layer.d_out_eff)
        a_eff = None if alpha is None else alpha * r_eff / r
        model.layers[path] = lora.attach(layer, r_eff, a_eff, rng.split(path))
        adapted.append(path)
    return adapted


def detach_all(model: Synthesizer) -> None:
    """Remove every adapter, restoring the pristine base layers."""
    for path in list(model.layers):
        layer = model.layers[path]
        if lora.is_adapted(layer):
            model.layers[path] = layer.detach()
