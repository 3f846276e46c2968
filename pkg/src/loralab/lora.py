"""Low-rank adapters for linear and 1-D convolution layers.

An adapter adds a trainable rank-r bypass B @ A beside a frozen base
weight; the bypass output is scaled by alpha/r. B starts all-zero, so a
freshly attached adapter is bit-exact with the base layer. The bypass can
be folded into the base weight (`merge`) for adapter-free inference and
unfolded again; `detach` removes the adapter and restores the base layer's
original trainable flags.

Convolution kernels are factorized through their flattened [out, in*k]
view, so one code path serves both layer kinds.
"""

from __future__ import annotations

import numpy as np

from . import kernel as K
from .errors import ConfigError, StateError
from .kernel import Node, Param
from .layers import Conv1d, Linear
from .rng import RngState

A_INIT_STD = 0.02


class LoraPair:
    """Trainable low-rank factors for one base layer."""

    __slots__ = ("A", "B", "rank", "alpha", "enabled", "merged")

    def __init__(self, A: Param, B: Param, rank: int, alpha: float):
        self.A = A
        self.B = B
        self.rank = rank
        self.alpha = float(alpha)
        self.enabled = True
        self.merged = False

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def delta_flat(self) -> np.ndarray:
        """alpha/r * B @ A in float64, shaped [d_out_eff, d_in_eff]."""
        prod = self.B.value.astype(np.float64) @ self.A.value.astype(np.float64)
        return prod * (self.alpha / self.rank)

    def numel(self) -> int:
        return self.A.numel() + self.B.numel()


class _LoraBase:
    """Shared attach/merge/detach mechanics for both layer kinds."""

    def __init__(self, base, r: int, alpha: float | None, rng: RngState):
        d_in, d_out = base.d_in_eff, base.d_out_eff
        if not 1 <= r <= min(d_in, d_out):
            raise ConfigError(
                f"rank {r} out of range [1, {min(d_in, d_out)}] for {base!r}"
            )
        self.base = base
        A = Param(rng.normal((r, d_in), std=A_INIT_STD))
        B = Param(np.zeros((d_out, r), dtype=np.float32))
        self.pair = LoraPair(A, B, r, r if alpha is None else alpha)
        self._saved_flags = {name: p.trainable for name, p in base.params().items()}
        for p in base.params().values():
            p.trainable = False
        self._premerge_weight: np.ndarray | None = None

    # -- state transitions -------------------------------------------------

    def merge(self) -> None:
        """Fold alpha/r * B @ A into the base weight (64-bit arithmetic)."""
        if self.pair.merged:
            raise StateError("adapter already merged")
        w = self._base_weight_param()
        self._premerge_weight = w.value.copy()
        flat64 = w.value.reshape(self.base.d_out_eff, -1).astype(np.float64)
        merged = (flat64 + self.pair.delta_flat()).astype(np.float32)
        w.value[...] = merged.reshape(w.value.shape)
        self.pair.merged = True

    def unmerge(self) -> None:
        """Exact inverse of merge: the pre-merge weight bits come back."""
        if not self.pair.merged:
            raise StateError("unmerge called but adapter is not merged")
        w = self._base_weight_param()
        w.value[...] = self._premerge_weight
        self._premerge_weight = None
        self.pair.merged = False

    def detach(self):
        """Remove the adapter; returns the base layer, bit-exact pristine."""
        if self.pair.merged:
            raise StateError("unmerge before detach")
        if self.base is None:
            raise StateError("adapter already detached")
        for name, p in self.base.params().items():
            p.trainable = self._saved_flags[name]
        base, self.base = self.base, None
        return base

    def _base_weight_param(self) -> Param:
        params = self.base.params()
        return params["W"] if "W" in params else params["K"]

    # -- forward -----------------------------------------------------------

    def _delta(self, x_eff: Node) -> Node:
        u = K.matmul_nt(x_eff, self.pair.A)
        v = K.matmul_nt(u, self.pair.B)
        return K.scale(v, self.pair.scaling)

    def params(self) -> dict[str, Param]:
        return self.base.params()

    @property
    def kind(self) -> str:
        return self.base.kind

    @property
    def d_in_eff(self) -> int:
        return self.base.d_in_eff

    @property
    def d_out_eff(self) -> int:
        return self.base.d_out_eff


class LoraLinear(_LoraBase):
    def forward(self, x) -> Node:
        y = self.base.forward(x)
        if self.pair.enabled and not self.pair.merged:
            y = K.add(y, self._delta(x))
        return y

    def __repr__(self) -> str:
        return f"LoraLinear(r={self.pair.rank}, base={self.base!r})"


class LoraConv1d(_LoraBase):
    def forward(self, x) -> Node:
        cols = K.im2col(x, self.base.kernel_size)
        y = K.flat_affine(cols, self.base.K, self.base.b)
        if self.pair.enabled and not self.pair.merged:
            y = K.add(y, self._delta(cols))
        return y

    def __repr__(self) -> str:
        return f"LoraConv1d(r={self.pair.rank}, base={self.base!r})"


def attach(layer, r: int, alpha: float | None = None, rng: RngState | None = None):
    """Wrap a base layer with a fresh low-rank adapter.

    A is Gaussian(0, 0.02^2) from `rng`, B is zero, base params freeze.
    Default alpha equals r, making the bypass scale exactly 1.
    """
    if isinstance(layer, _LoraBase):
        raise StateError(f"layer already adapted: {layer!r}")
    if rng is None:
        raise ConfigError("attach requires an RngState for A init")
    if isinstance(layer, Linear):
        return LoraLinear(layer, r, alpha, rng)
    if isinstance(layer, Conv1d):
        return LoraConv1d(layer, r, alpha, rng)
    raise ConfigError(f"cannot adapt layer kind {type(layer).__name__}")


def is_adapted(layer) -> bool:
    return isinstance(layer, _LoraBase)


def trainable_params(model) -> list[tuple[str, Param]]:
    """(layer_path, Param) for the A/B factors of enabled pairs, path order."""
    out: list[tuple[str, Param]] = []
    for path, layer in model.layers.items():
        if isinstance(layer, _LoraBase) and layer.pair.enabled:
            out.append((path, layer.pair.A))
            out.append((path, layer.pair.B))
    return out


def count_trainable_scalars(model) -> int:
    return sum(p.numel() for _, p in trainable_params(model))


def lora_param_count(rank: int, d_in_eff: int, d_out_eff: int) -> int:
    """Closed form r_eff*(d_in+d_out) with the per-layer rank clamp."""
    r_eff = min(rank, d_in_eff, d_out_eff)
    return r_eff * (d_in_eff + d_out_eff)
