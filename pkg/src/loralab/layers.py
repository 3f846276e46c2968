"""Base layer objects: linear, 1-D convolution, and embedding lookup."""

from __future__ import annotations

import numpy as np

from . import kernel as K
from .errors import ConfigError
from .kernel import Node, Param
from .rng import RngState


class Linear:
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: RngState):
        self.in_features = in_features
        self.out_features = out_features
        self.W = Param(rng.normal((out_features, in_features), std=1.0 / np.sqrt(in_features)))
        self.b = Param(np.zeros(out_features, dtype=np.float32))

    @property
    def d_in_eff(self) -> int:
        return self.in_features

    @property
    def d_out_eff(self) -> int:
        return self.out_features

    def forward(self, x) -> Node:
        return K.linear(x, self.W, self.b)

    def params(self) -> dict[str, Param]:
        return {"W": self.W, "b": self.b}

    @property
    def weight_flat(self) -> np.ndarray:
        return self.W.value

    def __repr__(self) -> str:
        return f"Linear({self.in_features}->{self.out_features})"


class Conv1d:
    kind = "conv1d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: RngState):
        if kernel_size % 2 != 1:
            raise ConfigError(f"kernel size must be odd, got {kernel_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        std = 1.0 / np.sqrt(in_channels * kernel_size)
        self.K = Param(rng.normal((out_channels, in_channels, kernel_size), std=std))
        self.b = Param(np.zeros(out_channels, dtype=np.float32))

    @property
    def d_in_eff(self) -> int:
        return self.in_channels * self.kernel_size

    @property
    def d_out_eff(self) -> int:
        return self.out_channels

    def forward(self, x) -> Node:
        return K.conv1d(x, self.K, self.b)

    def params(self) -> dict[str, Param]:
        return {"K": self.K, "b": self.b}

    @property
    def weight_flat(self) -> np.ndarray:
        # [out, in*k] view of the kernel; shares memory with K.value
        return self.K.value.reshape(self.out_channels, -1)

    def __repr__(self) -> str:
        return f"Conv1d({self.in_channels}->{self.out_channels}, k={self.kernel_size})"


class Embedding:
    kind = "embedding"

    def __init__(self, vocab: int, dim: int, rng: RngState):
        self.vocab = vocab
        self.dim = dim
        self.E = Param(rng.normal((vocab, dim), std=1.0))

    def forward(self, ids) -> Node:
        return K.embedding(self.E, ids)

    def params(self) -> dict[str, Param]:
        return {"E": self.E}

    def __repr__(self) -> str:
        return f"Embedding({self.vocab}x{self.dim})"
