"""Deterministic toy five-module synthesizer.

The inference path runs text encoder -> duration predictor -> frame
expansion -> projection -> invertible flow -> convolutional decoder. Every
linear/conv layer is reachable through a unique dotted path string, which
is what placement schemes and adapter bundles address.

A fixed sinusoidal position table is added to the frame features right
after duration expansion. Without it the frame pipeline is blind to
absolute frame position (expansion repeats rows verbatim), and no adapter
placement could realize frame-indexed target patterns; the table is a
constant, not a parameter.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .errors import ConfigError, InputError, NumericError
from .kernel import Node, Param
from .layers import Conv1d, Embedding, Linear
from .rng import RngState

F32 = np.float32

POS_AMPLITUDE = 0.5
POS_PERIODS = (4.0, 8.0, 16.0, 32.0)


@dataclass
class ModelConfig:
    vocab: int = 64
    hidden: int = 32
    out_dim: int = 16
    flow_layers: int = 2
    kernel: int = 3
    max_duration: float = 4.0

    def validate(self) -> "ModelConfig":
        if self.hidden % 2 != 0:
            raise ConfigError(f"hidden dim must be even for the flow split, got {self.hidden}")
        if self.kernel % 2 != 1:
            raise ConfigError(f"decoder kernel must be odd, got {self.kernel}")
        if self.max_duration < 1.0:
            raise ConfigError(f"max_duration must be >= 1, got {self.max_duration}")
        return self


@dataclass
class SynthOutput:
    durations: np.ndarray          # [T_tok] continuous frames per token
    mu: np.ndarray                 # [T_frames, hidden]
    logvar: np.ndarray             # [T_frames, hidden]
    acoustic: np.ndarray           # [T_frames, hidden] flow output
    output: np.ndarray             # [T_frames, out_dim]
    frame_counts: np.ndarray       # [T_tok] rounded counts used for expansion
    dur_node: Node = field(repr=False, default=None)
    out_node: Node = field(repr=False, default=None)


def round_half_up(x) -> np.ndarray:
    """Deterministic rounding: floor(x + 0.5), computed in float64."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def positional_encoding(n_frames: int, dim: int) -> np.ndarray:
    """Fixed sin/cos table over frame index; channel i uses period
    POS_PERIODS[i % 4], sin for the first half of channels, cos for the rest."""
    t = np.arange(n_frames, dtype=np.float64)[:, None]
    periods = np.array([POS_PERIODS[i % len(POS_PERIODS)] for i in range(dim)])
    phase = 2.0 * np.pi * t / periods[None, :]
    half = dim // 2
    table = np.where(np.arange(dim)[None, :] < half, np.sin(phase), np.cos(phase))
    return (POS_AMPLITUDE * table).astype(F32)


def expand_by_duration(h, counts: np.ndarray) -> Node:
    """Repeat row t of h counts[t] times; output rows == sum(counts)."""
    return K.repeat_rows(h, counts)


class Synthesizer:
    """Toy synthesizer with named layer paths ("flow.cpl0.scale.lin1", ...)."""

    def __init__(self, config: ModelConfig | None = None, rng: RngState | None = None):
        self.config = (config or ModelConfig()).validate()
        rng = rng or RngState(0)
        c = self.config
        d, half = c.hidden, c.hidden // 2

        self.embedding = Embedding(c.vocab, d, rng.split("embedding"))
        self.layers: dict[str, object] = {}

        def make(path, layer):
            self.layers[path] = layer

        make("text_encoder.lin1", Linear(d, d, rng.split("text_encoder.lin1")))
        make("text_encoder.lin2", Linear(d, d, rng.split("text_encoder.lin2")))
        make("duration_predictor.lin1", Linear(d, d, rng.split("duration_predictor.lin1")))
        make("duration_predictor.lin2", Linear(d, 1, rng.split("duration_predictor.lin2")))
        make("projection.lin", Linear(d, 2 * d, rng.split("projection.lin")))
        for i in range(c.flow_layers):
            make(f"flow.cpl{i}.scale.lin1", Linear(half, half, rng.split(f"flow.{i}.scale")))
            make(f"flow.cpl{i}.shift.lin1", Linear(half, half, rng.split(f"flow.{i}.shift")))
        make("decoder.conv1", Conv1d(d, d, c.kernel, rng.split("decoder.conv1")))
        make("decoder.conv2", Conv1d(d, c.out_dim, c.kernel, rng.split("decoder.conv2")))

        # bias the duration head so initial predictions sit mid-range;
        # at the clamp floor the clamp gradient is zero and training stalls
        self.layers["duration_predictor.lin2"].b.value[...] = 2.0

        self.pretrained = False

    # -- structure ----------------------------------------------------------

    def layer_paths(self) -> list[tuple[str, str, tuple]]:
        """Ordered (path, kind, weight shape) for every linear/conv layer."""
        out = []
        for path, layer in self.layers.items():
            base = layer.base if hasattr(layer, "base") else layer
            w = base.W if base.kind == "linear" else base.K
            out.append((path, base.kind, tuple(w.shape)))
        return out

    def module_of(self, path: str) -> str:
        return path.split(".", 1)[0]

    def named_params(self) -> dict[str, Param]:
        """Base parameters by dotted path; adapters are looked through."""
        out = {"embedding.E": self.embedding.E}
        for path, layer in self.layers.items():
            base = layer.base if hasattr(layer, "base") else layer
            for name, p in base.params().items():
                out[f"{path}.{name}"] = p
        return out

    def copy(self) -> "Synthesizer":
        """Independent clone of base weights and flags (adapters not copied)."""
        clone = Synthesizer(self.config, RngState(0))
        src, dst = self.named_params(), clone.named_params()
        for name, p in src.items():
            dst[name].value[...] = p.value
            dst[name].trainable = p.trainable
        clone.pretrained = self.pretrained
        return clone

    def zero_grads(self) -> None:
        for p in self.named_params().values():
            p.zero_grad()

    # -- flow ---------------------------------------------------------------

    def _coupling(self, i: int, z: Node) -> Node:
        """One affine coupling layer; even layers condition on the left half."""
        half = self.config.hidden // 2
        left = K.cols_slice(z, 0, half)
        right = K.cols_slice(z, half, 2 * half)
        cond, trans = (left, right) if i % 2 == 0 else (right, left)
        s = K.tanh(self.layers[f"flow.cpl{i}.scale.lin1"].forward(cond))
        t = self.layers[f"flow.cpl{i}.shift.lin1"].forward(cond)
        moved = K.add(K.mul(trans, K.exp(s)), t)
        if i % 2 == 0:
            return K.concat_cols(cond, moved)
        return K.concat_cols(moved, cond)

    def flow_forward(self, z) -> Node:
        out = z if isinstance(z, Node) else K.constant(z)
        for i in range(self.config.flow_layers):
            out = self._coupling(i, out)
        if not np.all(np.isfinite(out.value)):
            raise NumericError("flow produced non-finite values")
        return out

    def flow_inverse(self, a: np.ndarray) -> np.ndarray:
        """Analytic inverse of flow_forward (arrays only, no gradients)."""
        half = self.config.hidden // 2
        y = np.asarray(a, dtype=F32).copy()
        for i in reversed(range(self.config.flow_layers)):
            cond = y[:, :half] if i % 2 == 0 else y[:, half:]
            moved = y[:, half:] if i % 2 == 0 else y[:, :half]
            s = np.tanh(self.layers[f"flow.cpl{i}.scale.lin1"].forward(cond).value)
            t = self.layers[f"flow.cpl{i}.shift.lin1"].forward(cond).value
            if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
                raise NumericError("flow inverse hit non-finite scale or shift")
            restored = (moved - t) * np.exp(-s)
            if i % 2 == 0:
                y = np.concatenate([cond, restored], axis=1)
            else:
                y = np.concatenate([restored, cond], axis=1)
        return y

    # -- forward ------------------------------------------------------------

    def forward(
        self,
        tokens,
        mode: str = "deterministic",
        rng: RngState | None = None,
        forced_counts: np.ndarray | None = None,
    ) -> SynthOutput:
        """Run the full inference path.

        `forced_counts` overrides the rounded predicted durations for frame
        expansion (teacher forcing during training); the continuous duration
        prediction is still produced for the duration loss.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 1 or tokens.size == 0:
            raise InputError("tokens must be a non-empty 1-D integer sequence")
        if tokens.min() < 0 or tokens.max() >= self.config.vocab:
            raise InputError(
                f"token id out of vocab [0, {self.config.vocab}): "
                f"min {tokens.min()}, max {tokens.max()}"
            )
        if mode not in ("deterministic", "sampled"):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == "sampled" and rng is None:
            raise ConfigError("sampled mode requires an RngState")

        c = self.config
        e = self.embedding.forward(tokens)
        h = K.tanh(self.layers["text_encoder.lin1"].forward(e))
        h = K.tanh(self.layers["text_encoder.lin2"].forward(h))

        draw = K.relu(self.layers["duration_predictor.lin1"].forward(h))
        dur_raw = K.softplus(self.layers["duration_predictor.lin2"].forward(draw))
        dur = K.clamp(K.reshape(dur_raw, (tokens.size,)), 1.0, c.max_duration)

        if forced_counts is not None:
            counts = np.asarray(forced_counts, dtype=np.int64)
            if counts.shape != tokens.shape:
                raise InputError(f"forced counts shape {counts.shape} vs tokens {tokens.shape}")
        else:
            counts = round_half_up(dur.value).astype(np.int64)
        counts = np.clip(counts, 1, int(round_half_up(c.max_duration)))

        hf = expand_by_duration(h, counts)
        n_frames = int(counts.sum())
        hf = K.add(hf, K.constant(positional_encoding(n_frames, c.hidden)))

        proj = self.layers["projection.lin"].forward(hf)
        mu = K.cols_slice(proj, 0, c.hidden)
        logvar = K.cols_slice(proj, c.hidden, 2 * c.hidden)
        if mode == "sampled":
            eps = rng.normal((n_frames, c.hidden))
            std = K.exp(K.scale(logvar, 0.5))
            z = K.add(mu, K.mul(std, K.constant(eps)))
        else:
            z = mu

        acoustic = self.flow_forward(z)
        x = K.relu(self.layers["decoder.conv1"].forward(acoustic))
        out = self.layers["decoder.conv2"].forward(x)
        if not np.all(np.isfinite(out.value)):
            raise NumericError("synthesizer output is non-finite")

        return SynthOutput(
            durations=dur.value.copy(),
            mu=mu.value.copy(),
            logvar=logvar.value.copy(),
            acoustic=acoustic.value.copy(),
            output=out.value.copy(),
            frame_counts=counts.copy(),
            dur_node=dur,
            out_node=out,
        )

    # -- identity -----------------------------------------------------------

    def base_checksum(self) -> int:
        """CRC32 over all base parameter bytes in sorted path order."""
        params = self.named_params()
        crc = 0
        for name in sorted(params):
            crc = zlib.crc32(params[name].value.tobytes(), crc)
        return crc & 0xFFFFFFFF
