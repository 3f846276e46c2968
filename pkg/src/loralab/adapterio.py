"""Bit-exact binary container for adapter bundles, base checkpoints, and
corpus/synth exports, plus the registry that hot-swaps per-emotion bundles.

Container layout (version 1, little-endian throughout):

    magic          4s   b"EELA"
    version        u16  1
    kind tag       4s   b"ADPT" | b"BASE" | b"CORP"
    scheme id      1s   ASCII letter (b"-" when not applicable)
    rank           u16
    alpha          f32
    base checksum  u32  CRC32 of the base weights this artifact belongs to
    name           u16-length-prefixed UTF-8
    record count   u32
    records        path (u16-prefixed UTF-8), kind u8, d_in u32, d_out u32,
                   then payload A then B as f32 row-major
    trailer        u32  CRC32 of all preceding bytes

Payload sizes are implied by (kind tag, record kind, d_in, d_out, rank):
adapter records carry A[r_eff x d_in] and B[d_out x r_eff] with
r_eff = min(rank, d_in, d_out); base records carry the flattened weight
A[d_out x d_in] plus the bias B[d_out] (no bias for embeddings); corpus
records carry a bare 2-D array A[d_out x d_in].
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import lora
from .errors import CompatError, FormatError
from .rng import RngState
from .synthesizer import ModelConfig, Synthesizer, SynthOutput

F32 = np.float32

MAGIC = b"EELA"
VERSION = 1
KIND_ADAPTER = b"ADPT"
KIND_BASE = b"BASE"
KIND_CORPUS = b"CORP"

REC_LINEAR = 0
REC_CONV1D = 1
REC_EMBEDDING = 2
REC_ARRAY = 3

_REC_KIND_OF_LAYER = {"linear": REC_LINEAR, "conv1d": REC_CONV1D}
_LAYER_KIND_OF_REC = {REC_LINEAR: "linear", REC_CONV1D: "conv1d"}


@dataclass
class LayerRecord:
    path: str
    kind: str                  # "linear" | "conv1d"
    d_in_eff: int
    d_out_eff: int
    A: np.ndarray              # [r_eff, d_in_eff]
    B: np.ndarray              # [d_out_eff, r_eff]


@dataclass
class AdapterBundle:
    name: str                  # emotion label
    scheme_id: str
    rank: int
    alpha: float
    base_checksum: int
    records: list[LayerRecord]

    def r_eff(self, d_in: int, d_out: int) -> int:
        return min(self.rank, d_in, d_out)


# ---------------------------------------------------------------------------
# low-level container
# ---------------------------------------------------------------------------


@dataclass
class _RawRecord:
    path: str
    kind: int
    d_in: int
    d_out: int
    a: np.ndarray
    b: np.ndarray | None


@dataclass
class _Container:
    kind_tag: bytes
    scheme: str
    rank: int
    alpha: float
    checksum: int
    name: str
    records: list[_RawRecord]


def _payload_shapes(kind_tag: bytes, rec_kind: int, d_in: int, d_out: int, rank: int):
    if kind_tag == KIND_ADAPTER and rec_kind in (REC_LINEAR, REC_CONV1D):
        r_eff = min(rank, d_in, d_out)
        return (r_eff, d_in), (d_out, r_eff)
    if kind_tag == KIND_BASE and rec_kind in (REC_LINEAR, REC_CONV1D):
        return (d_out, d_in), (d_out,)
    if kind_tag == KIND_BASE and rec_kind == REC_EMBEDDING:
        return (d_out, d_in), None
    if kind_tag == KIND_CORPUS and rec_kind == REC_ARRAY:
        return (d_out, d_in), None
    raise FormatError(f"record kind {rec_kind} not valid in {kind_tag!r} container")


def write_container(path, container: _Container) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", VERSION)
    buf += container.kind_tag
    buf += container.scheme.encode("ascii")[:1] or b"-"
    buf += struct.pack("<H", container.rank)
    buf += struct.pack("<f", container.alpha)
    buf += struct.pack("<I", container.checksum & 0xFFFFFFFF)
    name_b = container.name.encode("utf-8")
    buf += struct.pack("<H", len(name_b)) + name_b
    buf += struct.pack("<I", len(container.records))
    for rec in container.records:
        a_shape, b_shape = _payload_shapes(
            container.kind_tag, rec.kind, rec.d_in, rec.d_out, container.rank
        )
        path_b = rec.path.encode("utf-8")
        buf += struct.pack("<H", len(path_b)) + path_b
        buf += struct.pack("<BII", rec.kind, rec.d_in, rec.d_out)
        a = np.ascontiguousarray(rec.a, dtype="<f4")
        if a.shape != a_shape:
            raise FormatError(f"record {rec.path}: A shape {a.shape}, expected {a_shape}")
        buf += a.tobytes()
        if b_shape is not None:
            b = np.ascontiguousarray(rec.b, dtype="<f4")
            if b.shape != b_shape:
                raise FormatError(f"record {rec.path}: B shape {b.shape}, expected {b_shape}")
            buf += b.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated container: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path) -> _Container:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise FormatError(f"truncated container: {len(data)} bytes")
    body, (crc_stored,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise FormatError("container CRC mismatch: file is corrupt or truncated")

    r = _Reader(body)
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    kind_tag = r.take(4)
    if kind_tag not in (KIND_ADAPTER, KIND_BASE, KIND_CORPUS):
        raise FormatError(f"unknown kind tag {kind_tag!r}")
    scheme = r.take(1).decode("ascii")
    (rank,) = r.unpack("<H")
    (alpha,) = r.unpack("<f")
    (checksum,) = r.unpack("<I")
    (name_len,) = r.unpack("<H")
    name = r.take(name_len).decode("utf-8")
    (n_records,) = r.unpack("<I")
    records = []
    for _ in range(n_records):
        (path_len,) = r.unpack("<H")
        rec_path = r.take(path_len).decode("utf-8")
        rec_kind, d_in, d_out = r.unpack("<BII")
        a_shape, b_shape = _payload_shapes(kind_tag, rec_kind, d_in, d_out, rank)
        a = np.frombuffer(r.take(4 * int(np.prod(a_shape))), dtype="<f4").reshape(a_shape)
        b = None
        if b_shape is not None:
            b = np.frombuffer(r.take(4 * int(np.prod(b_shape))), dtype="<f4").reshape(b_shape)
        records.append(_RawRecord(rec_path, rec_kind, d_in, d_out, a.copy(),
                                  None if b is None else b.copy()))
    if r.pos != len(body):
        raise FormatError(f"{len(body) - r.pos} trailing bytes after last record")
    return _Container(kind_tag, scheme, rank, alpha, checksum, name, records)


# ---------------------------------------------------------------------------
# adapter bundles
# ---------------------------------------------------------------------------


def extract_bundle(
    model: Synthesizer, scheme_id: str, rank: int, alpha: float | None, name: str
) -> AdapterBundle:
    """Snapshot the currently attached adapters into a serializable bundle."""
    records = []
    for path, layer in model.layers.items():
        if not lora.is_adapted(layer):
            continue
        records.append(LayerRecord(
            path=path,
            kind=layer.kind,
            d_in_eff=layer.d_in_eff,
            d_out_eff=layer.d_out_eff,
            A=layer.pair.A.value.copy(),
            B=layer.pair.B.value.copy(),
        ))
    return AdapterBundle(
        name=name,
        scheme_id=scheme_id,
        rank=rank,
        alpha=float(rank if alpha is None else alpha),
        base_checksum=model.base_checksum(),
        records=records,
    )


def save_bundle(bundle: AdapterBundle, path) -> None:
    raws = [
        _RawRecord(r.path, _REC_KIND_OF_LAYER[r.kind], r.d_in_eff, r.d_out_eff, r.A, r.B)
        for r in bundle.records
    ]
    write_container(path, _Container(
        KIND_ADAPTER, bundle.scheme_id, bundle.rank, bundle.alpha,
        bundle.base_checksum, bundle.name, raws,
    ))


def load_bundle(path) -> AdapterBundle:
    c = read_container(path)
    if c.kind_tag != KIND_ADAPTER:
        raise FormatError(f"expected an ADPT container, got {c.kind_tag!r}")
    records = [
        LayerRecord(r.path, _LAYER_KIND_OF_REC[r.kind], r.d_in, r.d_out, r.a, r.b)
        for r in c.records
    ]
    return AdapterBundle(c.name, c.scheme, c.rank, float(c.alpha), c.checksum, records)


def attach_bundle(model: Synthesizer, bundle: AdapterBundle) -> None:
    """Attach a stored bundle by layer path; base weights are untouched."""
    actual = model.base_checksum()
    if bundle.base_checksum != actual:
        raise CompatError(
            f"bundle {bundle.name!r} was trained against base {bundle.base_checksum:#010x}, "
            f"model has {actual:#010x}"
        )
    # validate every record before touching the model
    for rec in bundle.records:
        if rec.path not in model.layers:
            raise CompatError(f"bundle names unknown layer path {rec.path!r}")
        layer = model.layers[rec.path]
        if layer.kind != rec.kind:
            raise CompatError(
                f"layer {rec.path}: bundle says {rec.kind}, model has {layer.kind}"
            )
        if (layer.d_in_eff, layer.d_out_eff) != (rec.d_in_eff, rec.d_out_eff):
            raise CompatError(
                f"layer {rec.path}: bundle dims ({rec.d_in_eff}, {rec.d_out_eff}) "
                f"vs model ({layer.d_in_eff}, {layer.d_out_eff})"
            )
    for rec in bundle.records:
        r_eff = bundle.r_eff(rec.d_in_eff, rec.d_out_eff)
        alpha_eff = bundle.alpha * r_eff / bundle.rank
        adapted = lora.attach(model.layers[rec.path], r_eff, alpha_eff, RngState(0))
        adapted.pair.A.value[...] = rec.A
        adapted.pair.B.value[...] = rec.B
        model.layers[rec.path] = adapted


class AdapterRegistry:
    """Loaded bundles by emotion; at most one attached to a model at a time."""

    def __init__(self):
        self.bundles: dict[str, AdapterBundle] = {}
        self.attached: str | None = None

    def register(self, bundle: AdapterBundle) -> None:
        self.bundles[bundle.name] = bundle

    def swap(self, model: Synthesizer, emotion: str | None) -> None:
        """Detach whatever is attached, then attach `emotion` (or nothing)."""
        from . import schemes

        if self.attached is not None:
            schemes.detach_all(model)
            self.attached = None
        if emotion is None:
            return
        if emotion not in self.bundles:
            raise KeyError(f"no bundle registered for emotion {emotion!r}")
        attach_bundle(model, self.bundles[emotion])
        self.attached = emotion


# ---------------------------------------------------------------------------
# base checkpoints
# ---------------------------------------------------------------------------


def _config_meta(config: ModelConfig, pretrained: bool) -> str:
    return (
        f"vocab={config.vocab};hidden={config.hidden};out_dim={config.out_dim};"
        f"flow_layers={config.flow_layers};kernel={config.kernel};"
        f"max_duration={config.max_duration!r};pretrained={int(pretrained)}"
    )


def _parse_meta(name: str) -> dict[str, str]:
    out = {}
    for part in name.split(";"):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k] = v
    return out


def save_base(model: Synthesizer, path) -> None:
    """Checkpoint the base weights (adapters, if any, are looked through)."""
    records = []
    e = model.embedding
    records.append(_RawRecord("embedding", REC_EMBEDDING, e.dim, e.vocab, e.E.value, None))
    for lpath, layer in model.layers.items():
        base = layer.base if hasattr(layer, "base") else layer
        records.append(_RawRecord(
            lpath, _REC_KIND_OF_LAYER[base.kind], base.d_in_eff, base.d_out_eff,
            base.weight_flat, base.b.value,
        ))
    write_container(path, _Container(
        KIND_BASE, "-", 0, 0.0, model.base_checksum(),
        _config_meta(model.config, model.pretrained), records,
    ))


def load_base(path) -> Synthesizer:
    c = read_container(path)
    if c.kind_tag != KIND_BASE:
        raise FormatError(f"expected a BASE container, got {c.kind_tag!r}")
    meta = _parse_meta(c.name)
    config = ModelConfig(
        vocab=int(meta["vocab"]), hidden=int(meta["hidden"]),
        out_dim=int(meta["out_dim"]), flow_layers=int(meta["flow_layers"]),
        kernel=int(meta["kernel"]), max_duration=float(meta["max_duration"]),
    )
    model = Synthesizer(config, RngState(0))
    by_path = {r.path: r for r in c.records}
    for lpath, layer in model.layers.items():
        if lpath not in by_path:
            raise FormatError(f"checkpoint is missing layer {lpath!r}")
        rec = by_path[lpath]
        w = layer.W if layer.kind == "linear" else layer.K
        if rec.a.size != w.value.size or rec.b.shape != layer.b.value.shape:
            raise FormatError(f"checkpoint layer {lpath!r} has wrong shape")
        w.value[...] = rec.a.reshape(w.value.shape)
        layer.b.value[...] = rec.b
    if "embedding" not in by_path:
        raise FormatError("checkpoint is missing the embedding table")
    model.embedding.E.value[...] = by_path["embedding"].a
    model.pretrained = meta.get("pretrained", "0") == "1"
    if model.base_checksum() != c.checksum:
        raise FormatError("checkpoint weights do not match their recorded checksum")
    return model


# ---------------------------------------------------------------------------
# corpus and synth exports
# ---------------------------------------------------------------------------


def save_corpus(corpus, path) -> None:
    """One CORP container; emotional targets are recomputed on load."""
    records = []
    for u in corpus.utterances:
        tag = f"u{u.index:05d}"
        records.append(_RawRecord(
            f"{tag}.tokens", REC_ARRAY, u.tokens.size, 1,
            u.tokens.astype(F32)[None, :], None,
        ))
        records.append(_RawRecord(
            f"{tag}.dur", REC_ARRAY, u.neutral_dur.size, 1, u.neutral_dur[None, :], None,
        ))
        records.append(_RawRecord(
            f"{tag}.out", REC_ARRAY, u.neutral_out.shape[1], u.neutral_out.shape[0],
            u.neutral_out, None,
        ))
    meta = (
        f"corpus;seed={corpus.seed};min_len={corpus.len_range[0]};"
        f"max_len={corpus.len_range[1]};max_duration={corpus.max_duration!r};"
        f"n={len(corpus.utterances)}"
    )
    write_container(path, _Container(
        KIND_CORPUS, "-", 0, 0.0, corpus.base_checksum, meta, records,
    ))


def load_corpus(path):
    from .emotions import NON_NEUTRAL, EmotionCorpus, Utterance, _is_test_index, apply_emotion

    c = read_container(path)
    if c.kind_tag != KIND_CORPUS:
        raise FormatError(f"expected a CORP container, got {c.kind_tag!r}")
    meta = _parse_meta(c.name)
    n = int(meta["n"])
    max_dur = float(meta["max_duration"])
    by_path = {r.path: r for r in c.records}
    utts = []
    for i in range(n):
        tag = f"u{i:05d}"
        try:
            tokens = by_path[f"{tag}.tokens"].a[0].astype(np.int64)
            dur = np.ascontiguousarray(by_path[f"{tag}.dur"].a[0])
            out = by_path[f"{tag}.out"].a
        except KeyError as exc:
            raise FormatError(f"corpus is missing record {exc.args[0]!r}") from None
        u = Utterance(i, tokens, dur, out)
        u.targets = {"neutral": (u.neutral_dur, u.neutral_out)}
        for emo in NON_NEUTRAL:
            u.targets[emo] = apply_emotion(dur, out, emo, max_dur)
        utts.append(u)
    return EmotionCorpus(
        utterances=utts,
        train_idx=[i for i in range(n) if not _is_test_index(i)],
        test_idx=[i for i in range(n) if _is_test_index(i)],
        seed=int(meta["seed"]),
        len_range=(int(meta["min_len"]), int(meta["max_len"])),
        max_duration=max_dur,
        base_checksum=c.checksum,
    )


def save_synth(out: SynthOutput, tokens: np.ndarray, base_checksum: int, path) -> None:
    """Write one synthesis result as a CORP-kind container."""
    fields = {
        "tokens": np.asarray(tokens, dtype=F32)[None, :],
        "durations": out.durations[None, :],
        "frame_counts": out.frame_counts.astype(F32)[None, :],
        "mu": out.mu,
        "logvar": out.logvar,
        "acoustic": out.acoustic,
        "output": out.output,
    }
    records = [
        _RawRecord(key, REC_ARRAY, arr.shape[1], arr.shape[0], arr, None)
        for key, arr in fields.items()
    ]
    write_container(path, _Container(
        KIND_CORPUS, "-", 0, 0.0, base_checksum, "synth", records,
    ))
