"""Training loops: base pretraining, adapter fine-tuning, full fine-tuning,
and the rank/scheme sweep harness.

All loops are single-threaded and deterministic under (config, seed).
Frame expansion is teacher-forced with the target frame counts during
training so the reconstruction loss is defined on a fixed grid; evaluation
always runs the model on its own predicted durations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import adapterio, kernel as K, lora, schemes
from .emotions import EMOTIONS, NON_NEUTRAL, EmotionCorpus, classify_distribution
from .errors import ConfigError, NumericError, StateError, TrainingError
from .kernel import Param
from .rng import RngState, _splitmix64
from .synthesizer import ModelConfig, Synthesizer, round_half_up

F32 = np.float32


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 2000
    batch: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_out: float = 1.0
    lambda_dur: float = 1.0

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        return self


@dataclass
class RunReport:
    scheme_id: str
    emotion: str
    rank: int
    alpha: float
    steps: int
    trainable_params: int
    final_loss: float
    match_rates: dict[str, float]
    wall_time: float

    def csv_row(self) -> list:
        # wall_time is deliberately absent: CSV artifacts must be
        # byte-identical across reruns of the same manifest
        return [
            self.scheme_id, self.emotion, self.rank, self.alpha, self.steps,
            self.trainable_params, repr(self.final_loss),
            *[repr(self.match_rates[e]) for e in EMOTIONS],
        ]

    @staticmethod
    def csv_header() -> list[str]:
        return [
            "scheme", "emotion", "rank", "alpha", "steps", "trainable_params",
            "final_loss", *[f"match_{e}" for e in EMOTIONS],
        ]


class Adam:
    """Adam with bias correction; state arrays match the param dtype."""

    def __init__(self, params: list[Param], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        c = self.cfg
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * (g * g)
            m_hat = self.m[i] / (1.0 - c.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - c.beta2 ** self.t)
            p.value -= (c.lr * m_hat / (np.sqrt(v_hat) + c.eps)).astype(F32)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# ---------------------------------------------------------------------------
# pretraining teacher corpus
# ---------------------------------------------------------------------------


@dataclass
class TeacherExample:
    tokens: np.ndarray
    durations: np.ndarray      # continuous targets in [1, max_duration]
    counts: np.ndarray         # rounded expansion counts
    output: np.ndarray         # [sum(counts), out_dim]


def teacher_duration_table(config: ModelConfig) -> np.ndarray:
    """Fixed per-token duration targets, spread over the interior of the
    clamp range so the duration transforms have room in both directions."""
    v = np.arange(config.vocab, dtype=np.uint64)
    frac = ((v * np.uint64(2654435761)) % np.uint64(4096)).astype(np.float64) / 4096.0
    lo, hi = 1.25, min(3.75, config.max_duration - 0.25)
    return (lo + (hi - lo) * frac).astype(F32)


def make_pretrain_corpus(
    config: ModelConfig,
    n_utts: int = 64,
    len_range: tuple[int, int] = (4, 8),
    seed: int = 0,
) -> list[TeacherExample]:
    """Distillation targets from a frozen randomly initialized twin model."""
    teacher = Synthesizer(config, RngState(_splitmix64(seed ^ 0x7EAC11E5)))
    dur_table = teacher_duration_table(config)
    rng = RngState(seed).split("teacher-corpus")
    lo, hi = len_range
    out: list[TeacherExample] = []
    for _ in range(n_utts):
        n_tok = int(rng.integers(lo, hi + 1))
        tokens = np.asarray(rng.integers(0, config.vocab, size=n_tok))
        dur = dur_table[tokens]
        counts = round_half_up(dur).astype(np.int64)
        synth = teacher.forward(tokens, forced_counts=counts)
        out.append(TeacherExample(tokens, dur, counts, synth.output))
    return out


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def _utterance_loss(model, tokens, dur_target, counts, out_target, cfg) -> K.Node:
    synth = model.forward(tokens, forced_counts=counts)
    out_term = K.mse(synth.out_node, out_target)
    dur_term = K.mse(K.log(synth.dur_node), np.log(np.asarray(dur_target, dtype=np.float64)))
    return K.scalar_sum([out_term, dur_term], [cfg.lambda_out, cfg.lambda_dur])


def _run_steps(model, examples, cfg: TrainConfig, params: list[Param]) -> list[float]:
    """The shared optimization loop; returns the per-step loss curve."""
    opt = Adam(params, cfg)
    batch_rng = RngState(cfg.seed).split("batches")
    curve: list[float] = []
    for step in range(cfg.steps):
        idx = batch_rng.integers(0, len(examples), size=cfg.batch)
        terms = []
        try:
            for j in idx:
                tokens, dur_t, counts, out_t = examples[int(j)]
                terms.append(_utterance_loss(model, tokens, dur_t, counts, out_t, cfg))
        except NumericError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}") from exc
        loss = K.scalar_sum(terms, [1.0 / cfg.batch] * len(terms))
        if not np.isfinite(loss.value):
            raise TrainingError(f"training diverged at step {step}: loss={loss.value}")
        opt.zero_grad()
        K.backward(loss)
        opt.step()
        curve.append(float(loss.value))
    return curve


def evaluate_loss(model, examples, cfg: TrainConfig) -> float:
    """Mean loss over a fixed example list, no parameter updates."""
    terms = [
        _utterance_loss(model, tok, dur, counts, out, cfg)
        for tok, dur, counts, out in examples
    ]
    return float(sum(t.value for t in terms) / len(terms))


def _examples_from_teacher(teacher: list[TeacherExample]):
    return [(t.tokens, t.durations, t.counts, t.output) for t in teacher]


def _examples_from_corpus(corpus: EmotionCorpus, emotion: str):
    out = []
    for u in corpus.train:
        dur_e, out_e = u.targets[emotion]
        out.append((u.tokens, dur_e, dur_e.astype(np.int64), out_e))
    return out


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


def pretrain_base(
    model: Synthesizer,
    teacher_targets: list[TeacherExample],
    cfg: TrainConfig,
) -> list[float]:
    """Fit the model to the teacher corpus; marks the model pretrained.

    Returns the per-step loss curve (empty for steps=0)."""
    cfg.validate()
    examples = _examples_from_teacher(teacher_targets)
    for p in model.named_params().values():
        p.trainable = True
    curve = _run_steps(model, examples, cfg, list(model.named_params().values()))
    model.pretrained = True
    return curve


def train_adapter(
    model: Synthesizer,
    scheme_id: str,
    emotion: str,
    corpus: EmotionCorpus,
    r: int,
    alpha: float | None = None,
    cfg: TrainConfig | None = None,
) -> tuple[adapterio.AdapterBundle, RunReport]:
    """Train one per-emotion adapter bundle with the base frozen.

    The base weights are checksummed before and after; any drift raises.
    The adapters are detached afterwards, leaving the model pristine.
    """
    cfg = (cfg or TrainConfig()).validate()
    if emotion not in NON_NEUTRAL:
        raise ConfigError(f"emotion must be one of {NON_NEUTRAL}, got {emotion!r}")
    if not model.pretrained:
        raise StateError("adapter training requires a pretrained base")
    if any(lora.is_adapted(layer) for layer in model.layers.values()):
        raise StateError("model already carries adapters")

    checksum_before = model.base_checksum()
    t0 = time.perf_counter()
    schemes.apply(model, scheme_id, r, alpha, RngState(cfg.seed).split(f"adapter-{emotion}"))
    params = [p for _, p in lora.trainable_params(model)]
    n_trainable = sum(p.numel() for p in params)
    try:
        curve = _run_steps(model, _examples_from_corpus(corpus, emotion), cfg, params)
        rates = classify_distribution(model, corpus.test, corpus.max_duration)
        bundle = adapterio.extract_bundle(model, scheme_id, r, alpha, emotion)
    finally:
        schemes.detach_all(model)
    wall = time.perf_counter() - t0

    checksum_after = model.base_checksum()
    if checksum_after != checksum_before:
        raise StateError(
            f"frozen base mutated during adapter training: "
            f"{checksum_before:#010x} -> {checksum_after:#010x}"
        )
    report = RunReport(
        scheme_id=scheme_id,
        emotion=emotion,
        rank=r,
        alpha=float(r if alpha is None else alpha),
        steps=cfg.steps,
        trainable_params=n_trainable,
        final_loss=curve[-1] if curve else float("nan"),
        match_rates=rates,
        wall_time=wall,
    )
    return bundle, report


def full_param_count(model: Synthesizer) -> int:
    return sum(p.numel() for p in model.named_params().values())


def fine_tune_full(
    model: Synthesizer,
    emotion: str,
    corpus: EmotionCorpus,
    cfg: TrainConfig | None = None,
) -> tuple[Synthesizer, RunReport]:
    """Train every inference-path parameter on one emotion's targets.

    Works on a fresh copy; the given model is left untouched."""
    cfg = (cfg or TrainConfig()).validate()
    if emotion not in NON_NEUTRAL:
        raise ConfigError(f"emotion must be one of {NON_NEUTRAL}, got {emotion!r}")
    if not model.pretrained:
        raise StateError("full fine-tuning requires a pretrained base")
    tuned = model.copy()
    for p in tuned.named_params().values():
        p.trainable = True
    t0 = time.perf_counter()
    curve = _run_steps(
        tuned, _examples_from_corpus(corpus, emotion), cfg,
        list(tuned.named_params().values()),
    )
    rates = classify_distribution(tuned, corpus.test, corpus.max_duration)
    report = RunReport(
        scheme_id="full",
        emotion=emotion,
        rank=0,
        alpha=0.0,
        steps=cfg.steps,
        trainable_params=full_param_count(tuned),
        final_loss=curve[-1] if curve else float("nan"),
        match_rates=rates,
        wall_time=time.perf_counter() - t0,
    )
    return tuned, report


def baseline_report(model: Synthesizer, corpus: EmotionCorpus) -> RunReport:
    """The no-adapter row: the pretrained model evaluated as-is."""
    rates = classify_distribution(model, corpus.test, corpus.max_duration)
    return RunReport(
        scheme_id="tts", emotion="-", rank=0, alpha=0.0, steps=0,
        trainable_params=0, final_loss=float("nan"),
        match_rates=rates, wall_time=0.0,
    )


def rank_sweep(
    model: Synthesizer,
    scheme_id: str,
    emotion: str,
    corpus: EmotionCorpus,
    ranks: tuple[int, ...] = (2, 4, 8, 16),
    cfg: TrainConfig | None = None,
) -> list[RunReport]:
    """One adapter per rank, identical budget and seed across cells."""
    cfg = (cfg or TrainConfig()).validate()
    reports = []
    for r in sorted(ranks):
        _, report = train_adapter(model, scheme_id, emotion, corpus, r, None, cfg)
        reports.append(report)
    return reports


def scheme_sweep(
    model: Synthesizer,
    emotion: str,
    corpus: EmotionCorpus,
    r: int = 4,
    cfg: TrainConfig | None = None,
    scheme_ids: tuple[str, ...] = schemes.SCHEME_IDS,
) -> list[RunReport]:
    """Baseline row plus one freshly trained adapter per scheme, a..h."""
    cfg = (cfg or TrainConfig()).validate()
    reports = [baseline_report(model, corpus)]
    for sid in scheme_ids:
        _, report = train_adapter(model, sid, emotion, corpus, r, None, cfg)
        reports.append(report)
    return reports
