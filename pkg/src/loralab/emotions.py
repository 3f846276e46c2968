"""Synthetic emotion corpus and the classification oracle.

Five labels. Each non-neutral label is an analytic transform of a neutral
(duration, output) pair: a feature gain, a duration rescale, and/or a
frame-indexed pattern. The transforms are mutually distinguishable, so a
nearest-candidate classifier over the five transformed references serves
as the recognition oracle; its distance mixes per-token log-duration error,
per-frame feature error, and a length penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StateError
from .rng import RngState, _splitmix64
from .synthesizer import Synthesizer, round_half_up

F32 = np.float32
F64 = np.float64

# tie-break order is fixed: first match wins on exact distance ties
EMOTIONS = ("neutral", "angry", "happy", "sad", "surprise")
NON_NEUTRAL = ("angry", "happy", "sad", "surprise")


@dataclass(frozen=True)
class EmotionTransform:
    gain: float = 1.0
    dur_scale: float = 1.0
    sine_amp: float = 0.0      # additive sine on every channel, period 8 frames
    pulse_gain: float = 0.0    # extra gain on frames where t % 16 == 0


TRANSFORMS: dict[str, EmotionTransform] = {
    "neutral": EmotionTransform(),
    "angry": EmotionTransform(gain=1.3, dur_scale=0.8),
    "happy": EmotionTransform(sine_amp=0.2),
    "sad": EmotionTransform(gain=0.7, dur_scale=1.3),
    "surprise": EmotionTransform(pulse_gain=0.5),
}


def apply_emotion(
    durations: np.ndarray,
    output: np.ndarray,
    emotion: str,
    max_duration: float = 4.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Transform a (durations, output) pair into the emotion's target pair.

    Neutral is the bitwise identity. Otherwise durations are rescaled as
    clamp(round(dur_scale * dur), 1, max_duration); output frames are
    re-expanded onto the new grid by proportional row resampling within
    each token's span, then the gain and frame patterns apply on the new
    global frame index.
    """
    if emotion not in TRANSFORMS:
        raise InputError(f"unknown emotion {emotion!r}; expected one of {EMOTIONS}")
    tr = TRANSFORMS[emotion]
    if emotion == "neutral":
        return durations, output

    durations = np.asarray(durations, dtype=F32)
    output = np.asarray(output, dtype=F32)
    old_counts = round_half_up(durations).astype(np.int64)
    old_counts = np.clip(old_counts, 1, int(round_half_up(max_duration)))
    if int(old_counts.sum()) != output.shape[0]:
        raise InputError(
            f"output has {output.shape[0]} frames but durations round to {old_counts.sum()}"
        )
    new_counts = round_half_up(tr.dur_scale * durations.astype(F64)).astype(np.int64)
    new_counts = np.clip(new_counts, 1, int(round_half_up(max_duration)))

    rows = []
    start = 0
    for c_old, c_new in zip(old_counts, new_counts):
        span = output[start:start + c_old]
        src = (np.arange(c_new) * c_old) // c_new
        rows.append(span[src])
        start += c_old
    out = np.concatenate(rows, axis=0)

    t = np.arange(out.shape[0], dtype=F64)[:, None]
    factor = np.full_like(t, tr.gain)
    if tr.pulse_gain:
        factor = factor * (1.0 + tr.pulse_gain * (t % 16 == 0))
    out = (out.astype(F64) * factor).astype(F32)
    if tr.sine_amp:
        out = out + (tr.sine_amp * np.sin(2.0 * np.pi * t / 8.0)).astype(F32)
    return new_counts.astype(F32), out


@dataclass
class Utterance:
    index: int
    tokens: np.ndarray
    neutral_dur: np.ndarray           # [T] continuous predicted durations
    neutral_out: np.ndarray           # [sum(round(dur)), m]
    targets: dict[str, tuple[np.ndarray, np.ndarray]] = field(repr=False, default=None)


@dataclass
class EmotionCorpus:
    utterances: list[Utterance]
    train_idx: list[int]
    test_idx: list[int]
    seed: int
    len_range: tuple[int, int]
    max_duration: float
    base_checksum: int

    @property
    def train(self) -> list[Utterance]:
        return [self.utterances[i] for i in self.train_idx]

    @property
    def test(self) -> list[Utterance]:
        return [self.utterances[i] for i in self.test_idx]


def _is_test_index(i: int) -> bool:
    return _splitmix64(i) % 5 == 0


def gen_corpus(
    base_model: Synthesizer,
    n_utts: int = 200,
    len_range: tuple[int, int] = (4, 8),
    seed: int = 0,
) -> EmotionCorpus:
    """Sample token sequences and build per-emotion targets from the base.

    Neutral targets are the base model's deterministic forward output;
    emotional targets are apply_emotion of that pair. The 80/20 split
    hashes the utterance index, so membership never depends on the seed.
    """
    if not base_model.pretrained:
        raise StateError("corpus generation requires a pretrained base model")
    if n_utts < 2:
        raise InputError(f"need at least 2 utterances, got {n_utts}")
    lo, hi = len_range
    if not 1 <= lo <= hi:
        raise InputError(f"bad length range {len_range}")

    rng = RngState(seed).split("corpus")
    max_dur = base_model.config.max_duration
    utts: list[Utterance] = []
    for i in range(n_utts):
        n_tok = int(rng.integers(lo, hi + 1))
        tokens = np.asarray(rng.integers(0, base_model.config.vocab, size=n_tok))
        synth = base_model.forward(tokens, mode="deterministic")
        u = Utterance(i, tokens, synth.durations, synth.output)
        u.targets = {"neutral": (u.neutral_dur, u.neutral_out)}
        for emo in NON_NEUTRAL:
            u.targets[emo] = apply_emotion(u.neutral_dur, u.neutral_out, emo, max_dur)
        utts.append(u)

    test_idx = [i for i in range(n_utts) if _is_test_index(i)]
    train_idx = [i for i in range(n_utts) if not _is_test_index(i)]
    return EmotionCorpus(
        utterances=utts,
        train_idx=train_idx,
        test_idx=test_idx,
        seed=seed,
        len_range=(lo, hi),
        max_duration=max_dur,
        base_checksum=base_model.base_checksum(),
    )


# ---------------------------------------------------------------------------
# classification oracle
# ---------------------------------------------------------------------------


def _distance(
    durations: np.ndarray,
    output: np.ndarray,
    cand_dur: np.ndarray,
    cand_out: np.ndarray,
) -> float:
    """Log-duration error (weight 1.0) + per-frame feature error + length penalty."""
    d_obs = np.log(np.asarray(durations, dtype=F64))
    d_cand = np.log(np.asarray(cand_dur, dtype=F64))
    dur_term = float(np.mean((d_obs - d_cand) ** 2))

    t_obs, t_cand = output.shape[0], cand_out.shape[0]
    t_min = min(t_obs, t_cand)
    diff = output[:t_min].astype(F64) - cand_out[:t_min].astype(F64)
    feat_term = float(np.sum(diff * diff) / (t_min * output.shape[1]))
    length_pen = abs(float(np.log(t_obs) - np.log(t_cand)))
    return dur_term + feat_term + length_pen


def classify(
    output: np.ndarray,
    durations: np.ndarray,
    neutral_ref: tuple[np.ndarray, np.ndarray],
    max_duration: float = 4.0,
) -> str:
    """Nearest-candidate label for an observed (output, durations) pair.

    Candidates are apply_emotion(neutral_ref, e) for the five labels;
    exact ties resolve to the earliest label in EMOTIONS order.
    """
    ref_dur, ref_out = neutral_ref
    best_label, best_d = None, None
    for emo in EMOTIONS:
        cd, co = apply_emotion(ref_dur, ref_out, emo, max_duration)
        d = _distance(durations, output, cd, co)
        if best_d is None or d < best_d:
            best_label, best_d = emo, d
    return best_label


def classify_distribution(
    model: Synthesizer,
    split: list[Utterance],
    max_duration: float = 4.0,
) -> dict[str, float]:
    """Fraction of utterances classified as each label under the model."""
    if not split:
        raise InputError("empty evaluation split")
    counts = {emo: 0 for emo in EMOTIONS}
    for u in split:
        synth = model.forward(u.tokens, mode="deterministic")
        label = classify(
            synth.output, synth.durations, (u.neutral_dur, u.neutral_out), max_duration
        )
        counts[label] += 1
    return {emo: counts[emo] / len(split) for emo in EMOTIONS}


def match_rate(
    model: Synthesizer,
    adapter_emotion: str,
    split: list[Utterance],
    max_duration: float = 4.0,
) -> float:
    """Fraction of the split classified as the adapter's own emotion."""
    if adapter_emotion not in EMOTIONS:
        raise InputError(f"unknown emotion {adapter_emotion!r}")
    return classify_distribution(model, split, max_duration)[adapter_emotion]
