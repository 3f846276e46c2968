import numpy as np
import numpy.testing as npt
import pytest

from loralab import emotions
from loralab.emotions import (
    EMOTIONS,
    NON_NEUTRAL,
    TRANSFORMS,
    apply_emotion,
    classify,
    classify_distribution,
    gen_corpus,
    match_rate,
)
from loralab.errors import InputError, StateError
from loralab.rng import RngState
from loralab.synthesizer import ModelConfig, Synthesizer

F32 = np.float32


@pytest.fixture(scope="module")
def base():
    m = Synthesizer(ModelConfig(), RngState(42))
    m.pretrained = True
    return m


@pytest.fixture(scope="module")
def corpus(base):
    return gen_corpus(base, n_utts=40, len_range=(4, 8), seed=3)


# ---------------------------------------------------------------------------
# transform table
# ---------------------------------------------------------------------------

def test_transform_table_values():
    assert set(TRANSFORMS) == set(EMOTIONS)
    assert TRANSFORMS["angry"].gain == 1.3 and TRANSFORMS["angry"].dur_scale == 0.8
    assert TRANSFORMS["sad"].gain == 0.7 and TRANSFORMS["sad"].dur_scale == 1.3
    assert TRANSFORMS["happy"].sine_amp == 0.2 and TRANSFORMS["happy"].dur_scale == 1.0
    assert TRANSFORMS["surprise"].pulse_gain == 0.5 and TRANSFORMS["surprise"].dur_scale == 1.0
    assert TRANSFORMS["neutral"] == emotions.EmotionTransform()


# ---------------------------------------------------------------------------
# apply_emotion
# ---------------------------------------------------------------------------

def test_neutral_is_bitwise_identity():
    dur = np.array([1.7, 2.3], dtype=F32)
    out = RngState(1).normal((4, 5))
    d2, o2 = apply_emotion(dur, out, "neutral")
    assert d2 is dur and o2 is out


def test_sad_gain_on_constant_output():
    dur = np.array([2.0, 2.0], dtype=F32)
    out = np.ones((4, 3), dtype=F32)
    _, o2 = apply_emotion(dur, out, "sad")
    # sad keeps per-token counts round(1.3*2)=3, gain 0.7 everywhere
    npt.assert_allclose(o2, 0.7, rtol=1e-6)


def test_surprise_pulses_every_sixteenth_frame():
    dur = np.array([4.0] * 5, dtype=F32)  # 20 frames, all counts preserved
    out = np.ones((20, 2), dtype=F32)
    _, o2 = apply_emotion(dur, out, "surprise")
    assert o2.shape == (20, 2)
    npt.assert_allclose(o2[0], 1.5, rtol=1e-6)
    npt.assert_allclose(o2[16], 1.5, rtol=1e-6)
    npt.assert_allclose(o2[17], 1.0, rtol=1e-6)
    npt.assert_allclose(o2[1:16], 1.0, rtol=1e-6)


def test_happy_adds_sine_and_keeps_counts():
    dur = np.array([2.0, 2.0], dtype=F32)
    out = np.zeros((4, 3), dtype=F32)
    d2, o2 = apply_emotion(dur, out, "happy")
    npt.assert_array_equal(d2, [2.0, 2.0])
    t = np.arange(4)
    expected = 0.2 * np.sin(2 * np.pi * t / 8.0)
    for ch in range(3):
        npt.assert_allclose(o2[:, ch], expected, atol=1e-6)


def test_angry_duration_rounding_cases():
    # round(0.8 * 2.0) = 2 and round(0.8 * 3.0) = round(2.4) = 2
    dur = np.array([2.0, 3.0], dtype=F32)
    out = np.ones((5, 2), dtype=F32)
    d2, _ = apply_emotion(dur, out, "angry")
    npt.assert_array_equal(d2, [2.0, 2.0])


def test_duration_clamp_to_range():
    dur = np.array([1.0, 3.6], dtype=F32)
    out = np.ones((5, 2), dtype=F32)
    d_sad, _ = apply_emotion(dur, out, "sad", max_duration=4.0)
    npt.assert_array_equal(d_sad, [1.0, 4.0])  # 1.3*3.6=4.68 clamps to 4
    d_angry, _ = apply_emotion(dur, out, "angry", max_duration=4.0)
    npt.assert_array_equal(d_angry, [1.0, 3.0])


def test_frame_count_mismatch_rejected():
    with pytest.raises(InputError):
        apply_emotion(np.array([2.0], dtype=F32), np.ones((5, 2), dtype=F32), "angry")


def test_unknown_emotion_rejected():
    with pytest.raises(InputError):
        apply_emotion(np.array([2.0], dtype=F32), np.ones((2, 2), dtype=F32), "bored")


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

def test_corpus_deterministic_under_seed(base):
    a = gen_corpus(base, n_utts=10, seed=5)
    b = gen_corpus(base, n_utts=10, seed=5)
    for ua, ub in zip(a.utterances, b.utterances):
        npt.assert_array_equal(ua.tokens, ub.tokens)
        npt.assert_array_equal(ua.neutral_out, ub.neutral_out)
        for emo in NON_NEUTRAL:
            npt.assert_array_equal(ua.targets[emo][1], ub.targets[emo][1])


def test_neutral_target_is_base_forward_bitwise(base, corpus):
    u = corpus.utterances[0]
    synth = base.forward(u.tokens, mode="deterministic")
    npt.assert_array_equal(u.neutral_out, synth.output)
    npt.assert_array_equal(u.neutral_dur, synth.durations)


def test_targets_equal_apply_emotion_of_neutral(corpus):
    for u in corpus.utterances[:5]:
        for emo in NON_NEUTRAL:
            d, o = apply_emotion(u.neutral_dur, u.neutral_out, emo, corpus.max_duration)
            npt.assert_array_equal(u.targets[emo][0], d)
            npt.assert_array_equal(u.targets[emo][1], o)


def test_split_is_disjoint_and_index_hashed(base, corpus):
    assert set(corpus.train_idx).isdisjoint(corpus.test_idx)
    assert sorted(corpus.train_idx + corpus.test_idx) == list(range(40))
    assert corpus.test_idx  # roughly 20%
    assert len(corpus.test_idx) < len(corpus.train_idx)
    # membership depends only on the index, not the seed
    other = gen_corpus(base, n_utts=40, seed=99)
    assert other.test_idx == corpus.test_idx


def test_unpretrained_base_rejected():
    fresh = Synthesizer(ModelConfig(), RngState(1))
    with pytest.raises(StateError):
        gen_corpus(fresh, n_utts=4)


def test_too_small_corpus_rejected(base):
    with pytest.raises(InputError):
        gen_corpus(base, n_utts=1)


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------

def test_classify_neutral_target_is_neutral(corpus):
    for u in corpus.utterances[:10]:
        ref = (u.neutral_dur, u.neutral_out)
        assert classify(u.neutral_out, u.neutral_dur, ref, corpus.max_duration) == "neutral"


def test_classify_each_target_as_its_emotion(corpus):
    for u in corpus.utterances:
        ref = (u.neutral_dur, u.neutral_out)
        for emo in EMOTIONS:
            d, o = u.targets[emo]
            assert classify(o, d, ref, corpus.max_duration) == emo


def test_classify_matches_brute_force_argmin(corpus):
    # independent oracle: recompute all five distances directly
    u = corpus.utterances[1]
    ref = (u.neutral_dur, u.neutral_out)
    d_obs, o_obs = u.targets["angry"]
    o_obs = (0.99 * o_obs.astype(np.float64)).astype(F32)

    def dist(cd, co):
        dur = np.mean((np.log(d_obs.astype(np.float64)) - np.log(cd.astype(np.float64))) ** 2)
        tm = min(len(o_obs), len(co))
        feat = np.sum((o_obs[:tm].astype(np.float64) - co[:tm].astype(np.float64)) ** 2)
        feat /= tm * o_obs.shape[1]
        pen = abs(np.log(len(o_obs)) - np.log(len(co)))
        return dur + feat + pen

    cands = {
        emo: apply_emotion(u.neutral_dur, u.neutral_out, emo, corpus.max_duration)
        for emo in EMOTIONS
    }
    brute = min(EMOTIONS, key=lambda e: dist(*cands[e]))
    assert brute == "angry"
    assert classify(o_obs, d_obs, ref, corpus.max_duration) == brute


def test_classify_stable_under_small_noise(corpus):
    rng = RngState(17)
    for u in corpus.utterances[:10]:
        ref = (u.neutral_dur, u.neutral_out)
        for emo in EMOTIONS:
            d, o = u.targets[emo]
            noisy = o + rng.normal(o.shape, std=0.01)
            assert classify(noisy, d, ref, corpus.max_duration) == emo


# ---------------------------------------------------------------------------
# match rate
# ---------------------------------------------------------------------------

def test_base_model_scores_neutral_one(base, corpus):
    assert match_rate(base, "neutral", corpus.test, corpus.max_duration) == 1.0
    assert match_rate(base, "angry", corpus.test, corpus.max_duration) == 0.0


def test_distribution_sums_to_one(base, corpus):
    dist = classify_distribution(base, corpus.test, corpus.max_duration)
    assert sum(dist.values()) == pytest.approx(1.0)


def test_perfect_emitter_scores_one(corpus):
    # verbatim targets fed through the oracle give a perfect match rate
    for emo in NON_NEUTRAL:
        hits = 0
        for u in corpus.test:
            d, o = u.targets[emo]
            ref = (u.neutral_dur, u.neutral_out)
            hits += classify(o, d, ref, corpus.max_duration) == emo
        assert hits == len(corpus.test)


def test_empty_split_rejected(base):
    with pytest.raises(InputError):
        classify_distribution(base, [], 4.0)


def test_unknown_label_rejected(base, corpus):
    with pytest.raises(InputError):
        match_rate(base, "bored", corpus.test, corpus.max_duration)
