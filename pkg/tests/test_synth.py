import numpy as np
import pytest

from repseg.errors import ValidationError
from repseg.synth import synth_generate, synth_landmarks
from repseg.landmark import lip_distance
from repseg.types import SynthSpec


def test_same_seed_same_output():
    spec = SynthSpec(n_reps=6, period_jitter=0.2, noise_snr_db=5, seed=9)
    a, ta = synth_generate(spec)
    b, tb = synth_generate(spec)
    assert np.array_equal(a.values, b.values) and ta == tb
    c, _ = synth_generate(SynthSpec(n_reps=6, period_jitter=0.2, noise_snr_db=5, seed=10))
    assert not np.array_equal(a.values, c.values)


def test_truth_tiles_the_pulses():
    spec = SynthSpec(n_reps=7, base_period=40, period_jitter=0.25, lead_in=11, lead_out=5, seed=3)
    sig, truth = synth_generate(spec)
    assert len(truth) == 7
    assert truth.segments[0].start == 11
    assert truth.segments[-1].end == len(sig) - 5
    for a, b in zip(truth.segments, truth.segments[1:]):
        assert a.end == b.start
    for seg in truth.segments:
        assert 30 <= len(seg) <= 50
        assert sig.values[seg.start] == 0.0


def test_snr_is_honoured_within_five_percent():
    spec = SynthSpec(n_reps=200, base_period=50, noise_snr_db=10.0, seed=1)
    noisy, _ = synth_generate(spec)
    clean, _ = synth_generate(SynthSpec(n_reps=200, base_period=50, seed=1))
    noise = noisy.values - clean.values
    snr = 10 * np.log10(np.mean(clean.values ** 2) / np.mean(noise ** 2))
    assert abs(snr - 10.0) / 10.0 < 0.05


def test_alternating_amplitude():
    sig, truth = synth_generate(SynthSpec(n_reps=4, base_period=20, alt_amplitude=0.5))
    peaks = [sig.values[s.start:s.end].max() for s in truth.segments]
    assert peaks == pytest.approx([1.0, 0.5, 1.0, 0.5])


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(n_reps=0)
    with pytest.raises(ValidationError):
        SynthSpec(period_jitter=1.0)


def test_landmarks_follow_the_signal():
    sig, _ = synth_generate(SynthSpec(n_reps=3, base_period=30))
    series = synth_landmarks(sig, scale=20.0)
    assert series.n_landmarks == 68
    ap = lip_distance(series).values
    assert np.allclose(ap - ap[0], 20.0 * (sig.values - sig.values[0]))
