import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from cochsid.audio import AudioClip, save_wav
from cochsid.corruption import (ClipSpec, CorruptionError, CorruptionSpec, CorruptionTrace,
                                NoiseSource, add_reverb, apply_corruption, center_clip,
                                fit_noise_file, gen_pink_noise, gen_white_noise, measured_snr_db,
                                mix_at_snr, peak_clip, scaled_noise, schroeder_decay_db,
                                stage_seed, synth_rir)
from cochsid.experiment.synth import speaker_signatures, synth_utterance

from conftest import tone

SNRS = (-5.0, 0.0, 5.0, 10.0, 15.0)


def center_oracle(t, c):
    if t >= c:
        return t - c
    if t <= -c:
        return t + c
    return 0.0


def peak_oracle(t, c):
    return min(max(t, -c), c)


# ---------------------------------------------------------------- noise generators

def test_white_noise_statistics():
    x = gen_white_noise(10**6, 8000, seed=1).samples
    assert abs(x.mean()) <= 0.005
    assert abs(x.var() - 1.0) <= 0.01


def test_white_noise_determinism():
    a = gen_white_noise(1000, 8000, 7).samples
    np.testing.assert_array_equal(a, gen_white_noise(1000, 8000, 7).samples)
    assert np.any(a != gen_white_noise(1000, 8000, 8).samples)
    with pytest.raises(ValueError):
        gen_white_noise(0, 8000, 1)


def welch_slope_db_per_decade(x, fs, lo=50.0, hi=3000.0):
    f, p = signal.welch(x, fs=fs, nperseg=8192)
    band = (f >= lo) & (f <= hi)
    slope = np.polyfit(np.log10(f[band]), 10 * np.log10(p[band]), 1)[0]
    return slope


@pytest.mark.parametrize("fs", [8000, 16000])
def test_pink_psd_slope(fs):
    x = gen_pink_noise(2**18, fs, seed=3).samples
    assert welch_slope_db_per_decade(x, fs) == pytest.approx(-10.0, abs=1.5)


def test_pink_zero_mean_and_deterministic():
    x = gen_pink_noise(10**6, 8000, seed=4).samples
    assert abs(x.mean()) < 0.01
    np.testing.assert_array_equal(gen_pink_noise(5000, 8000, 9).samples,
                                  gen_pink_noise(5000, 8000, 9).samples)


def test_noise_source_validation():
    with pytest.raises(CorruptionError):
        NoiseSource("blue")
    with pytest.raises(CorruptionError):
        NoiseSource("file")
    with pytest.raises(CorruptionError):
        NoiseSource("white", file_path="x.wav")


def test_fit_noise_file_crop_and_tile():
    src = AudioClip(np.arange(10, dtype=float), 8000)
    crop = fit_noise_file(src, 4, seed=0).samples
    assert crop.size == 4 and np.all(np.diff(crop) == 1)
    tiled = fit_noise_file(src, 25, seed=0).samples
    assert tiled.size == 25
    np.testing.assert_array_equal(np.diff(tiled) % 10, np.ones(24))  # circular continuity
    np.testing.assert_array_equal(tiled, fit_noise_file(src, 25, seed=0).samples)


# ---------------------------------------------------------------- SNR mixing

def test_unit_powers_at_zero_db_have_unit_gain():
    s = AudioClip(np.array([1.0, -1.0, 1.0, -1.0]), 8000)
    n = AudioClip(np.array([-1.0, -1.0, 1.0, 1.0]), 8000)
    np.testing.assert_allclose(scaled_noise(s, n, 0.0), n.samples, rtol=0, atol=0)


def test_mix_minus_five_db():
    s = tone(300, 1.0, amp=0.3)
    n = gen_white_noise(8000, 8000, 2)
    mixed = mix_at_snr(s, n, -5.0)
    assert measured_snr_db(s.samples, mixed.samples - s.samples) == pytest.approx(-5.0, abs=1e-6)


def test_mix_is_not_renormalized():
    s = tone(300, 1.0, amp=0.9)
    out = mix_at_snr(s, gen_white_noise(8000, 8000, 2), -5.0)
    assert np.max(np.abs(out.samples)) > 1.0


def test_mix_tiles_short_noise():
    s = tone(300, 1.0)
    n = AudioClip(np.random.default_rng(0).standard_normal(3000), 8000)
    assert mix_at_snr(s, n, 0.0).samples.size == s.samples.size


def test_mix_errors():
    s = tone(300, 0.1)
    with pytest.raises(CorruptionError):
        mix_at_snr(AudioClip(np.zeros(800), 8000), gen_white_noise(800, 8000, 1), 0.0)
    with pytest.raises(CorruptionError):
        mix_at_snr(s, AudioClip(np.zeros(800), 8000), 0.0)
    with pytest.raises(CorruptionError):
        mix_at_snr(s, gen_white_noise(800, 16000, 1), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(SNRS), st.floats(1e-3, 10.0),
       st.sampled_from(["white", "pink"]))
def test_snr_exactness_property(seed, snr, scale, kind):
    g = np.random.default_rng(seed)
    speech = AudioClip(scale * g.standard_normal(800) * g.uniform(0, 1, 800), 8000)
    noise = NoiseSource(kind, seed=seed).render(800, 8000, 1)
    comp = scaled_noise(speech, noise, snr)
    assert measured_snr_db(speech.samples, comp) == pytest.approx(snr, abs=1e-6)


# ---------------------------------------------------------------- reverberation

def test_rir_length_and_direct_path():
    rir = synth_rir(200, sample_rate=8000, seed=0)
    assert rir.taps.size == 2400
    assert rir.taps[0] == 1.0
    assert np.all(np.isfinite(rir.taps))


def test_rir_envelope_60db_at_t60():
    t60 = 800
    k = int(t60 * 8000 / 1000)
    env = math.exp(-k * 3 * math.log(10) / k)
    assert 20 * math.log10(env) == pytest.approx(-60.0, abs=1e-9)


def crossing_ms(taps, fs, level=-60.0):
    edc = schroeder_decay_db(taps)
    return np.argmax(edc <= level) * 1000.0 / fs


@pytest.mark.parametrize("t60", [100, 200, 500, 800])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_schroeder_crossing(t60, seed):
    rir = synth_rir(t60, sample_rate=8000, seed=seed)
    assert crossing_ms(rir.taps, 8000) == pytest.approx(t60, rel=0.05)


def test_schroeder_crossing_200ms_within_10ms():
    assert crossing_ms(synth_rir(200, sample_rate=8000, seed=11).taps, 8000) == pytest.approx(200, abs=10)


@pytest.mark.parametrize("t60", [100, 200, 500, 800])
def test_expected_tail_energy_beyond_t60(t60):
    fs = 8000
    n_t60 = int(t60 * fs / 1000)
    k = np.arange(int(math.ceil(1.5 * n_t60)))
    env2 = np.exp(-2 * k * 3 * math.log(10) / n_t60)
    env2[0] = 1.0  # unit direct path
    assert env2[n_t60:].sum() / env2.sum() <= 1e-6


def test_rir_rejects_nonpositive_t60():
    with pytest.raises(ValueError):
        synth_rir(0)


def test_reverb_identity_and_hand_case():
    clip = AudioClip(np.random.default_rng(0).standard_normal(100), 8000)
    unit = type(synth_rir(100))(np.array([1.0]), 8000, 1.0)
    np.testing.assert_array_equal(add_reverb(clip, unit).samples, clip.samples)
    two = type(unit)(np.array([1.0, 0.5]), 8000, 1.0)
    np.testing.assert_allclose(add_reverb(AudioClip(np.array([1.0, 0.0, 0.0]), 8000), two).samples,
                               [1.0, 0.5, 0.0], atol=1e-15)


def test_reverb_matches_naive_convolution():
    g = np.random.default_rng(4)
    x = g.standard_normal(1000)
    h = g.standard_normal(100)
    rir = type(synth_rir(100))(h, 8000, 1.0)
    y = add_reverb(AudioClip(x, 8000), rir).samples
    naive = np.zeros(1000)
    for n in range(1000):
        for k in range(min(n + 1, 100)):
            naive[n] += h[k] * x[n - k]
    assert np.max(np.abs(y - naive)) <= 1e-12


def test_reverb_rate_mismatch():
    with pytest.raises(CorruptionError):
        add_reverb(AudioClip(np.zeros(10), 16000), synth_rir(100, sample_rate=8000))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_reverb_linearity(seed, a, b):
    g = np.random.default_rng(seed)
    x, y = g.standard_normal(500), g.standard_normal(500)
    rir = synth_rir(50, sample_rate=8000, seed=seed)
    lhs = add_reverb(AudioClip(a * x + b * y, 8000), rir).samples
    rhs = a * add_reverb(AudioClip(x, 8000), rir).samples + b * add_reverb(AudioClip(y, 8000), rir).samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


# ---------------------------------------------------------------- clipping

def test_center_clip_examples():
    out = center_clip(AudioClip(np.array([1.0, 0.2, -0.5]), 8000), 0.3).samples
    np.testing.assert_allclose(out, [0.7, 0.0, -0.2], atol=1e-15)
    full = center_clip(AudioClip(np.array([1.0, -1.0, 0.4]), 8000), 1.0).samples
    np.testing.assert_array_equal(full, [0.0, 0.0, 0.0])


def test_peak_clip_examples():
    out = peak_clip(AudioClip(np.array([1.0, 0.3, -0.8]), 8000), 0.5).samples
    np.testing.assert_array_equal(out, [0.5, 0.3, -0.5])
    x = np.random.default_rng(0).standard_normal(100)
    np.testing.assert_array_equal(peak_clip(AudioClip(x, 8000), 1.0).samples, x)


def test_clip_on_silence():
    for fn in (center_clip, peak_clip):
        with pytest.raises(CorruptionError, match="cannot derive threshold"):
            fn(AudioClip(np.zeros(10), 8000), 0.5)


def test_center_clip_sine_power_pointwise():
    s = tone(100, 1.0)
    c = 0.3 * np.max(np.abs(s.samples))
    oracle = np.array([center_oracle(t, c) for t in s.samples])
    out = center_clip(s, 0.3).samples
    assert np.mean(out ** 2) == np.mean(oracle ** 2)


def test_peak_clip_sine_pointwise():
    s = tone(100, 1.0)
    c = 0.3 * np.max(np.abs(s.samples))
    out = peak_clip(s, 0.3).samples
    assert np.all(np.abs(out) <= c)
    below = np.abs(s.samples) <= c
    np.testing.assert_array_equal(out[below], s.samples[below])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_clipping_properties(seed, frac):
    x = np.random.default_rng(seed).standard_normal(200)
    c = frac * np.max(np.abs(x))
    zc = center_clip(AudioClip(x, 8000), frac).samples
    zp = peak_clip(AudioClip(x, 8000), frac).samples
    np.testing.assert_array_equal(center_clip(AudioClip(-x, 8000), frac).samples, -zc)
    np.testing.assert_array_equal(peak_clip(AudioClip(-x, 8000), frac).samples, -zp)
    assert np.all(np.abs(zc) <= np.abs(x))
    assert np.all(np.abs(zp) <= c)
    # order preserved among samples on the same clipped side
    hi = x >= c
    assert np.all(np.diff(zc[hi][np.argsort(x[hi])]) >= 0)


# ---------------------------------------------------------------- specs and composition

def test_spec_text_round_trip():
    text = "noise=file:babble.wav@-5dB;reverb=200ms;clip=center:0.6"
    spec = CorruptionSpec.parse(text)
    assert spec.noise.kind == "file" and spec.noise.file_path == "babble.wav"
    assert spec.snr_db == -5.0 and spec.reverb_delay_ms == 200.0
    assert spec.clip == ClipSpec("center", 0.6)
    assert spec.to_text() == text


@pytest.mark.parametrize("bad", ["", "noise=white", "noise=white@xdB", "reverb=-1ms",
                                 "reverb=0ms", "clip=side:0.5", "clip=peak:1.5", "foo=1",
                                 "noise=white@0dB;noise=pink@0dB", "clip=peak:0"])
def test_spec_parse_errors(bad):
    with pytest.raises(CorruptionError):
        CorruptionSpec.parse(bad)


def test_empty_spec_error():
    with pytest.raises(CorruptionError, match="empty corruption spec"):
        CorruptionSpec()
    with pytest.raises(CorruptionError):
        CorruptionSpec(noise=NoiseSource("white"), snr_db=float("inf"))


@settings(max_examples=50, deadline=None)
@given(st.one_of(st.none(), st.tuples(st.sampled_from(["white", "pink"]),
                                      st.integers(-20, 30).map(float))),
       st.one_of(st.none(), st.sampled_from([100.0, 200.0, 500.0, 800.0, 37.5])),
       st.one_of(st.none(), st.tuples(st.sampled_from(["center", "peak"]),
                                      st.sampled_from([0.3, 0.6, 0.9, 1.0]))))
def test_spec_round_trip_property(noise, reverb, clip):
    if noise is None and reverb is None and clip is None:
        return
    spec = CorruptionSpec(noise=NoiseSource(noise[0]) if noise else None,
                          snr_db=noise[1] if noise else None, reverb_delay_ms=reverb,
                          clip=ClipSpec(*clip) if clip else None)
    assert CorruptionSpec.parse(spec.to_text()) == spec


def test_noise_only_equals_mix_path():
    clip = tone(300, 0.5, amp=0.4)
    spec = CorruptionSpec(noise=NoiseSource("white", seed=3), snr_db=0.0)
    out = apply_corruption(clip, spec, seed=10)
    noise = spec.noise.render(clip.samples.size, 8000, stage_seed(10, "noise"))
    np.testing.assert_array_equal(out.samples, mix_at_snr(clip, noise, 0.0).samples)


def babble_file(path, fs=8000):
    sigs = speaker_signatures(4, seed=99)
    x = sum(synth_utterance(s, 3.0, fs, seed=i) for i, s in enumerate(sigs))
    save_wav(AudioClip(0.5 * x / np.max(np.abs(x)), fs), path)
    return path


def test_reverb_then_file_noise_snr(tmp_path):
    path = babble_file(tmp_path / "babble.wav")
    clip = tone(300, 1.0, amp=0.4)
    spec = CorruptionSpec.parse(f"noise=file:{path}@-5dB;reverb=200ms")
    trace = CorruptionTrace(np.empty(0))
    out = apply_corruption(clip, spec, seed=4, trace=trace)
    assert trace.measured_snr_db == pytest.approx(-5.0, abs=1e-6)
    np.testing.assert_allclose(out.samples, trace.reverberated + trace.noise_component, atol=0)
    dry = add_reverb(clip, synth_rir(200, sample_rate=8000, seed=stage_seed(4, "reverb")))
    np.testing.assert_array_equal(trace.reverberated, dry.samples)


def test_clip_applied_last():
    clip = tone(300, 0.5, amp=0.4)
    spec = CorruptionSpec.parse("noise=white@0dB;clip=peak:0.5")
    trace = CorruptionTrace(np.empty(0))
    out = apply_corruption(clip, spec, seed=1, trace=trace)
    mixed = trace.reverberated + trace.noise_component
    np.testing.assert_array_equal(out.samples, np.clip(mixed, -0.5 * np.abs(mixed).max(),
                                                       0.5 * np.abs(mixed).max()))


def test_apply_corruption_bit_reproducible():
    clip = tone(300, 0.5, amp=0.4)
    spec = CorruptionSpec.parse("noise=pink@5dB;reverb=100ms;clip=center:0.3")
    a = apply_corruption(clip, spec, seed=8).samples
    np.testing.assert_array_equal(a, apply_corruption(clip, spec, seed=8).samples)
    assert np.any(a != apply_corruption(clip, spec, seed=9).samples)
