import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afua.core import ConfigurationError
from afua.dsp import (FeatureScaler, Segment, SignalBuffer, count_crossings,
                      extract_features, highpass, resample, rms_envelope, scale_windows,
                      windowize, zcr_rate, FeatureSequence)
from afua.netsim import Label
from afua.synthgen import GenConfig, gen_chew, gen_nonchew, segment_rng

FS = 500.0


def tone(freq, duration, fs=FS, amp=1.0, phase=0.0):
    t = np.arange(int(round(duration * fs))) / fs
    return SignalBuffer(amp * np.sin(2 * np.pi * freq * t + phase), fs)


def butter2_hp_gain(f, fc, fs):
    """Magnitude of the bilinear-transformed 2nd-order Butterworth high-pass."""
    r = np.tan(np.pi * fc / fs) / np.tan(np.pi * f / fs)
    return 1.0 / np.sqrt(1.0 + r**4)


def steady_amplitude(x, fs, skip=1.0):
    tail = x[int(skip * fs):]
    return np.sqrt(2) * np.sqrt(np.mean(tail**2))


class TestHighpass:
    def test_removes_dc(self):
        out = highpass(SignalBuffer(np.full(1000, 3.0), FS), 20.0)
        assert np.abs(out.samples[int(FS):]).max() < 1e-3 * 3.0

    @pytest.mark.parametrize("freq", [5.0, 20.0, 50.0, 100.0, 200.0])
    def test_matches_analytic_response(self, freq):
        out = highpass(tone(freq, 6.0), 20.0)
        assert steady_amplitude(out.samples, FS) == pytest.approx(
            butter2_hp_gain(freq, 20.0, FS), rel=0.01)

    def test_passband_and_stopband(self):
        assert steady_amplitude(highpass(tone(100.0, 4.0), 20.0).samples, FS) == \
            pytest.approx(1.0, rel=0.05)
        att = steady_amplitude(highpass(tone(5.0, 6.0), 20.0).samples, FS)
        assert 20 * np.log10(att) <= -20.0

    def test_causal(self):
        x = np.zeros(400)
        x[200] = 1.0
        out = highpass(SignalBuffer(x, FS)).samples
        np.testing.assert_array_equal(out[:200], 0.0)

    @pytest.mark.parametrize("cutoff", [250.0, 300.0, 0.0])
    def test_rejects_bad_cutoff(self, cutoff):
        with pytest.raises(ConfigurationError):
            highpass(tone(10, 1), cutoff)


class TestResample:
    def test_identity(self):
        buf = tone(10, 1)
        out = resample(buf, FS)
        np.testing.assert_array_equal(out.samples, buf.samples)

    def test_low_tone_preserved(self):
        src = tone(10.0, 4.0, fs=20000.0)
        out = resample(src, 500.0)
        assert len(out.samples) == 2000
        ref = tone(10.0, 4.0).samples
        core = slice(250, 1750)  # away from the filter edges
        np.testing.assert_allclose(out.samples[core], ref[core], atol=0.02)
        assert steady_amplitude(out.samples[core], 500.0, 0) == pytest.approx(1.0, rel=0.02)

    def test_aliasing_suppressed(self):
        out = resample(tone(400.0, 4.0, fs=20000.0), 500.0)
        core = out.samples[250:1750]
        assert np.sqrt(2 * np.mean(core**2)) < 0.05

    def test_upsampling_rejected(self):
        with pytest.raises(ConfigurationError):
            resample(tone(10, 1), 1000.0)


class TestRms:
    def test_constant(self):
        out = rms_envelope(SignalBuffer(np.full(2000, -0.7), FS), 0.1)
        assert out.samples[-1] == pytest.approx(0.7, rel=1e-9)

    def test_sinusoid(self):
        out = rms_envelope(tone(50.0, 10.0, amp=1.3), tau_rms=1.0)
        assert out.samples[-500:].mean() == pytest.approx(1.3 / np.sqrt(2), rel=0.03)

    def test_zero(self):
        np.testing.assert_array_equal(rms_envelope(SignalBuffer(np.zeros(100), FS)).samples, 0)

    @given(st.floats(0.01, 100))
    def test_homogeneous(self, c):
        x = np.random.default_rng(0).normal(size=500)
        a = rms_envelope(SignalBuffer(c * x, FS)).samples
        b = c * rms_envelope(SignalBuffer(x, FS)).samples
        np.testing.assert_allclose(a, b, rtol=1e-10)
        assert np.all(a >= 0)


class TestZcr:
    @pytest.mark.parametrize("f0", [1.5, 3.0, 7.0, 40.0])
    def test_sinusoid(self, f0):
        frame = 2.0
        out = zcr_rate(tone(f0, 20.0, phase=0.3), frame)
        assert np.all(np.abs(out.samples - 2 * f0) <= 1.0 / frame + 1e-9)
        assert out.sample_rate == pytest.approx(1 / frame)

    def test_constant(self):
        out = zcr_rate(SignalBuffer(np.full(1000, 2.0), FS), 0.5)
        np.testing.assert_array_equal(out.samples, 0.0)

    def test_noise_robust(self):
        rng = np.random.default_rng(0)
        clean = tone(10.0, 20.0, phase=0.1)
        noisy = SignalBuffer(clean.samples + rng.normal(0, 0.1 / np.sqrt(2), clean.samples.size),
                             FS)  # SNR 20 dB
        a = zcr_rate(clean, 2.0, 0.1).samples
        b = zcr_rate(noisy, 2.0, 0.1).samples
        np.testing.assert_allclose(b, a, rtol=0.10)

    @given(st.floats(1e-3, 1e3))
    @settings(deadline=None, max_examples=30)
    def test_amplitude_invariant(self, c):
        x = np.random.default_rng(1).normal(size=2000)
        a = zcr_rate(SignalBuffer(x, FS), 0.5).samples
        b = zcr_rate(SignalBuffer(c * x, FS), 0.5).samples
        np.testing.assert_array_equal(a, b)

    def test_hysteresis_band(self):
        # excursions inside the band do not count
        x = np.array([1, -1, 1, -1, 0.05, -0.05, 0.05, 1, -1], dtype=float)
        assert count_crossings(x, 0.0) == 7  # signs + - + - + - + + -
        assert count_crossings(x, 0.2) == 5

    def test_hop(self):
        out = zcr_rate(tone(3.0, 10.0), 2.0, hop=1.0)
        assert len(out.samples) == 9 and out.sample_rate == 1.0


def chew_buffer(duration=48.0, seed=0):
    return gen_chew(duration, GenConfig(), segment_rng(seed, 0))


class TestExtractFeatures:
    def test_chew_rhythm(self):
        feats = extract_features(highpass(chew_buffer()))
        x0 = feats.values[40:, 0]  # after the first full frames
        assert np.median(x0) == pytest.approx(2 * 1.5, rel=0.3)

    def test_silence(self):
        feats = extract_features(SignalBuffer(np.zeros(int(30 * FS)), FS))
        np.testing.assert_array_equal(feats.values, 0.0)

    def test_noise_is_high(self):
        noise = highpass(SignalBuffer(np.random.default_rng(0).normal(size=int(48 * FS)), FS))
        chew = extract_features(highpass(chew_buffer())).values[40:]
        noisy = extract_features(noise).values[40:]
        assert np.median(noisy[:, 0]) > 2 * np.median(chew[:, 0])

    def test_rate_and_shape(self):
        feats = extract_features(highpass(chew_buffer(24.0)))
        assert feats.values.shape == (240, 2)
        np.testing.assert_allclose(feats.times()[:2], [0.1, 0.2])
        assert np.all(feats.values >= 0)

    def test_deterministic(self):
        buf = highpass(chew_buffer(24.0))
        a = extract_features(buf).values
        b = extract_features(buf).values
        assert np.array_equal(a, b)

    def test_too_short(self):
        with pytest.raises(ValueError):
            extract_features(SignalBuffer(np.zeros(100), FS))

    def test_talk_differs_from_chew(self):
        cfg = GenConfig()
        talk = extract_features(highpass(gen_nonchew(48.0, cfg, "talk", segment_rng(0, 1))))
        chew = extract_features(highpass(chew_buffer()))
        assert np.median(talk.values[40:, 0]) > np.median(chew.values[40:, 0])


class TestScaler:
    def test_percentiles_map_to_unit_interval(self):
        x = np.random.default_rng(0).uniform(0, 10, (1000, 2))
        sc = FeatureScaler.fit(x)
        y = sc.transform(x)
        assert y.min() == 0.0 and y.max() == 1.0
        np.testing.assert_allclose(sc.transform(np.percentile(x, 95, axis=0)), 1.0)
        np.testing.assert_allclose(sc.transform(np.percentile(x, 5, axis=0)), 0.0)

    def test_constant_feature(self):
        sc = FeatureScaler.fit(np.ones((10, 2)))
        assert np.all(np.isfinite(sc.transform(np.ones((3, 2)))))

    def test_round_trip(self):
        sc = FeatureScaler.fit(np.random.default_rng(1).normal(size=(50, 2)))
        sc2 = FeatureScaler.from_dict(sc.as_dict())
        np.testing.assert_array_equal(sc.lo, sc2.lo)
        np.testing.assert_array_equal(sc.hi, sc2.hi)


def seq(duration, rate=10.0):
    n = int(round(duration * rate))
    return FeatureSequence(values=np.arange(2 * n, dtype=float).reshape(n, 2), rate=rate)


class TestWindowize:
    def test_long_chewing_run(self):
        feats = seq(4 * 3600)
        w = windowize(feats, [Segment(0, 4 * 3600, Label.CHEWING, "chew")])
        assert len(w) == 600

    def test_remainder_dropped(self):
        assert len(windowize(seq(47), [Segment(0, 47, Label.CHEWING)])) == 1

    def test_straddling_window_dropped(self):
        manifest = [Segment(0, 12, Label.CHEWING), Segment(12, 48, Label.NOT_CHEWING)]
        w = windowize(seq(48), manifest)
        assert [x.t0 for x in w] == [24.0]
        assert w[0].label is Label.NOT_CHEWING

    def test_non_overlapping_and_exact_length(self):
        manifest = [Segment(0, 100, Label.CHEWING), Segment(100, 300, Label.NOT_CHEWING)]
        w = windowize(seq(300), manifest)
        for a, b in zip(w, w[1:]):
            assert b.t0 >= a.t0 + 24.0
        for x in w:
            assert x.duration == 24.0 and x.frames.shape == (240, 2)
            k = int(round(x.t0 * 10))
            np.testing.assert_array_equal(x.frames, seq(300).values[k:k + 240])

    def test_scale_windows_keeps_metadata(self):
        w = windowize(seq(48), [Segment(0, 48, Label.CHEWING, "chew")])
        sc = FeatureScaler(lo=np.zeros(2), hi=np.full(2, 1000.0))
        out = scale_windows(w, sc)
        assert [(x.t0, x.label, x.kind) for x in out] == [(x.t0, x.label, x.kind) for x in w]
        assert out[0].frames.max() <= 1.0
