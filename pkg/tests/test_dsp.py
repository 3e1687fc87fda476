"""Tone synthesis, noise, SNR mixing and transform tests.

Transforms are checked against independent oracles: a naive O(N^2) DFT for
the STFT and per-bin direct kernel evaluation for the CQT.
"""

import math
import wave

import numpy as np
import pytest

from theremin_rl import dsp
from theremin_rl.dsp import TimeSignal, TransformKind

SR = dsp.DEFAULT_SAMPLE_RATE


def naive_dft_magnitude(frame, fft_size, window):
    """O(N^2) reference: same windowing/scaling contract, independent math."""
    windowed = np.zeros(fft_size)
    windowed[:len(frame)] = np.asarray(frame) * window
    n_bins = fft_size // 2 + 1
    mags = np.empty(n_bins)
    for k in range(n_bins):
        acc = 0.0 + 0.0j
        for n_idx, x in enumerate(windowed):
            if x != 0.0:
                acc += x * np.exp(-2j * np.pi * k * n_idx / fft_size)
        mags[k] = abs(acc)
    return mags * (2.0 / window.sum())


def hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def cqt_oracle_bin(sig, cfg, k):
    """Direct evaluation of one constant-Q bin, scalar accumulation."""
    f_k = cfg.f_min * 2.0 ** (k / cfg.bins_per_octave)
    q = 1.0 / (2.0 ** (1.0 / cfg.bins_per_octave) - 1.0)
    length = min(int(math.ceil(cfg.sample_rate * q / f_k)), len(sig))
    w = hann(length)
    acc = 0.0 + 0.0j
    for n_idx in range(length):
        angle = -2.0 * np.pi * f_k * n_idx / cfg.sample_rate
        acc += sig.samples[n_idx] * w[n_idx] * complex(np.cos(angle), np.sin(angle))
    return abs(acc) / length


class TestSynthTone:
    def test_fundamental_amplitude_coefficient(self):
        # partial i carries amplitude 0.4 * (1/4)**i
        assert dsp.PARTIAL_AMP == 0.4
        assert dsp.PARTIAL_DECAY == 0.25
        assert dsp.N_PARTIALS == 8

    def test_first_sample_is_zero(self):
        for f in (440.0, 661.3, 123.4):
            assert dsp.synth_tone(f).samples[0] == 0.0

    def test_fifty_ms_is_1103_samples(self):
        assert len(dsp.synth_tone(440.0)) == 1103

    def test_peak_amplitude_bound(self):
        bound = sum(0.4 * 0.25 ** i for i in range(8))
        sig = dsp.synth_tone(440.0, duration=0.5)
        assert np.max(np.abs(sig.samples)) <= bound < 0.534

    def test_dft_peak_in_fundamental_bin_and_partial_ratio(self):
        sig = dsp.synth_tone(440.0)
        fft_size = 4096
        mags = naive_dft_magnitude(sig.samples, fft_size, hann(len(sig)))
        freqs = np.arange(mags.size) * SR / fft_size
        peak = int(np.argmax(mags))
        assert abs(freqs[peak] - 440.0) < SR / fft_size
        second = int(np.argmin(np.abs(freqs - 880.0)))
        ratio = mags[second] / mags[peak]
        assert ratio == pytest.approx(0.25, rel=0.02)

    def test_partial_amplitude_geometry(self):
        sig = dsp.synth_tone(440.0)
        fft_size = 8192
        mags = naive_dft_magnitude(sig.samples, fft_size, hann(len(sig)))
        freqs = np.arange(mags.size) * SR / fft_size
        base = mags[int(np.argmin(np.abs(freqs - 440.0)))]
        for i in range(8):
            k = int(np.argmin(np.abs(freqs - 440.0 * (i + 1))))
            assert mags[k] / base == pytest.approx(0.25 ** i, rel=0.02)

    def test_rejects_bad_frequencies(self):
        with pytest.raises(ValueError):
            dsp.synth_tone(0.0)
        with pytest.raises(ValueError):
            dsp.synth_tone(-10.0)
        with pytest.raises(ValueError):
            dsp.synth_tone(1400.0)  # 8th partial would alias at 22050 Hz

    def test_deterministic(self):
        a = dsp.synth_tone(523.25)
        b = dsp.synth_tone(523.25)
        assert np.array_equal(a.samples, b.samples)


class TestPinkNoise:
    def test_same_seed_bit_identical(self):
        a = dsp.pink_noise(4096, seed=7)
        b = dsp.pink_noise(4096, seed=7)
        assert np.array_equal(a.samples, b.samples)

    def test_different_seeds_differ(self):
        a = dsp.pink_noise(4096, seed=7)
        b = dsp.pink_noise(4096, seed=8)
        assert not np.array_equal(a.samples, b.samples)

    def test_unit_variance_zero_mean(self):
        sig = dsp.pink_noise(2 ** 16, seed=3)
        assert sig.samples.std() == pytest.approx(1.0, abs=1e-9)
        assert abs(sig.samples.mean()) <= 0.05

    def test_psd_slope_near_minus_one(self):
        # Welch-style oracle: 100 averaged Hann-windowed periodograms
        n, n_seg = 2 ** 16, 100
        sig = dsp.pink_noise(n, seed=0).samples
        seg = n // n_seg
        frames = sig[:seg * n_seg].reshape(n_seg, seg) * np.hanning(seg)
        psd = np.mean(np.abs(np.fft.rfft(frames, axis=1)) ** 2, axis=0)
        freqs = np.arange(psd.size) * SR / seg
        band = (freqs >= 100.0) & (freqs <= 5000.0)
        design = np.vstack([np.log10(freqs[band]), np.ones(band.sum())]).T
        slope = np.linalg.lstsq(design, np.log10(psd[band]), rcond=None)[0][0]
        assert -1.3 <= slope <= -0.7

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            dsp.pink_noise(0, seed=1)


class TestMixSnr:
    def test_power_ratio_definition_at_38db(self):
        assert 10.0 ** 3.8 == pytest.approx(6309.57, rel=1e-4)
        sig = dsp.synth_tone(440.0)
        noise = dsp.pink_noise(len(sig), seed=0)
        mixed = dsp.mix_snr(sig, noise, 38.0)
        added = mixed.samples - sig.samples
        ratio = np.mean(sig.samples ** 2) / np.mean(added ** 2)
        assert ratio == pytest.approx(10.0 ** 3.8, rel=1e-9)

    def test_zero_db_equal_power(self):
        sig = dsp.synth_tone(440.0)
        noise = dsp.pink_noise(len(sig), seed=1)
        mixed = dsp.mix_snr(sig, noise, 0.0)
        added = mixed.samples - sig.samples
        assert np.mean(added ** 2) == pytest.approx(np.mean(sig.samples ** 2),
                                                    rel=1e-9)

    @pytest.mark.parametrize("snr_db", [38.0, 16.0, 8.0, 0.0, -3.0])
    def test_measured_snr_within_hundredth_db(self, snr_db):
        sig = dsp.synth_tone(660.0)
        noise = dsp.pink_noise(len(sig), seed=2)
        mixed = dsp.mix_snr(sig, noise, snr_db)
        added = mixed.samples - sig.samples
        measured = 10.0 * np.log10(np.mean(sig.samples ** 2)
                                   / np.mean(added ** 2))
        assert measured == pytest.approx(snr_db, abs=0.01)

    def test_zero_power_errors(self):
        sig = dsp.synth_tone(440.0)
        silent = TimeSignal(np.zeros(len(sig)), SR)
        with pytest.raises(ValueError):
            dsp.mix_snr(silent, dsp.pink_noise(len(sig), 0), 10.0)
        with pytest.raises(ValueError):
            dsp.mix_snr(sig, silent, 10.0)

    def test_length_mismatch_errors(self):
        with pytest.raises(ValueError):
            dsp.mix_snr(dsp.synth_tone(440.0), dsp.pink_noise(10, 0), 10.0)


class TestStft:
    CFG = dsp.stft_config()

    def test_pure_sine_440_peaks_in_bin_41(self):
        t = np.arange(self.CFG.window_len) / SR
        sig = TimeSignal(np.sin(2 * np.pi * 440.0 * t), SR)
        spec = dsp.stft_magnitude(sig, self.CFG)
        assert int(np.argmax(spec.bins)) == round(440 * 2048 / 22050) == 41

    def test_all_zero_signal_gives_zero_spectrum(self):
        spec = dsp.stft_magnitude(TimeSignal(np.zeros(1103), SR), self.CFG)
        assert np.all(spec.bins == 0.0)

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(5)
        window = hann(self.CFG.window_len)
        for _ in range(3):
            samples = rng.standard_normal(self.CFG.window_len)
            spec = dsp.stft_magnitude(TimeSignal(samples, SR), self.CFG)
            oracle = naive_dft_magnitude(samples, self.CFG.fft_size, window)
            assert np.max(np.abs(spec.bins - oracle)) < 1e-9

    def test_scaling_linearity(self):
        rng = np.random.default_rng(6)
        samples = rng.standard_normal(1103)
        base = dsp.stft_magnitude(TimeSignal(samples, SR), self.CFG)
        scaled = dsp.stft_magnitude(TimeSignal(2.5 * samples, SR), self.CFG)
        assert np.max(np.abs(scaled.bins - 2.5 * base.bins)) < 1e-9

    def test_bin_centers(self):
        spec = dsp.stft_magnitude(dsp.synth_tone(440.0), self.CFG)
        assert spec.n_bins == 1025
        assert np.allclose(spec.bin_centers,
                           np.arange(1025) * SR / 2048)

    def test_short_signal_errors(self):
        with pytest.raises(ValueError):
            dsp.stft_magnitude(TimeSignal(np.zeros(100), SR), self.CFG)

    def test_deterministic(self):
        a = dsp.stft_magnitude(dsp.synth_tone(440.0), self.CFG)
        b = dsp.stft_magnitude(dsp.synth_tone(440.0), self.CFG)
        assert np.array_equal(a.bins, b.bins)


class TestMel:
    CFG = dsp.mel_config()

    def test_rows_sum_to_one(self):
        bank = dsp.mel_filterbank(self.CFG)
        assert bank.shape == (64, 1025)
        assert np.max(np.abs(bank.sum(axis=1) - 1.0)) < 1e-9

    def test_zero_in_zero_out(self):
        stft = dsp.stft_magnitude(TimeSignal(np.zeros(1103), SR),
                                  dsp.stft_config())
        mel = dsp.mel_scale(stft, self.CFG)
        assert np.all(mel.bins == 0.0)

    def test_440_peaks_at_nearest_band(self):
        spec = dsp.transform(dsp.synth_tone(440.0), self.CFG)
        nearest = int(np.argmin(np.abs(spec.bin_centers - 440.0)))
        assert int(np.argmax(spec.bins)) == nearest

    def test_requires_stft_input(self):
        cqt = dsp.transform(dsp.synth_tone(440.0), dsp.cqt_config())
        with pytest.raises(ValueError):
            dsp.mel_scale(cqt, self.CFG)


class TestCqt:
    CFG = dsp.cqt_config()

    def test_bin_center_spacing_is_semitone(self):
        centers = self.CFG.bin_centers()
        ratios = centers[1:] / centers[:-1]
        assert np.allclose(ratios, 2.0 ** (1.0 / 12.0), rtol=0, atol=1e-12)

    def test_chromatic_tones_hit_their_bins(self):
        # goal notes sit at exact bin centers: f = f_min * 2**(k/12)
        for k in range(12, 24):
            f = 220.0 * 2.0 ** (k / 12.0)
            spec = dsp.cqt_magnitude(dsp.synth_tone(f), self.CFG)
            assert int(np.argmax(spec.bins)) == k

    def test_adjacent_chromatic_notes_distinguishable(self):
        freqs = 440.0 * 2.0 ** (np.arange(12) / 12.0)
        argmaxes = [int(np.argmax(dsp.cqt_magnitude(dsp.synth_tone(f),
                                                    self.CFG).bins))
                    for f in freqs]
        assert len(set(argmaxes)) == 12

    def test_matches_direct_kernel_oracle(self):
        rng = np.random.default_rng(11)
        sig = TimeSignal(rng.standard_normal(1103), SR)
        spec = dsp.cqt_magnitude(sig, self.CFG)
        for k in (0, 7, 23, 41, 59):
            assert spec.bins[k] == pytest.approx(cqt_oracle_bin(sig, self.CFG, k),
                                                 abs=1e-9)

    def test_zero_signal(self):
        spec = dsp.cqt_magnitude(TimeSignal(np.zeros(1103), SR), self.CFG)
        assert np.all(spec.bins == 0.0)

    def test_too_short_signal_errors(self):
        with pytest.raises(ValueError):
            dsp.cqt_magnitude(TimeSignal(np.zeros(32), SR), self.CFG)

    def test_highest_center_below_nyquist(self):
        assert self.CFG.bin_centers()[-1] < SR / 2
        with pytest.raises(ValueError):
            dsp.cqt_config(cqt_bins=80)


class TestWav:
    def test_riff_header_and_payload(self, tmp_path):
        sig = dsp.synth_tone(440.0)
        path = tmp_path / "tone.wav"
        dsp.write_wav(path, sig)
        raw = path.read_bytes()
        assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
        with wave.open(str(path), "rb") as fh:
            assert fh.getnchannels() == 1
            assert fh.getsampwidth() == 2
            assert fh.getframerate() == SR
            assert fh.getnframes() == len(sig)

    def test_roundtrip_amplitude(self, tmp_path):
        samples = np.array([0.0, 0.5, -0.5, 1.0, -1.0])
        path = tmp_path / "ramp.wav"
        dsp.write_wav(path, TimeSignal(samples, 8000))
        with wave.open(str(path), "rb") as fh:
            decoded = np.frombuffer(fh.readframes(5), dtype="<i2") / 32767.0
        assert np.allclose(decoded, samples, atol=1e-4)
