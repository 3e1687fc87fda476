"""Signal synthesis and time-to-frequency transforms for the simulated theremin.

The simulated instrument emits short additive tones (8 harmonic partials with
geometrically decaying amplitudes), optionally buried in pink noise at a
requested SNR.  Perception happens in the frequency domain: a single
magnitude frame computed by one of three transforms (constant-Q, plain STFT,
or mel-scaled STFT), phase discarded.
"""

from __future__ import annotations

import enum
import functools
import math
import wave
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_SAMPLE_RATE = 22050
TONE_DURATION = 0.05  # seconds; one environment step emits one tone
N_PARTIALS = 8
PARTIAL_AMP = 0.4
PARTIAL_DECAY = 0.25  # amplitude of partial i is PARTIAL_AMP * PARTIAL_DECAY**i

_PINK_ROWS = 16
_MIN_CQT_KERNEL = 64  # shortest usable signal for the constant-Q transform


class TransformKind(str, enum.Enum):
    CQT = "cqt"
    STFT = "stft"
    MEL = "mel"


@dataclass(frozen=True)
class TimeSignal:
    """A mono time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class Spectrum:
    """Magnitude-only frequency frame: the agent's perceptual unit."""

    bins: np.ndarray
    bin_centers: np.ndarray
    kind: TransformKind

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        centers = np.asarray(self.bin_centers, dtype=np.float64)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "bin_centers", centers)
        if bins.shape != centers.shape or bins.ndim != 1:
            raise ValueError("bins and bin_centers must be 1-D and equal length")
        if np.any(bins < 0):
            raise ValueError("magnitudes must be non-negative")
        if np.any(np.diff(centers) <= 0):
            raise ValueError("bin_centers must be strictly increasing")

    @property
    def n_bins(self):
        return self.bins.size


@dataclass(frozen=True)
class TransformConfig:
    """Parameters of one magnitude transform.

    CQT bin centers follow ``f_min * 2**(k / bins_per_octave)``; STFT and mel
    analyse a single Hann-windowed frame of ``window_len`` samples zero-padded
    to ``fft_size``.
    """

    kind: TransformKind
    sample_rate: int = DEFAULT_SAMPLE_RATE
    window_len: int = 1103  # 50 ms at 22050 Hz
    fft_size: int = 2048
    f_min: float = 220.0
    bins_per_octave: int = 12
    cqt_bins: int = 60
    mel_filters: int = 64

    def __post_init__(self):
        if self.f_min < 0 or (self.kind is TransformKind.CQT and self.f_min <= 0):
            raise ValueError("f_min must be positive for the CQT")
        if self.kind is TransformKind.CQT:
            top = self.f_min * 2.0 ** ((self.cqt_bins - 1) / self.bins_per_octave)
            if top >= self.sample_rate / 2:
                raise ValueError("highest CQT center must stay below Nyquist")

    @property
    def n_bins(self) -> int:
        if self.kind is TransformKind.CQT:
            return self.cqt_bins
        if self.kind is TransformKind.STFT:
            return self.fft_size // 2 + 1
        return self.mel_filters

    def bin_centers(self) -> np.ndarray:
        if self.kind is TransformKind.CQT:
            k = np.arange(self.cqt_bins)
            return self.f_min * 2.0 ** (k / self.bins_per_octave)
        if self.kind is TransformKind.STFT:
            return np.arange(self.n_bins) * self.sample_rate / self.fft_size
        return _mel_edges(self)[1:-1]


def cqt_config(**kw) -> TransformConfig:
    return TransformConfig(kind=TransformKind.CQT, **kw)


def stft_config(**kw) -> TransformConfig:
    return TransformConfig(kind=TransformKind.STFT, **kw)


def mel_config(**kw) -> TransformConfig:
    kw.setdefault("f_min", 0.0)  # mel span starts at DC by default
    return TransformConfig(kind=TransformKind.MEL, **kw)


def make_config(kind: TransformKind | str, **kw) -> TransformConfig:
    kind = TransformKind(kind)
    factory = {
        TransformKind.CQT: cqt_config,
        TransformKind.STFT: stft_config,
        TransformKind.MEL: mel_config,
    }[kind]
    return factory(**kw)


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def synth_tone(freq: float, duration: float = TONE_DURATION,
               sample_rate: int = DEFAULT_SAMPLE_RATE) -> TimeSignal:
    """Additive theremin tone: 8 sine partials with amplitudes 0.4 * 4**-i.

    Rejects frequencies whose highest partial (8x the fundamental) would
    alias.
    """
    if freq <= 0:
        raise ValueError(f"frequency must be positive, got {freq}")
    if freq * N_PARTIALS >= sample_rate / 2:
        raise ValueError(
            f"highest partial {freq * N_PARTIALS:.1f} Hz would alias at "
            f"sample rate {sample_rate}"
        )
    if duration <= 0:
        raise ValueError("duration must be positive")
    # round half up: 50 ms at 22050 Hz is exactly 1102.5 -> 1103 samples
    t = np.arange(math.floor(duration * sample_rate + 0.5)) / sample_rate
    harmonics = np.arange(1, N_PARTIALS + 1)
    amps = PARTIAL_AMP * PARTIAL_DECAY ** np.arange(N_PARTIALS)
    samples = amps @ np.sin(2.0 * np.pi * freq * harmonics[:, None] * t)
    return TimeSignal(samples, sample_rate)


def pink_noise(length: int, seed: int,
               sample_rate: int = DEFAULT_SAMPLE_RATE) -> TimeSignal:
    """Pink (1/f) noise via summed subsampled uniform rows (Voss-McCartney).

    16 octave rows; row k holds a fresh Uniform(-1, 1) value for 2**k
    consecutive samples, with a per-row random phase offset so row updates do
    not align.  Output is normalized to zero mean and unit variance, and is a
    pure function of ``seed``.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    holds = 1 << np.arange(_PINK_ROWS)
    offsets = rng.integers(0, holds)
    counts = (length + offsets) // holds + 1
    flat = rng.uniform(-1.0, 1.0, int(counts.sum()))
    total = np.zeros(length)
    pos = 0
    for hold, offset, count in zip(holds, offsets, counts):
        vals = flat[pos:pos + count]
        pos += count
        total += np.repeat(vals, hold)[offset:offset + length]
    total -= total.mean()
    std = total.std()
    if std > 0:
        total /= std
    return TimeSignal(total, sample_rate)


def mix_snr(signal: TimeSignal, noise: TimeSignal, snr_db: float) -> TimeSignal:
    """Add ``noise`` to ``signal``, rescaled for the requested SNR in dB.

    Powers are mean squares; the noise is scaled so that
    10*log10(P_signal / P_noise) equals ``snr_db`` exactly.
    """
    if len(signal) != len(noise) or signal.sample_rate != noise.sample_rate:
        raise ValueError("signal and noise must share length and sample rate")
    p_sig = np.mean(signal.samples ** 2)
    p_noise = np.mean(noise.samples ** 2)
    if p_sig == 0.0 or p_noise == 0.0:
        raise ValueError("SNR is undefined for a zero-power signal or noise")
    scale = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return TimeSignal(signal.samples + scale * noise.samples, signal.sample_rate)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _hann(n: int) -> np.ndarray:
    # periodic form, 0.5 - 0.5*cos(2*pi*k/n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(sig: TimeSignal, cfg: TransformConfig) -> Spectrum:
    """One magnitude frame of a Hann-windowed, zero-padded real FFT.

    Magnitudes are scaled by 2/sum(window) so a full-scale sine sitting on a
    bin center reads approximately its amplitude.
    """
    if cfg.kind is not TransformKind.STFT:
        raise ValueError("config kind must be STFT")
    if len(sig) < cfg.window_len:
        raise ValueError(
            f"signal of {len(sig)} samples is shorter than the "
            f"{cfg.window_len}-sample analysis window"
        )
    window = _hann(cfg.window_len)
    frame = sig.samples[:cfg.window_len] * window
    mags = np.abs(np.fft.rfft(frame, n=cfg.fft_size)) * (2.0 / window.sum())
    return Spectrum(mags, cfg.bin_centers(), TransformKind.STFT)


def _mel_of(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_edges(cfg: TransformConfig) -> np.ndarray:
    """mel_filters + 2 band edges in Hz, equally spaced on the mel scale."""
    lo = _mel_of(cfg.f_min)
    hi = _mel_of(cfg.sample_rate / 2.0)
    return _mel_to_hz(np.linspace(lo, hi, cfg.mel_filters + 2))


@functools.lru_cache(maxsize=8)
def _mel_bank(cfg: TransformConfig) -> np.ndarray:
    stft_freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    edges = _mel_edges(cfg)
    bank = np.zeros((cfg.mel_filters, stft_freqs.size))
    for j in range(cfg.mel_filters):
        lo, center, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (stft_freqs - lo) / (center - lo)
        falling = (hi - stft_freqs) / (hi - center)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
        row_sum = bank[j].sum()
        if row_sum > 0:
            bank[j] /= row_sum
    return bank


def mel_filterbank(cfg: TransformConfig) -> np.ndarray:
    """(mel_filters, stft_bins) triangular weights, each row summing to 1."""
    return _mel_bank(cfg).copy()


def mel_scale(spec: Spectrum, cfg: TransformConfig) -> Spectrum:
    """Apply the triangular mel filterbank to an STFT magnitude frame."""
    if spec.kind is not TransformKind.STFT:
        raise ValueError("mel scaling expects an STFT spectrum")
    bank = _mel_bank(cfg)
    if bank.shape[1] != spec.n_bins:
        raise ValueError("spectrum bin count does not match the filterbank")
    return Spectrum(bank @ spec.bins, cfg.bin_centers(), TransformKind.MEL)


def cqt_kernel_lengths(cfg: TransformConfig, signal_len: int) -> np.ndarray:
    """Per-bin analysis lengths: ceil(fs * Q / f_k), capped at the signal."""
    q_factor = 1.0 / (2.0 ** (1.0 / cfg.bins_per_octave) - 1.0)
    lengths = np.ceil(cfg.sample_rate * q_factor / cfg.bin_centers()).astype(int)
    return np.minimum(lengths, signal_len)


@functools.lru_cache(maxsize=8)
def _cqt_kernels(cfg: TransformConfig, signal_len: int) -> np.ndarray:
    """(n_bins, signal_len) kernel matrix; row k is zero beyond its length."""
    centers = cfg.bin_centers()
    lengths = cqt_kernel_lengths(cfg, signal_len)
    kernels = np.zeros((centers.size, signal_len), dtype=np.complex128)
    for k, (f_k, length) in enumerate(zip(centers, lengths)):
        n = np.arange(length)
        kernels[k, :length] = (
            _hann(length) * np.exp(-2j * np.pi * f_k * n / cfg.sample_rate) / length
        )
    return kernels


def cqt_magnitude(sig: TimeSignal, cfg: TransformConfig) -> Spectrum:
    """Constant-Q magnitudes: Hann-windowed complex kernels at 2**(k/12) spacing.

    Each bin is |mean(x[:L] * w * exp(-2j*pi*f_k*n/fs))| with L the bin's
    kernel length (truncated to the signal when the signal is shorter).
    """
    if cfg.kind is not TransformKind.CQT:
        raise ValueError("config kind must be CQT")
    if len(sig) < _MIN_CQT_KERNEL:
        raise ValueError(
            f"signal of {len(sig)} samples is too short for the CQT "
            f"(minimum {_MIN_CQT_KERNEL})"
        )
    mags = np.abs(_cqt_kernels(cfg, len(sig)) @ sig.samples)
    return Spectrum(mags, cfg.bin_centers(), TransformKind.CQT)


def transform(sig: TimeSignal, cfg: TransformConfig) -> Spectrum:
    """Dispatch to the configured transform (mel = STFT then filterbank)."""
    if cfg.kind is TransformKind.CQT:
        return cqt_magnitude(sig, cfg)
    if cfg.kind is TransformKind.STFT:
        return stft_magnitude(sig, cfg)
    stft = stft_magnitude(sig, replace(cfg, kind=TransformKind.STFT))
    return mel_scale(stft, cfg)


# ---------------------------------------------------------------------------
# WAV export
# ---------------------------------------------------------------------------

def write_wav(path, sig: TimeSignal) -> None:
    """Write a mono 16-bit PCM RIFF/WAV file; samples are clipped to [-1, 1]."""
    pcm = (np.clip(sig.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sig.sample_rate)
        fh.writeframes(pcm.tobytes())
