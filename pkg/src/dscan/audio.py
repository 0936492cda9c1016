"""Audio frontend: PCM clips to 128 x 156 log-mel features.

Conventions: Hamming window, FFT size = frame length rounded up to the next
power of two, HTK mel scale (2595 * log10(1 + f/700)) spanning 0 .. sr/2,
log floor 1e-10. Clips are resampled to 16 kHz by linear interpolation, and
the time axis is edge-padded or center-cropped to exactly 156 frames so the
encoder's stride-2 first layer lands on a 64 x 78 feature map.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

SAMPLE_RATE = 16000
FRAME_MS = 128
HOP_MS = 64
N_MELS = 128
TARGET_FRAMES = 156
LOG_FLOOR = 1e-10


@dataclass
class AudioClip:
    samples: np.ndarray   # float PCM in [-1, 1]
    sample_rate: int
    clip_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError(f"clip {self.clip_id!r}: samples must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise InputError(f"clip {self.clip_id!r}: sample_rate must be positive")


@dataclass
class LogMelFeature:
    matrix: np.ndarray    # (N_MELS, TARGET_FRAMES) float32
    clip_id: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.shape != (N_MELS, TARGET_FRAMES):
            raise InputError(
                f"clip {self.clip_id!r}: feature must be {N_MELS}x{TARGET_FRAMES}, "
                f"got {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise InputError(f"clip {self.clip_id!r}: feature contains non-finite values")


def read_wav(path, clip_id=None):
    """Read a RIFF/WAVE file (16-bit PCM; stereo is downmixed by averaging)."""
    with wave.open(str(path), "rb") as wav:
        if wav.getsampwidth() != 2:
            raise InputError(f"{path}: only 16-bit PCM WAV is supported "
                             f"(got sample width {wav.getsampwidth()})")
        n_channels = wav.getnchannels()
        sample_rate = wav.getframerate()
        raw = wav.readframes(wav.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples=data, sample_rate=sample_rate,
                     clip_id=clip_id if clip_id is not None else str(path))


def resample_linear(clip, target_rate=SAMPLE_RATE):
    """Resample by linear interpolation (adequate at this scale)."""
    if clip.sample_rate == target_rate:
        return clip
    duration = len(clip.samples) / clip.sample_rate
    n_out = max(1, int(round(duration * target_rate)))
    t_in = np.arange(len(clip.samples)) / clip.sample_rate
    t_out = np.arange(n_out) / target_rate
    return AudioClip(samples=np.interp(t_out, t_in, clip.samples),
                     sample_rate=target_rate, clip_id=clip.clip_id)


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


def stft_power(clip, frame_ms=FRAME_MS, hop_ms=HOP_MS):
    """Magnitude-squared spectrum per Hamming-windowed frame; (bins, T_raw)."""
    frame_len = int(round(clip.sample_rate * frame_ms / 1000.0))
    hop = int(round(clip.sample_rate * hop_ms / 1000.0))
    if len(clip.samples) < frame_len:
        raise InputError(
            f"clip {clip.clip_id!r}: {len(clip.samples)} samples is shorter than one "
            f"{frame_len}-sample frame")
    n_frames = 1 + (len(clip.samples) - frame_len) // hop
    n_fft = _next_pow2(frame_len)
    window = np.hamming(frame_len)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, frame_len)[::hop][:n_frames]
    spectrum = np.fft.rfft(frames * window, n=n_fft, axis=1)
    return (spectrum.real ** 2 + spectrum.imag ** 2).T  # (bins, T_raw)


def mel_filterbank(n_mels, n_bins, sample_rate, f_lo=0.0, f_hi=None):
    """Triangular HTK-mel filters mapped onto rfft bin centers; (n_mels, n_bins)."""
    if n_mels > n_bins:
        raise ConfigurationError(f"n_mels={n_mels} exceeds available FFT bins {n_bins}")
    if f_hi is None:
        f_hi = sample_rate / 2.0

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    mel_points = np.linspace(hz_to_mel(f_lo), hz_to_mel(f_hi), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    n_fft = 2 * (n_bins - 1)
    bin_freqs = np.arange(n_bins) * sample_rate / n_fft
    bank = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def mel_project(power_spec, n_mels=N_MELS, sample_rate=SAMPLE_RATE, f_lo=0.0, f_hi=None):
    """Apply the triangular mel filterbank per frame; output is non-negative."""
    power_spec = np.asarray(power_spec, dtype=np.float64)
    bank = mel_filterbank(n_mels, power_spec.shape[0], sample_rate, f_lo, f_hi)
    return bank @ power_spec


def log_compress_and_canonicalize(mel_spec, clip_id="", target_frames=TARGET_FRAMES):
    """log(mel + floor), then pad (edge replication) or center-crop to T frames."""
    mel_spec = np.asarray(mel_spec, dtype=np.float64)
    if np.any(mel_spec < 0):
        raise InputError("mel spectrogram must be non-negative")
    logmel = np.log(mel_spec + LOG_FLOOR)
    t = logmel.shape[1]
    if t < target_frames:
        logmel = np.pad(logmel, ((0, 0), (0, target_frames - t)), mode="edge")
    elif t > target_frames:
        excess = t - target_frames
        start = excess // 2
        logmel = logmel[:, start:start + target_frames]
    return LogMelFeature(matrix=logmel.astype(np.float32), clip_id=clip_id)


def clip_to_logmel(clip, frame_ms=FRAME_MS, hop_ms=HOP_MS, n_mels=N_MELS,
                   sample_rate=SAMPLE_RATE, target_frames=TARGET_FRAMES):
    """Full frontend: resample, STFT power, mel projection, log + canonical T."""
    clip = resample_linear(clip, sample_rate)
    power = stft_power(clip, frame_ms=frame_ms, hop_ms=hop_ms)
    mel = mel_project(power, n_mels=n_mels, sample_rate=sample_rate)
    return log_compress_and_canonicalize(mel, clip_id=clip.clip_id,
                                         target_frames=target_frames)
