"""Acoustic feature extraction: log-mel filterbanks + energy, deltas, double-deltas.

Input is 16 kHz mono audio. Frames are 512 samples (32 ms) with hop 256,
windowed by a periodic Hann. Each frame yields 40 log-mel coefficients
(triangular filters over 0-8 kHz applied to the magnitude spectrum) plus a
log-energy column; delta and delta-delta regression over a +/-2 frame window
brings the dimensionality to 123. Computation runs in float64, storage is
float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FEATURE_CACHE_MAGIC = b"PLFC"
FEATURE_CACHE_VERSION = 1


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 16000
    window: int = 512
    hop: int = 256
    n_mels: int = 40
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    delta_window: int = 2

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    @property
    def dim(self) -> int:
        # static | delta | delta-delta
        return 3 * (self.n_mels + 1)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window:
            raise ValueError(
                f"input too short: {n_samples} samples < window {self.window}"
            )
        return (n_samples - self.window) // self.hop + 1

    def duration(self, n_frames: int) -> float:
        """Seconds of audio covered by n_frames consecutive frames."""
        return ((n_frames - 1) * self.hop + self.window) / self.sample_rate


@dataclass
class FeatureMatrix:
    """Per-segment (or per-song) acoustic features, N frames x F dims."""

    data: np.ndarray  # (N, F) float32
    frame_rate: float
    layout: str = "static41|delta41|deltadelta41"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature matrix contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(wave: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Slice a waveform into overlapping Hann-windowed frames.

    Returns an (N, window) float64 array; raises on input shorter than one
    window.
    """
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise ValueError(f"expected mono 1-D waveform, got shape {wave.shape}")
    n = config.n_frames(wave.shape[0])
    idx = np.arange(config.window)[None, :] + config.hop * np.arange(n)[:, None]
    return wave[idx] * periodic_hann(config.window)[None, :]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Triangular mel filters as an (n_mels, n_fft_bins) weight matrix."""
    n_bins = config.window // 2 + 1
    fft_freqs = np.arange(n_bins) * config.sample_rate / config.window
    mel_pts = np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    weights = np.zeros((config.n_mels, n_bins))
    for k in range(config.n_mels):
        lo, mid, hi = hz_pts[k], hz_pts[k + 1], hz_pts[k + 2]
        rising = (fft_freqs - lo) / (mid - lo)
        falling = (hi - fft_freqs) / (hi - mid)
        weights[k] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def logmel_energy(frames: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Map windowed frames to (N, n_mels + 1): log-mel bands plus log energy."""
    frames = np.asarray(frames, dtype=np.float64)
    spectrum = np.abs(np.fft.rfft(frames, n=config.window, axis=1))
    mel = spectrum @ mel_filterbank(config).T
    energy = np.sum(frames**2, axis=1, keepdims=True)
    return np.log(np.concatenate([mel, energy], axis=1) + config.log_floor)


def _regression_delta(feat: np.ndarray, window: int) -> np.ndarray:
    # Regression slope over +/-window frames, indices clamped at the edges.
    n = feat.shape[0]
    norm = 2.0 * sum(k * k for k in range(1, window + 1))
    delta = np.zeros_like(feat)
    for k in range(1, window + 1):
        fwd = np.clip(np.arange(n) + k, 0, n - 1)
        bwd = np.clip(np.arange(n) - k, 0, n - 1)
        delta += k * (feat[fwd] - feat[bwd])
    return delta / norm


def add_deltas(feat: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Append delta and delta-delta columns: (N, D) -> (N, 3*D)."""
    feat = np.asarray(feat, dtype=np.float64)
    delta = _regression_delta(feat, config.delta_window)
    ddelta = _regression_delta(delta, config.delta_window)
    return np.concatenate([feat, delta, ddelta], axis=1)


def extract_features(wave: np.ndarray, config: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """Waveform -> FeatureMatrix (N x 123 for default config)."""
    full = add_deltas(logmel_energy(frame_signal(wave, config), config), config)
    return FeatureMatrix(data=full.astype(np.float32), frame_rate=config.frame_rate)


def read_wav(path, expect_rate: int = 16000) -> np.ndarray:
    """Read a 16-bit PCM mono wav into float64 in [-1, 1]."""
    import wave as wave_mod

    with wave_mod.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getframerate() != expect_rate:
            raise ValueError(f"{path}: expected {expect_rate} Hz, got {fh.getframerate()}")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit samples, got {8 * fh.getsampwidth()}-bit")
        raw = fh.readframes(fh.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path, wave: np.ndarray, rate: int = 16000) -> None:
    import wave as wave_mod

    samples = np.clip(np.asarray(wave, dtype=np.float64), -1.0, 1.0)
    pcm = (samples * 32767.0).astype("<i2")
    with wave_mod.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# Binary cache: little-endian header {magic, version, N, F, frame_rate}
# followed by a row-major float32 array. Reused for posteriorgrams (F = |C|).
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sIIId")


def save_feature_cache(path, matrix: FeatureMatrix) -> None:
    data = np.ascontiguousarray(matrix.data, dtype="<f4")
    n, f = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_CACHE_MAGIC, FEATURE_CACHE_VERSION, n, f, matrix.frame_rate))
        fh.write(data.tobytes())


def load_feature_cache(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError(f"truncated feature cache: {path}")
        magic, version, n, f, frame_rate = _HEADER.unpack(header)
        if magic != FEATURE_CACHE_MAGIC:
            raise ValueError(f"not a feature cache (bad magic): {path}")
        if version != FEATURE_CACHE_VERSION:
            raise ValueError(f"unsupported feature cache version {version}: {path}")
        raw = fh.read(n * f * 4)
    if len(raw) != n * f * 4:
        raise ValueError(f"truncated feature cache payload: {path}")
    data = np.frombuffer(raw, dtype="<f4").reshape(n, f)
    return FeatureMatrix(data=data.copy(), frame_rate=frame_rate)
