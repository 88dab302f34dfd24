"""Mono waveform loading, saving, and band-limited resampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with its sample rate.

    Samples are float64 amplitudes; loaded audio is guaranteed to lie in
    [-1, 1], and out-of-range values are clipped on save.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip requires a 1-D signal, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def load_wav(path: str | Path) -> AudioClip:
    """Load a RIFF/WAVE file as a mono clip scaled to [-1, 1].

    PCM (8/16/32 bit) and IEEE-float files are accepted; multichannel
    audio is averaged down to mono.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise ValueError(f"{path}: unsupported or malformed WAV ({exc})") from exc
    if data.size == 0:
        raise ValueError(f"{path}: zero-length audio")
    if data.ndim == 2:
        data = data.mean(axis=1)
    data = np.asarray(data, dtype=np.float64) if data.dtype.kind == "f" else data
    if data.dtype == np.int16:
        samples = data / PCM16_SCALE
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = np.asarray(data, dtype=np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    samples = np.clip(samples, -1.0, 1.0)
    return AudioClip(samples, rate)


def save_wav(clip: AudioClip, path: str | Path) -> None:
    """Write a clip as mono PCM16, clipping amplitudes to [-1, 1].

    Round trip through load_wav recovers every sample to within one
    quantization step (1/32768).
    """
    if len(clip) == 0:
        raise ValueError("refusing to write an empty clip")
    x = np.clip(clip.samples, -1.0, 1.0)
    q = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), clip.sample_rate, q)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Resample with windowed-sinc (polyphase) interpolation.

    Duration is preserved to within one output sample; tones below the
    target Nyquist keep their frequency.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    out = resample_poly(clip.samples, up, down)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate)
