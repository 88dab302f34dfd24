import numpy as np
import pytest
import torch

from anavoc.audio_io import AudioClip

torch.set_num_threads(2)


def tone(freq: float, duration_s: float = 1.0, sr: int = 16000, amp: float = 0.5) -> AudioClip:
    t = np.arange(int(round(duration_s * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def fft_peak_hz(samples: np.ndarray, sr: int, f_lo: float, f_hi: float) -> float:
    """Frequency of the magnitude argmax restricted to [f_lo, f_hi]."""
    spec = np.abs(np.fft.rfft(samples))
    freqs = np.fft.rfftfreq(len(samples), 1.0 / sr)
    band = (freqs >= f_lo) & (freqs <= f_hi)
    idx = np.flatnonzero(band)
    return float(freqs[idx[np.argmax(spec[idx])]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
