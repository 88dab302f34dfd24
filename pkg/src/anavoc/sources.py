"""Reference harmonic and noise source signals.

The decoder's masks multiply the mel-spectrograms of these two signals,
so the harmonic source carries a flat comb of partials at multiples of
F0 and the noise source is plain white Gaussian noise; all spectral
shaping is left to the masks.
"""
from __future__ import annotations

import numpy as np

from .audio_io import AudioClip
from .f0 import F0Contour

PEAK = 0.9
FADE_MS = 5.0
NOISE_STD = 0.1


def harmonic_source(f0: F0Contour, sample_rate: int) -> AudioClip:
    """Equal-amplitude harmonics below Nyquist, phase-continuous, peak <= 0.9.

    Unvoiced frames are silent, with 5 ms linear fades at voiced-run
    boundaries. Output length is exactly num_frames * hop samples.
    """
    sr = int(sample_rate)
    hop = int(round(sr * f0.frame_period_ms / 1000.0))
    n = len(f0) * hop
    if n == 0:
        return AudioClip(np.zeros(0), sr)
    per_sample = np.repeat(f0.values, hop)
    voiced = per_sample > 0
    out = np.zeros(n)
    if np.any(voiced):
        nyquist = sr / 2
        phase = 2 * np.pi * np.cumsum(per_sample) / sr
        k_count = np.zeros(n)
        k_count[voiced] = np.floor((nyquist - 1e-9) / per_sample[voiced])
        k_max = int(k_count.max())
        amp = np.zeros(n)
        amp[voiced] = 1.0 / np.sqrt(k_count[voiced])
        for k in range(1, k_max + 1):
            active = k <= k_count
            if not np.any(active):
                break
            out[active] += np.sin(k * phase[active])
        out *= amp
        out *= _fade_envelope(voiced, int(round(sr * FADE_MS / 1000.0)))
        peak = np.abs(out).max()
        if peak > PEAK:
            out *= PEAK / peak
    return AudioClip(out, sr)


def _fade_envelope(voiced: np.ndarray, fade_samples: int) -> np.ndarray:
    env = voiced.astype(np.float64)
    if fade_samples <= 0:
        return env
    idx = 0
    n = len(voiced)
    while idx < n:
        if not voiced[idx]:
            idx += 1
            continue
        end = idx
        while end < n and voiced[end]:
            end += 1
        length = end - idx
        ramp = min(fade_samples, length)
        rise = (np.arange(ramp) + 1) / ramp
        env[idx : idx + ramp] = np.minimum(env[idx : idx + ramp], rise)
        env[end - ramp : end] = np.minimum(env[end - ramp : end], rise[::-1])
        idx = end
    return env


def noise_source(
    num_samples: int, rng_seed: int, std: float = NOISE_STD, sample_rate: int = 16000
) -> AudioClip:
    """Zero-mean Gaussian noise, deterministic for a given seed."""
    if num_samples <= 0:
        raise ValueError(f"num_samples must be positive, got {num_samples}")
    rng = np.random.default_rng(rng_seed)
    samples = np.clip(rng.normal(0.0, std, num_samples), -1.0, 1.0)
    return AudioClip(samples, sample_rate)
