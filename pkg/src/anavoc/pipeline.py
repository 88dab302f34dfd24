"""End-to-end analysis, copy-synthesis, and pitch manipulation helpers."""
from __future__ import annotations

import numpy as np

from .analyzer import (
    Analyzer,
    LatentCode,
    encode,
    latent_f0,
    reparameterize,
    set_latent_f0,
)
from .audio_io import AudioClip
from .f0 import F0Contour, contour_from_normalized, estimate_f0, normalize_f0
from .spectral import MelSpectrogram, StftConfig, mel_spectrogram
from .synthesizer import Synthesizer, synthesize
from .training import TrainConfig


def analyze_clip(
    clip: AudioClip, analyzer: Analyzer, cfg: TrainConfig
) -> tuple[MelSpectrogram, LatentCode]:
    """Mel features -> latent code at the distribution mode (deterministic)."""
    mel = mel_spectrogram(clip, cfg.mel_order, cfg.stft_config())
    dist = encode(mel, analyzer)
    return mel, reparameterize(dist, sample=False)


def latent_contour(
    z: LatentCode, cfg: TrainConfig, voiced_threshold: float = 0.1
) -> F0Contour:
    """The analyzer's F0 estimate: denormalized latent row with thresholded V/UV."""
    return contour_from_normalized(
        latent_f0(z), z.frame_period_ms, cfg.f0_floor, cfg.f0_ceil, voiced_threshold
    )


def copy_synthesize(
    clip: AudioClip,
    analyzer: Analyzer,
    synth: Synthesizer,
    cfg: TrainConfig,
    rng_seed: int = 0,
) -> tuple[AudioClip, LatentCode, F0Contour]:
    """Analyze and immediately resynthesize, driving F0 from the latent row."""
    _, z = analyze_clip(clip, analyzer, cfg)
    contour = latent_contour(z, cfg)
    return synthesize(z, contour, synth, rng_seed), z, contour


def shift_contour(
    contour: F0Contour, semitones: float, f0_floor: float, f0_ceil: float
) -> F0Contour:
    """Scale voiced F0 by 2^(semitones/12); reject shifts leaving the valid range."""
    factor = 2.0 ** (semitones / 12.0)
    shifted = contour.values * factor
    bad = contour.vuv & ((shifted < f0_floor) | (shifted > f0_ceil))
    if np.any(bad):
        frames = np.flatnonzero(bad)
        head = ", ".join(str(i) for i in frames[:8])
        more = "" if len(frames) <= 8 else f" (+{len(frames) - 8} more)"
        raise ValueError(
            f"shift of {semitones:+.2f} semitones pushes F0 outside "
            f"[{f0_floor:g}, {f0_ceil:g}] Hz on frames {head}{more}"
        )
    return F0Contour.from_values(np.where(contour.vuv, shifted, 0.0), contour.frame_period_ms)


def pitch_shift(
    clip: AudioClip,
    semitones: float,
    analyzer: Analyzer,
    synth: Synthesizer,
    cfg: TrainConfig,
    rng_seed: int = 0,
) -> tuple[AudioClip, F0Contour]:
    """Encode, move the latent F0 row by a semitone offset, and resynthesize.

    The harmonic excitation is rebuilt from the shifted contour, so the
    output pitch follows the edit exactly.
    """
    _, z = analyze_clip(clip, analyzer, cfg)
    contour = latent_contour(z, cfg)
    shifted = shift_contour(contour, semitones, cfg.f0_floor, cfg.f0_ceil)
    norm = normalize_f0(shifted, cfg.f0_floor, cfg.f0_ceil)
    z_shifted = set_latent_f0(z, norm)
    return synthesize(z_shifted, shifted, synth, rng_seed), shifted


def measured_median_f0(clip: AudioClip, cfg: TrainConfig) -> float:
    """Median of the built-in estimator's voiced frames; 0 if none are voiced."""
    est = estimate_f0(clip, cfg.frame_period_ms, cfg.f0_floor, cfg.f0_ceil)
    voiced = est.values[est.vuv]
    return float(np.median(voiced)) if voiced.size else 0.0


__all__ = [
    "analyze_clip",
    "copy_synthesize",
    "latent_contour",
    "measured_median_f0",
    "pitch_shift",
    "shift_contour",
]
