"""Synthetic singing-vowel corpus with exactly known F0.

Desk-scale training and the acceptance checks use audio generated by the
package itself: harmonic-source vowels with smooth pitch wander and
vibrato, alternating with unvoiced gaps, plus a little breath noise.
Ground-truth contours are written next to the WAVs.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, save_wav
from .f0 import F0Contour, save_f0
from .sources import harmonic_source

DEFAULT_F0_RANGE = (100.0, 300.0)


def synthetic_contour(
    total_frames: int,
    rng: np.random.Generator,
    frame_period_ms: float,
    f0_range: tuple[float, float] = DEFAULT_F0_RANGE,
) -> F0Contour:
    """Voiced segments with log-domain wander and vibrato, unvoiced gaps between."""
    lo, hi = f0_range
    frames_per_s = 1000.0 / frame_period_ms
    values = np.zeros(total_frames)
    pos = int(rng.uniform(0.1, 0.3) * frames_per_s)
    while pos < total_frames:
        seg = min(int(rng.uniform(0.4, 1.5) * frames_per_s), total_frames - pos)
        base = np.exp(rng.uniform(np.log(lo * 1.05), np.log(hi * 0.95)))
        wander = np.cumsum(rng.normal(0.0, 0.002, seg))
        t = np.arange(seg) / frames_per_s
        vibrato = 0.01 * np.sin(2 * np.pi * 5.5 * t + rng.uniform(0, 2 * np.pi))
        values[pos : pos + seg] = np.clip(base * np.exp(wander + vibrato), lo, hi)
        pos += seg + int(rng.uniform(0.1, 0.4) * frames_per_s)
    return F0Contour.from_values(values, frame_period_ms)


def synthetic_utterance(
    duration_s: float,
    rng: np.random.Generator,
    sample_rate: int = 16000,
    frame_period_ms: float = 5.0,
    breath_std: float = 0.008,
) -> tuple[AudioClip, F0Contour]:
    hop = int(round(sample_rate * frame_period_ms / 1000.0))
    frames = int(round(duration_s * 1000.0 / frame_period_ms))
    contour = synthetic_contour(frames, rng, frame_period_ms)
    voice = harmonic_source(contour, sample_rate)
    gain = rng.uniform(0.35, 0.65)
    samples = voice.samples * gain + rng.normal(0.0, breath_std, frames * hop)
    return AudioClip(np.clip(samples, -1.0, 1.0), sample_rate), contour


def make_synthetic_corpus(
    out_dir: str | Path,
    minutes: float = 10.0,
    seed: int = 0,
    sample_rate: int = 16000,
    frame_period_ms: float = 5.0,
    holdout_fraction: float = 0.05,
) -> dict:
    """Write train/ and heldout/ splits of vowel utterances with F0 ground truth."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    targets = {
        "train": minutes * 60.0 * (1.0 - holdout_fraction),
        "heldout": minutes * 60.0 * holdout_fraction,
    }
    summary = {"seed": seed, "sample_rate": sample_rate, "splits": {}}
    index = 0
    for split, target_s in targets.items():
        split_dir = out_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        written = 0.0
        count = 0
        while written < target_s:
            duration = min(rng.uniform(3.0, 6.0), max(target_s - written, 1.0))
            clip, contour = synthetic_utterance(
                duration, rng, sample_rate, frame_period_ms
            )
            stem = f"vowel_{index:04d}"
            save_wav(clip, split_dir / f"{stem}.wav")
            save_f0(contour, split_dir / f"{stem}.f0.txt")
            written += clip.duration_s
            index += 1
            count += 1
        summary["splits"][split] = {"utterances": count, "seconds": round(written, 2)}
    (out_dir / "corpus.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary
