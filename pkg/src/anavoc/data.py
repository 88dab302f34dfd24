"""Dataset loading and batch assembly for joint analyzer-synthesizer training."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio_io import AudioClip, load_wav, resample
from .f0 import F0Contour, estimate_f0, load_f0_external, normalize_f0
from .sources import harmonic_source, noise_source
from .spectral import AMP_FLOOR, LOG_FLOOR, MelSpectrogram, StftConfig, mel_spectrogram, num_frames
from .synthesizer import _sine_mixture, upsample_f0


@dataclass
class Utterance:
    stem: str
    clip: AudioClip  # padded to exactly num_frames * hop samples
    mel: MelSpectrogram
    f0: F0Contour


def _match_frames(contour: F0Contour, frames: int) -> F0Contour:
    """Pad (unvoiced) or trim an external contour to the mel frame count."""
    values = contour.values
    if len(values) < frames:
        values = np.pad(values, (0, frames - len(values)))
    elif len(values) > frames:
        values = values[:frames]
    return F0Contour.from_values(values, contour.frame_period_ms)


def load_utterance(
    wav_path: str | Path,
    sample_rate: int,
    mel_order: int,
    stft_cfg: StftConfig,
    f0_path: str | Path | None = None,
    f0_floor: float = 60.0,
    f0_ceil: float = 600.0,
) -> Utterance:
    wav_path = Path(wav_path)
    clip = load_wav(wav_path)
    if clip.sample_rate != sample_rate:
        clip = resample(clip, sample_rate)
    hop = stft_cfg.hop_length
    frames = num_frames(len(clip), hop)
    padded = np.pad(clip.samples, (0, frames * hop - len(clip)))
    clip = AudioClip(padded, sample_rate)
    mel = mel_spectrogram(clip, mel_order=mel_order, cfg=stft_cfg)
    frame_period_ms = 1000.0 * hop / sample_rate
    if f0_path is not None:
        contour = _match_frames(load_f0_external(f0_path, frame_period_ms), frames)
    else:
        contour = estimate_f0(clip, frame_period_ms, f0_floor, f0_ceil)
    return Utterance(stem=wav_path.stem, clip=clip, mel=mel, f0=contour)


def find_f0_file(wav_path: Path, f0_dir: Path | None) -> Path | None:
    """Ground-truth F0 lookup: explicit directory first, then next to the wav."""
    candidates = []
    if f0_dir is not None:
        candidates += [f0_dir / f"{wav_path.stem}.f0.txt", f0_dir / f"{wav_path.stem}.f0"]
    candidates += [wav_path.with_suffix(".f0.txt"), wav_path.with_suffix(".f0")]
    for cand in candidates:
        if cand.exists():
            return cand
    return None


def load_dataset(
    data_dir: str | Path,
    sample_rate: int,
    mel_order: int,
    stft_cfg: StftConfig,
    f0_dir: str | Path | None = None,
    f0_floor: float = 60.0,
    f0_ceil: float = 600.0,
) -> list[Utterance]:
    data_dir = Path(data_dir)
    f0_dir = Path(f0_dir) if f0_dir else None
    wavs = sorted(data_dir.glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"no WAV files found in {data_dir}")
    return [
        load_utterance(
            wav,
            sample_rate,
            mel_order,
            stft_cfg,
            f0_path=find_f0_file(wav, f0_dir),
            f0_floor=f0_floor,
            f0_ceil=f0_ceil,
        )
        for wav in wavs
    ]


@dataclass
class TrainBatch:
    """One optimization step's worth of aligned teacher signals."""

    mel: torch.Tensor  # (B, M, T) log-mel input x
    f0_norm: torch.Tensor  # (B, T) normalized ground-truth F0
    wave: torch.Tensor  # (B, N) target waveform y
    hs_linear: torch.Tensor  # (B, M, T) harmonic-source mel, linear domain
    ns_linear: torch.Tensor  # (B, M, T) noise-source mel, linear domain
    harmonic_excitation: torch.Tensor  # (B, 1, N)
    noise_excitation: torch.Tensor  # (B, 1, N)
    frame_mask: torch.Tensor  # (B, T), 1 on valid frames
    valid_frames: list[int]
    hop_length: int

    @property
    def batch_size(self) -> int:
        return self.mel.shape[0]


def make_batch(
    utts: list[Utterance],
    batch_size: int,
    crop_frames: int,
    rng: np.random.Generator,
    stft_cfg: StftConfig,
    f0_floor: float = 60.0,
    f0_ceil: float = 600.0,
    num_harmonics: int = 8,
    sine_amp: float = 0.1,
    noise_std: float = 0.003,
) -> TrainBatch:
    """Crop random segments and build every teacher signal the losses need."""
    hop = stft_cfg.hop_length
    sr = utts[0].clip.sample_rate
    frame_period_ms = 1000.0 * hop / sr
    items = []
    for _ in range(batch_size):
        utt = utts[int(rng.integers(len(utts)))]
        total = utt.mel.num_frames
        t_crop = min(crop_frames, total)
        start = int(rng.integers(0, total - t_crop + 1))
        mel = utt.mel.values[:, start : start + t_crop]
        f0_vals = utt.f0.values[start : start + t_crop]
        wave = utt.clip.samples[start * hop : (start + t_crop) * hop]
        contour = F0Contour.from_values(f0_vals, frame_period_ms)
        hs_clip = harmonic_source(contour, sr)
        hs_lin = mel_spectrogram(hs_clip, mel.shape[0], stft_cfg).linear()
        ns_clip = noise_source(t_crop * hop, int(rng.integers(2**31)), sample_rate=sr)
        ns_lin = mel_spectrogram(ns_clip, mel.shape[0], stft_cfg).linear()
        f0_up = upsample_f0(f0_vals, hop)
        harm_exc = _sine_mixture(f0_up, rng, sr, num_harmonics, sine_amp, noise_std)
        noise_exc = rng.normal(0.0, noise_std, t_crop * hop)
        f0_norm = normalize_f0(contour, f0_floor, f0_ceil)
        items.append((mel, f0_norm, wave, hs_lin, ns_lin, harm_exc, noise_exc, t_crop))

    t_max = max(item[-1] for item in items)
    n_max = t_max * hop
    mel_order = items[0][0].shape[0]

    def _pad_frames(mat, fill):
        out = np.full((mel_order, t_max), fill, dtype=np.float64)
        out[:, : mat.shape[1]] = mat
        return out

    def _pad_vec(vec, n):
        out = np.zeros(n)
        out[: len(vec)] = vec
        return out

    batch = TrainBatch(
        mel=torch.as_tensor(
            np.stack([_pad_frames(i[0], LOG_FLOOR) for i in items]), dtype=torch.float32
        ),
        f0_norm=torch.as_tensor(
            np.stack([_pad_vec(i[1], t_max) for i in items]), dtype=torch.float32
        ),
        wave=torch.as_tensor(
            np.stack([_pad_vec(i[2], n_max) for i in items]), dtype=torch.float32
        ),
        hs_linear=torch.as_tensor(
            np.stack([_pad_frames(i[3], AMP_FLOOR) for i in items]), dtype=torch.float32
        ),
        ns_linear=torch.as_tensor(
            np.stack([_pad_frames(i[4], AMP_FLOOR) for i in items]), dtype=torch.float32
        ),
        harmonic_excitation=torch.as_tensor(
            np.stack([_pad_vec(i[5], n_max) for i in items]), dtype=torch.float32
        )[:, None],
        noise_excitation=torch.as_tensor(
            np.stack([_pad_vec(i[6], n_max) for i in items]), dtype=torch.float32
        )[:, None],
        frame_mask=torch.as_tensor(
            np.stack([_pad_vec(np.ones(i[-1]), t_max) for i in items]), dtype=torch.float32
        ),
        valid_frames=[i[-1] for i in items],
        hop_length=hop,
    )
    return batch
