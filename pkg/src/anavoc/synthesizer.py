"""Harmonic-plus-noise neural source-filter waveform synthesizer.

A sine-mixture excitation is built directly from the F0 control signal,
so the pitch of the output is pinned to that contour by construction; a
dilated-conv harmonic branch filters the sines, a parallel branch
filters white noise, and the two waveforms are summed. Both branches are
conditioned on the upsampled latent code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .analyzer import LatentCode
from .audio_io import AudioClip
from .f0 import F0Contour

SINE_AMP = 0.1
EXCITATION_NOISE_STD = 0.003


@dataclass(frozen=True)
class SynthesizerConfig:
    latent_dim: int = 16
    channels: int = 64
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16)
    num_harmonics: int = 8
    sine_amp: float = SINE_AMP
    noise_std: float = EXCITATION_NOISE_STD
    sample_rate: int = 16000
    hop_length: int = 80


class ResidualConv(nn.Module):
    def __init__(self, channels: int, kernel_size: int, dilation: int):
        super().__init__()
        pad = (kernel_size - 1) // 2 * dilation
        self.conv = nn.Conv1d(channels, channels, kernel_size, dilation=dilation, padding=pad)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + nn.functional.silu(self.conv(x))


class FilterBranch(nn.Module):
    """Dilated conv stack mapping (excitation, conditions) to one waveform."""

    def __init__(self, cond_channels: int, cfg: SynthesizerConfig):
        super().__init__()
        self.lift = nn.Conv1d(cond_channels + 1, cfg.channels, 1)
        self.blocks = nn.ModuleList(
            ResidualConv(cfg.channels, cfg.kernel_size, d) for d in cfg.dilations
        )
        self.proj = nn.Conv1d(cfg.channels, 1, 1)

    def forward(self, excitation: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        h = self.lift(torch.cat([excitation, cond], dim=-2))
        for block in self.blocks:
            h = block(h)
        return self.proj(h)


class Synthesizer(nn.Module):
    def __init__(self, config: SynthesizerConfig | None = None, init_seed: int = 0):
        super().__init__()
        self.config = config or SynthesizerConfig()
        self.init_seed = int(init_seed)
        torch.manual_seed(self.init_seed)
        cond = 2 * self.config.latent_dim
        self.harmonic_branch = FilterBranch(cond, self.config)
        self.noise_branch = FilterBranch(cond, self.config)

    def forward(
        self,
        cond: torch.Tensor,  # (B, 2L, N)
        harmonic_excitation: torch.Tensor,  # (B, 1, N)
        noise_excitation: torch.Tensor,  # (B, 1, N)
    ) -> torch.Tensor:
        if cond.shape[-2] != 2 * self.config.latent_dim:
            raise ValueError(
                f"condition matrix must have {2 * self.config.latent_dim} rows, "
                f"got {cond.shape[-2]}"
            )
        wave = self.harmonic_branch(harmonic_excitation, cond) + self.noise_branch(
            noise_excitation, cond
        )
        return torch.clamp(wave.squeeze(-2), -1.0, 1.0)


def linear_upsample(mat: torch.Tensor, hop: int) -> torch.Tensor:
    """Frame-rate rows (..., T) to sample rate (..., T*hop) by linear interpolation.

    Frame t is anchored at sample t*hop; the tail past the last anchor
    holds the final frame. Differentiable with respect to `mat`.
    """
    t_total = mat.shape[-1]
    n = t_total * hop
    pos = torch.arange(n, dtype=mat.dtype, device=mat.device) / hop
    i0 = pos.floor().long().clamp(max=t_total - 1)
    i1 = (i0 + 1).clamp(max=t_total - 1)
    w = (pos - i0.to(mat.dtype)).clamp(0.0, 1.0)
    return mat[..., i0] * (1.0 - w) + mat[..., i1] * w


def upsample_f0(values: np.ndarray, hop: int) -> np.ndarray:
    """Per-sample F0: linear between voiced frames, exact 0 across unvoiced runs."""
    values = np.asarray(values, dtype=np.float64)
    t_total = len(values)
    pos = np.arange(t_total * hop) / hop
    i0 = np.minimum(pos.astype(np.int64), t_total - 1)
    i1 = np.minimum(i0 + 1, t_total - 1)
    w = np.clip(pos - i0, 0.0, 1.0)
    v0, v1 = values[i0], values[i1]
    both = (v0 > 0) & (v1 > 0)
    return np.where(both, v0 * (1.0 - w) + v1 * w, np.where(w < 0.5, v0, v1))


def upsample_controls(
    z: LatentCode, f0: F0Contour, sample_rate: int
) -> tuple[torch.Tensor, np.ndarray]:
    """Bridge frame rate to sample rate: (2L, T*hop) conditions and per-sample F0."""
    if z.num_frames != len(f0):
        raise ValueError(
            f"length mismatch: latent has {z.num_frames} frames, contour has {len(f0)}"
        )
    hop = int(round(sample_rate * z.frame_period_ms / 1000.0))
    return linear_upsample(z.z, hop), upsample_f0(f0.values, hop)


def _sine_mixture(
    f0_up: np.ndarray,
    rng: np.random.Generator,
    sample_rate: int,
    num_harmonics: int,
    sine_amp: float,
    noise_std: float,
) -> np.ndarray:
    f = np.asarray(f0_up, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("per-sample F0 must be non-negative")
    phase0 = rng.uniform(0.0, 2 * np.pi, num_harmonics)
    phase = 2 * np.pi * np.cumsum(f) / sample_rate
    out = np.zeros(len(f))
    nyquist = sample_rate / 2
    for h in range(1, num_harmonics + 1):
        active = (f > 0) & (h * f < nyquist)
        if np.any(active):
            out[active] += sine_amp * np.sin(phase0[h - 1] + h * phase[active])
    return out + rng.normal(0.0, noise_std, len(f))


def sine_excitation(
    f0_upsampled,
    rng_seed: int,
    sample_rate: int = 16000,
    num_harmonics: int = 8,
    sine_amp: float = SINE_AMP,
    noise_std: float = EXCITATION_NOISE_STD,
) -> AudioClip:
    """Phase-continuous sine mixture on voiced samples, low-level noise elsewhere.

    The per-harmonic phase is accumulated from the instantaneous
    frequency, so the output pitch follows the control signal exactly.
    """
    rng = np.random.default_rng(rng_seed)
    out = _sine_mixture(
        np.asarray(f0_upsampled), rng, sample_rate, num_harmonics, sine_amp, noise_std
    )
    return AudioClip(np.clip(out, -1.0, 1.0), sample_rate)


def synthesize(
    z: LatentCode, f0: F0Contour, params: Synthesizer, rng_seed: int = 0
) -> AudioClip:
    """Run the full source-filter stack for one utterance; output is T*hop samples."""
    cfg = params.config
    cond, f0_up = upsample_controls(z, f0, cfg.sample_rate)
    rng = np.random.default_rng(rng_seed)
    harm = _sine_mixture(
        f0_up, rng, cfg.sample_rate, cfg.num_harmonics, cfg.sine_amp, cfg.noise_std
    )
    noise = rng.normal(0.0, cfg.noise_std, len(f0_up))
    with torch.no_grad():
        wave = params(
            cond[None].to(torch.float32),
            torch.as_tensor(harm, dtype=torch.float32)[None, None],
            torch.as_tensor(noise, dtype=torch.float32)[None, None],
        )
    return AudioClip(wave[0].numpy().astype(np.float64), cfg.sample_rate)
