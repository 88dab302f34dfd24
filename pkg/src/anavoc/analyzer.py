"""Encoder-decoder over mel-spectrograms with an interpretable latent code.

Two parallel convolutional encoder blocks produce the noise code (rows
0..L-1) and the harmonic code (rows L..2L-1) of a 2L x T latent; the last
row is trained to track normalized F0, which makes pitch directly
readable and editable. Mirrored decoder blocks turn the two codes into
sigmoid masks that gate the harmonic and noise source mel-spectrograms.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import container
from .spectral import AMP_FLOOR, MelSpectrogram

LOGVAR_CLAMP = 14.0


@dataclass(frozen=True)
class AnalyzerConfig:
    mel_order: int = 80
    latent_dim: int = 16
    channels: int = 128
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16)

    def __post_init__(self):
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2 (the last row is reserved for F0)")
        if self.mel_order < 1:
            raise ValueError("mel_order must be >= 1")


@dataclass
class LatentDistribution:
    """Predicted per-frame mean and log-variance of the latent code."""

    mu: torch.Tensor  # (2L, T)
    logvar: torch.Tensor  # (2L, T)
    frame_period_ms: float

    @property
    def num_frames(self) -> int:
        return self.mu.shape[-1]


@dataclass
class LatentCode:
    """2L x T latent: noise code on top, harmonic code (F0 in its last row) below."""

    z: torch.Tensor  # (2L, T)
    latent_dim: int
    frame_period_ms: float

    def __post_init__(self):
        if self.z.ndim != 2 or self.z.shape[0] != 2 * self.latent_dim:
            raise ValueError(
                f"latent must be (2*{self.latent_dim}, T), got {tuple(self.z.shape)}"
            )

    @property
    def num_frames(self) -> int:
        return self.z.shape[-1]

    @property
    def noise_code(self) -> torch.Tensor:
        return self.z[: self.latent_dim]

    @property
    def harmonic_code(self) -> torch.Tensor:
        return self.z[self.latent_dim :]


class ChannelNorm(nn.Module):
    """Layer normalization over channels, independently at every frame."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.norm(x.transpose(-1, -2)).transpose(-1, -2)


class DilatedBlock(nn.Module):
    """Residual dilated conv along time: x + silu(norm(conv(x)))."""

    def __init__(self, channels: int, kernel_size: int, dilation: int):
        super().__init__()
        pad = (kernel_size - 1) // 2 * dilation
        self.conv = nn.Conv1d(channels, channels, kernel_size, dilation=dilation, padding=pad)
        self.norm = ChannelNorm(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + nn.functional.silu(self.norm(self.conv(x)))


class ConvStack(nn.Module):
    """1x1 lift, a ladder of residual dilated blocks, 1x1 projection.

    The encoder and decoder blocks are this same shape run with mirrored
    dilation ladders; time resolution is always preserved.
    """

    def __init__(self, in_ch: int, channels: int, out_ch: int, kernel_size, dilations):
        super().__init__()
        self.lift = nn.Conv1d(in_ch, channels, 1)
        self.blocks = nn.ModuleList(
            DilatedBlock(channels, kernel_size, d) for d in dilations
        )
        self.proj = nn.Conv1d(channels, out_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.lift(x)
        for block in self.blocks:
            h = block(h)
        return self.proj(h)


class Analyzer(nn.Module):
    """Parallel noise/harmonic encoders with mask decoders, all frame-aligned."""

    def __init__(self, config: AnalyzerConfig | None = None, init_seed: int = 0):
        super().__init__()
        self.config = config or AnalyzerConfig()
        self.init_seed = int(init_seed)
        torch.manual_seed(self.init_seed)  # fan-in-scaled uniform init, reproducible
        c = self.config
        self.noise_encoder = ConvStack(
            c.mel_order, c.channels, c.latent_dim, c.kernel_size, c.dilations
        )
        self.harmonic_encoder = ConvStack(
            c.mel_order, c.channels, c.latent_dim, c.kernel_size, c.dilations
        )
        # grouped 1x1 heads keep the two branches independent
        self.mu_head = nn.Conv1d(2 * c.latent_dim, 2 * c.latent_dim, 1, groups=2)
        self.logvar_head = nn.Conv1d(2 * c.latent_dim, 2 * c.latent_dim, 1, groups=2)
        self.noise_decoder = ConvStack(
            c.latent_dim, c.channels, c.mel_order, c.kernel_size, tuple(reversed(c.dilations))
        )
        self.harmonic_decoder = ConvStack(
            c.latent_dim, c.channels, c.mel_order, c.kernel_size, tuple(reversed(c.dilations))
        )

    @property
    def receptive_field(self) -> int:
        """Frames seen by one output frame of a single conv stack."""
        k = self.config.kernel_size
        return 1 + (k - 1) * sum(self.config.dilations)

    def encode_batch(self, mel: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, M, T) log-mel -> mu, logvar each (B, 2L, T)."""
        if mel.shape[-2] != self.config.mel_order:
            raise ValueError(
                f"mel order mismatch: model expects {self.config.mel_order}, got {mel.shape[-2]}"
            )
        feats = torch.cat([self.noise_encoder(mel), self.harmonic_encoder(mel)], dim=-2)
        mu = self.mu_head(feats)
        logvar = torch.clamp(self.logvar_head(feats), -LOGVAR_CLAMP, LOGVAR_CLAMP)
        return mu, logvar

    def masks_batch(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, 2L, T) latent -> sigmoid-bounded (harmonic_mask, noise_mask)."""
        latent = self.config.latent_dim
        if z.shape[-2] != 2 * latent:
            raise ValueError(f"latent must have {2 * latent} rows, got {z.shape[-2]}")
        noise_mask = torch.sigmoid(self.noise_decoder(z[..., :latent, :]))
        harmonic_mask = torch.sigmoid(self.harmonic_decoder(z[..., latent:, :]))
        return harmonic_mask, noise_mask

    def decode_batch(
        self, z: torch.Tensor, hs_linear: torch.Tensor, ns_linear: torch.Tensor
    ) -> torch.Tensor:
        """Masked linear-domain combination of the two sources, re-logged."""
        harmonic_mask, noise_mask = self.masks_batch(z)
        if hs_linear.shape != ns_linear.shape or hs_linear.shape[-2:] != harmonic_mask.shape[-2:]:
            raise ValueError(
                "source spectrograms must both be (M, T) matching the latent frame count"
            )
        return combine_masked_sources(harmonic_mask, noise_mask, hs_linear, ns_linear)


def combine_masked_sources(
    harmonic_mask: torch.Tensor,
    noise_mask: torch.Tensor,
    hs_linear: torch.Tensor,
    ns_linear: torch.Tensor,
    floor: float = AMP_FLOOR,
) -> torch.Tensor:
    """log(max(mask_s * HS + mask_a * NS, floor)); masks cannot create energy."""
    mixed = harmonic_mask * hs_linear + noise_mask * ns_linear
    return torch.log(torch.clamp(mixed, min=floor))


def encode(mel: MelSpectrogram, params: Analyzer) -> LatentDistribution:
    """Map one utterance's mel-spectrogram to latent distribution parameters."""
    x = torch.as_tensor(mel.values, dtype=torch.float32)[None]
    with torch.no_grad():
        mu, logvar = params.encode_batch(x)
    return LatentDistribution(mu[0], logvar[0], mel.frame_period_ms)


def reparameterize(
    dist: LatentDistribution, rng_seed: int = 0, sample: bool = True
) -> LatentCode:
    """z = mu + exp(logvar/2) * eps; with sample=False (inference) z = mu."""
    latent_dim = dist.mu.shape[0] // 2
    if not sample:
        return LatentCode(dist.mu.detach().clone(), latent_dim, dist.frame_period_ms)
    gen = torch.Generator().manual_seed(int(rng_seed))
    eps = torch.randn(dist.mu.shape, generator=gen, dtype=dist.mu.dtype)
    z = dist.mu + torch.exp(0.5 * dist.logvar) * eps
    return LatentCode(z, latent_dim, dist.frame_period_ms)


def decode(
    z: LatentCode,
    hs_mel: MelSpectrogram,
    ns_mel: MelSpectrogram,
    params: Analyzer,
) -> MelSpectrogram:
    """Reconstruct a log-mel spectrogram from the latent and the two sources."""
    hs = torch.as_tensor(np.exp(hs_mel.values), dtype=torch.float32)[None]
    ns = torch.as_tensor(np.exp(ns_mel.values), dtype=torch.float32)[None]
    with torch.no_grad():
        xhat = params.decode_batch(z.z[None].to(torch.float32), hs, ns)
    return MelSpectrogram(
        values=xhat[0].numpy().astype(np.float64),
        mel_order=hs_mel.mel_order,
        frame_period_ms=z.frame_period_ms,
        sample_rate=hs_mel.sample_rate,
    )


def latent_f0(z: LatentCode) -> np.ndarray:
    """The normalized-F0 row (last row of the harmonic code), clamped to [0, 1]."""
    row = z.z[-1].detach().numpy().astype(np.float64)
    return np.clip(row, 0.0, 1.0)


def set_latent_f0(z: LatentCode, f0_norm) -> LatentCode:
    """Replace the F0 row, leaving every other latent row untouched."""
    values = np.asarray(f0_norm, dtype=np.float64)
    if values.ndim != 1 or len(values) != z.num_frames:
        raise ValueError(
            f"F0 row must have length {z.num_frames}, got shape {values.shape}"
        )
    out = z.z.detach().clone()
    out[-1] = torch.as_tensor(values, dtype=out.dtype)
    return LatentCode(out, z.latent_dim, z.frame_period_ms)


def save_latent(z: LatentCode, path: str | Path, checkpoint_id: str = "") -> None:
    """Latent container: binary tensor plus a JSON sidecar."""
    path = Path(path)
    container.write_tensor(path, z.z.detach().numpy().astype(np.float32))
    container.write_sidecar(
        path.with_suffix(path.suffix + ".json"),
        {
            "L": z.latent_dim,
            "T": z.num_frames,
            "frame_period_ms": z.frame_period_ms,
            "checkpoint_id": checkpoint_id,
        },
    )


def load_latent(path: str | Path) -> LatentCode:
    path = Path(path)
    values = container.read_tensor(path)
    meta = container.read_sidecar(path.with_suffix(path.suffix + ".json"))
    return LatentCode(
        torch.as_tensor(np.asarray(values, dtype=np.float32)),
        int(meta["L"]),
        float(meta["frame_period_ms"]),
    )
