"""STFT, mel features, cepstra, and the multi-resolution spectral loss.

These kernels are shared by the analyzer (input features), the
synthesizer training loss, and the objective metrics. Framing is
center-padded with T = ceil(num_samples / hop), so a clip of exactly
T * hop samples maps to T frames and back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.fft import dct
from scipy.signal import get_window

from . import container
from .audio_io import AudioClip

SAMPLE_RATE = 16000
HOP_LENGTH = 80  # 5 ms at 16 kHz
WINDOW_LENGTH = 400  # 25 ms
FFT_SIZE = 1024
MEL_ORDER = 80
AMP_FLOOR = 1e-5
LOG_FLOOR = math.log(AMP_FLOOR)

_WINDOW_NAMES = ("hann", "hamming", "blackman", "boxcar")


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = FFT_SIZE
    hop_length: int = HOP_LENGTH
    window_length: int = WINDOW_LENGTH
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.hop_length <= self.window_length <= self.fft_size):
            raise ValueError(
                "StftConfig requires 0 < hop_length <= window_length <= fft_size, "
                f"got hop={self.hop_length} window={self.window_length} fft={self.fft_size}"
            )
        if self.window not in _WINDOW_NAMES:
            raise ValueError(f"unknown window {self.window!r}, expected one of {_WINDOW_NAMES}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


# Three resolutions bracketing the 5 ms / 1024-bin analysis setting.
DEFAULT_LOSS_CONFIGS = (
    StftConfig(512, 80, 240),
    StftConfig(1024, 160, 400),
    StftConfig(2048, 320, 1200),
)


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-amplitude mel matrix, mel bins on rows and frames on columns."""

    values: np.ndarray  # (mel_order, T)
    mel_order: int
    frame_period_ms: float
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != self.mel_order:
            raise ValueError(
                f"mel values must be (mel_order, T), got {values.shape} for order {self.mel_order}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("mel values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]

    def linear(self) -> np.ndarray:
        """Mel energies before the log (inverse of the log compression)."""
        return np.exp(self.values)


def num_frames(num_samples: int, hop_length: int) -> int:
    """Frame count of the shared framing: ceil(num_samples / hop)."""
    return -(-num_samples // hop_length)


def window_array(cfg: StftConfig) -> np.ndarray:
    return get_window(cfg.window, cfg.window_length, fftbins=True)


def _frame(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Center-padded frames (T, window_length); frame t is centered at t*hop."""
    n = len(samples)
    t_total = num_frames(n, cfg.hop_length)
    pad_left = cfg.window_length // 2
    need = (t_total - 1) * cfg.hop_length + cfg.window_length
    pad_right = max(0, need - n - pad_left)
    padded = np.pad(samples, (pad_left, pad_right))
    idx = np.arange(cfg.window_length)[None, :] + cfg.hop_length * np.arange(t_total)[:, None]
    return padded[idx]


def stft(clip: AudioClip | np.ndarray, cfg: StftConfig | None = None) -> np.ndarray:
    """Complex STFT of shape (fft_size//2 + 1, T)."""
    cfg = cfg or StftConfig()
    samples = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if len(samples) == 0:
        raise ValueError("cannot take the STFT of an empty signal")
    frames = _frame(samples, cfg) * window_array(cfg)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1).T


def mel_filterbank(
    sample_rate: int, fft_size: int, mel_order: int, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular HTK-mel filterbank, (mel_order, fft_size//2 + 1), peak 1."""
    if mel_order < 1:
        raise ValueError(f"mel_order must be >= 1, got {mel_order}")
    fmax = sample_rate / 2 if fmax is None else fmax

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    edges = from_mel(np.linspace(to_mel(fmin), to_mel(fmax), mel_order + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    bank = np.zeros((mel_order, len(freqs)))
    for m in range(mel_order):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - freqs) / max(hi - mid, 1e-12)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def mel_spectrogram(
    clip: AudioClip,
    mel_order: int = MEL_ORDER,
    cfg: StftConfig | None = None,
    floor: float = AMP_FLOOR,
) -> MelSpectrogram:
    """Log mel-amplitude features: log(max(filterbank @ |STFT|, floor))."""
    cfg = cfg or StftConfig()
    mag = np.abs(stft(clip, cfg))
    bank = mel_filterbank(clip.sample_rate, cfg.fft_size, mel_order)
    values = np.log(np.maximum(bank @ mag, floor))
    return MelSpectrogram(
        values=values,
        mel_order=mel_order,
        frame_period_ms=1000.0 * cfg.hop_length / clip.sample_rate,
        sample_rate=clip.sample_rate,
    )


def cepstra_from_log_mel(log_mel: np.ndarray, order: int) -> np.ndarray:
    """Orthonormal DCT-II of per-frame log-mel energies, rows 0..order."""
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if log_mel.ndim == 1:
        log_mel = log_mel[:, None]
    if order + 1 > log_mel.shape[0]:
        raise ValueError(
            f"cepstral order {order} exceeds the {log_mel.shape[0]} available mel bins"
        )
    return dct(log_mel, type=2, norm="ortho", axis=0)[: order + 1]


def mel_cepstrum(
    clip: AudioClip,
    order: int,
    mel_order: int = MEL_ORDER,
    cfg: StftConfig | None = None,
) -> np.ndarray:
    """Per-frame mel-cepstral coefficients c(0..order), shape (order+1, T)."""
    if len(clip) == 0:
        raise ValueError("cannot compute cepstra of an empty clip")
    mel = mel_spectrogram(clip, mel_order=mel_order, cfg=cfg)
    return cepstra_from_log_mel(mel.values, order)


def _as_tensor(signal) -> torch.Tensor:
    if isinstance(signal, torch.Tensor):
        return signal
    if isinstance(signal, AudioClip):
        signal = signal.samples
    return torch.as_tensor(np.asarray(signal, dtype=np.float64))


def stft_magnitude_t(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """Torch mirror of `stft` magnitudes; (..., bins, T), differentiable."""
    n = x.shape[-1]
    t_total = num_frames(n, cfg.hop_length)
    pad_left = cfg.window_length // 2
    need = (t_total - 1) * cfg.hop_length + cfg.window_length
    pad_right = max(0, need - n - pad_left)
    xp = torch.nn.functional.pad(x, (pad_left, pad_right))
    frames = xp.unfold(-1, cfg.window_length, cfg.hop_length)  # (..., T, win)
    win = torch.as_tensor(window_array(cfg), dtype=x.dtype, device=x.device)
    spec = torch.fft.rfft(frames * win, n=cfg.fft_size, dim=-1)
    return spec.abs().transpose(-1, -2)


def multi_res_stft_loss(y, y_hat, cfgs=None, floor: float = AMP_FLOOR):
    """Sum over configs of the MSE between log magnitude spectra.

    Accepts AudioClips, arrays, or torch tensors; tensor inputs keep the
    computation differentiable and return a tensor, everything else
    returns a float. The shorter signal is zero-padded.
    """
    cfgs = DEFAULT_LOSS_CONFIGS if cfgs is None else tuple(cfgs)
    tensor_in = isinstance(y, torch.Tensor) or isinstance(y_hat, torch.Tensor)
    a, b = _as_tensor(y), _as_tensor(y_hat)
    if a.shape[-1] == 0 or b.shape[-1] == 0:
        raise ValueError("cannot compute a spectral loss of an empty signal")
    n = max(a.shape[-1], b.shape[-1])
    a = torch.nn.functional.pad(a, (0, n - a.shape[-1]))
    b = torch.nn.functional.pad(b, (0, n - b.shape[-1]))
    total = None
    for cfg in cfgs:
        la = torch.log(torch.clamp(stft_magnitude_t(a, cfg), min=floor))
        lb = torch.log(torch.clamp(stft_magnitude_t(b, cfg), min=floor))
        term = torch.mean((la - lb) ** 2)
        total = term if total is None else total + term
    return total if tensor_in else float(total)


def save_mel(mel: MelSpectrogram, path: str | Path) -> None:
    """Binary tensor container (float32) plus a JSON sidecar."""
    path = Path(path)
    container.write_tensor(path, mel.values.astype(np.float32))
    container.write_sidecar(
        path.with_suffix(path.suffix + ".json"),
        {
            "sample_rate": mel.sample_rate,
            "frame_period_ms": mel.frame_period_ms,
            "mel_order": mel.mel_order,
        },
    )


def load_mel(path: str | Path) -> MelSpectrogram:
    path = Path(path)
    values = container.read_tensor(path)
    meta = container.read_sidecar(path.with_suffix(path.suffix + ".json"))
    return MelSpectrogram(
        values=np.asarray(values, dtype=np.float64),
        mel_order=int(meta["mel_order"]),
        frame_period_ms=float(meta["frame_period_ms"]),
        sample_rate=int(meta["sample_rate"]),
    )
