"""F0 contours: ingestion, estimation, normalization, and consistency checks.

Ground-truth contours normally come from an external conventional vocoder
(one Hz value per line); `estimate_f0` is the built-in fallback. The
consistency checks flag frames whose voicing decision contradicts either
the aperiodicity bands or the spectral structure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import container
from .audio_io import AudioClip
from .spectral import MelSpectrogram, num_frames

F0_FLOOR = 60.0
F0_CEIL = 600.0
NORM_VOICED_FLOOR = 1e-4  # 0 is reserved for unvoiced frames


@dataclass(frozen=True)
class F0Contour:
    """Per-frame F0 in Hz (0 on unvoiced frames) with explicit V/UV flags."""

    values: np.ndarray
    vuv: np.ndarray
    frame_period_ms: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        vuv = np.asarray(self.vuv, dtype=bool)
        if values.ndim != 1 or vuv.shape != values.shape:
            raise ValueError("F0 values and V/UV flags must be matching 1-D arrays")
        if not np.all(np.isfinite(values)):
            raise ValueError("F0 values must be finite")
        if np.any(values < 0):
            raise ValueError("F0 values must be non-negative")
        if np.any((values == 0) & vuv) or np.any((values > 0) & ~vuv):
            raise ValueError("V/UV flags must agree with zero/nonzero F0 values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "vuv", vuv)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values, frame_period_ms: float) -> "F0Contour":
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, vuv=values > 0, frame_period_ms=frame_period_ms)


@dataclass(frozen=True)
class AperiodicityMap:
    """Band-by-frame aperiodicity fractions in [0, 1]."""

    values: np.ndarray  # (bands, T)
    frame_period_ms: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("aperiodicity must be a (bands, T) matrix")
        if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 1:
            raise ValueError("aperiodicity entries must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


def load_f0_external(path: str | Path, frame_period_ms: float) -> F0Contour:
    """Read per-frame Hz values (one-column text, or raw float32) as a contour.

    Zeros map to unvoiced frames; negative or non-finite values are rejected.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) == 0:
        raise ValueError(f"{path}: empty F0 file")
    values = None
    try:
        text = blob.decode("utf-8")
        fields = text.split()
        if fields:
            values = np.array([float(f) for f in fields], dtype=np.float64)
    except (UnicodeDecodeError, ValueError):
        values = None
    if values is None:
        if len(blob) % 4 != 0:
            raise ValueError(f"{path}: not one-column text nor a float32 stream")
        values = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    if values.size == 0:
        raise ValueError(f"{path}: empty F0 file")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{path}: F0 file contains non-finite values")
    if np.any(values < 0):
        raise ValueError(f"{path}: F0 file contains negative frequencies")
    return F0Contour.from_values(values, frame_period_ms)


def save_f0(contour: F0Contour, path: str | Path) -> None:
    """One Hz value per line, frame period in a companion JSON file."""
    path = Path(path)
    path.write_text("".join(f"{v:.6f}\n" for v in contour.values))
    container.write_sidecar(
        path.with_suffix(path.suffix + ".json"),
        {"frame_period_ms": contour.frame_period_ms},
    )


def _normalized_autocorr(seg: np.ndarray, max_lag: int) -> np.ndarray:
    """r(l) = sum x[i] x[i+l] / sqrt(E_head(l) E_tail(l)) for l = 0..max_lag."""
    n = len(seg)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(seg, size)
    raw = np.fft.irfft(spec * np.conj(spec), size)[: max_lag + 1]
    sq = np.concatenate([[0.0], np.cumsum(seg * seg)])
    lags = np.arange(max_lag + 1)
    head = sq[n - lags] - sq[0]
    tail = sq[n] - sq[lags]
    denom = np.sqrt(np.maximum(head * tail, 1e-20))
    return raw / denom


def estimate_f0(
    clip: AudioClip,
    frame_period_ms: float = 5.0,
    f0_floor: float = F0_FLOOR,
    f0_ceil: float = F0_CEIL,
    voicing_threshold: float = 0.5,
    silence_rms: float = 1e-4,
) -> F0Contour:
    """Normalized-autocorrelation pitch with a peak-strength voicing gate.

    Frames whose best in-range correlation peak falls below the threshold
    (or whose energy is below the silence gate) come back unvoiced.
    """
    if f0_floor >= f0_ceil:
        raise ValueError(f"f0_floor ({f0_floor}) must be below f0_ceil ({f0_ceil})")
    sr = clip.sample_rate
    hop = int(round(sr * frame_period_ms / 1000.0))
    total = num_frames(len(clip), hop)
    lag_min = max(2, int(sr / f0_ceil))
    lag_max = int(math.ceil(sr / f0_floor))
    win = 2 * lag_max
    half = win // 2
    padded = np.pad(clip.samples, (half, half + hop))
    values = np.zeros(total)
    for t in range(total):
        seg = padded[t * hop : t * hop + win]
        seg = seg - seg.mean()
        if np.sqrt(np.mean(seg * seg)) < silence_rms:
            continue
        r = _normalized_autocorr(seg, min(lag_max + 1, win - 2))
        window = r[lag_min : lag_max + 1]
        interior = (window[1:-1] > window[:-2]) & (window[1:-1] >= window[2:])
        peaks = np.nonzero(interior)[0] + 1 + lag_min
        peaks = peaks[r[peaks] > voicing_threshold]
        if peaks.size == 0:
            continue
        best = r[peaks].max()
        lag = int(peaks[np.argmax(r[peaks] >= 0.9 * best)])
        # parabolic refinement around the integer lag
        y0, y1, y2 = r[lag - 1], r[lag], r[lag + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.0 if abs(denom) < 1e-12 else 0.5 * (y0 - y2) / denom
        shift = float(np.clip(shift, -0.5, 0.5))
        f = sr / (lag + shift)
        values[t] = float(np.clip(f, f0_floor, f0_ceil))
    return F0Contour.from_values(values, frame_period_ms)


def normalize_f0(
    f0: F0Contour, f0_floor: float = F0_FLOOR, f0_ceil: float = F0_CEIL
) -> np.ndarray:
    """Log-scale F0 into [0, 1]; unvoiced frames map to exactly 0.

    Voiced frames are clamped to [1e-4, 1] so 0 stays unambiguous.
    """
    span = math.log(f0_ceil) - math.log(f0_floor)
    out = np.zeros(len(f0))
    voiced = f0.vuv
    v = (np.log(np.maximum(f0.values[voiced], 1e-12)) - math.log(f0_floor)) / span
    out[voiced] = np.clip(v, NORM_VOICED_FLOOR, 1.0)
    return out


def denormalize_f0(
    values: np.ndarray, f0_floor: float = F0_FLOOR, f0_ceil: float = F0_CEIL
) -> np.ndarray:
    """Inverse of normalize_f0 on voiced entries; 0 stays 0."""
    values = np.asarray(values, dtype=np.float64)
    span = math.log(f0_ceil) - math.log(f0_floor)
    out = np.zeros_like(values)
    voiced = values > 0
    out[voiced] = np.exp(math.log(f0_floor) + values[voiced] * span)
    return out


def contour_from_normalized(
    values,
    frame_period_ms: float,
    f0_floor: float = F0_FLOOR,
    f0_ceil: float = F0_CEIL,
    voiced_threshold: float = 0.1,
) -> F0Contour:
    """Threshold a normalized F0 row into a contour (below threshold = unvoiced)."""
    values = np.asarray(values, dtype=np.float64)
    norm = np.where(values >= voiced_threshold, np.clip(values, 0.0, 1.0), 0.0)
    return F0Contour.from_values(denormalize_f0(norm, f0_floor, f0_ceil), frame_period_ms)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (start, end) pairs."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    starts = [0] if mask[0] else []
    starts += [int(e) + 1 for e in edges if not mask[e]]
    ends = [int(e) for e in edges if mask[e]]
    if mask[-1]:
        ends.append(len(mask) - 1)
    return list(zip(starts, ends))


def vuv_agreement(
    f0: F0Contour, ap: AperiodicityMap, ap_threshold: float = 0.5
) -> list[tuple[int, int]]:
    """Frame ranges where aperiodicity-derived voicing contradicts the contour.

    A frame counts as aperiodicity-voiced when its band-mean aperiodicity
    is below the threshold; returned ranges are maximal disagreement runs.
    """
    if ap.num_frames != len(f0):
        raise ValueError(
            f"frame count mismatch: contour has {len(f0)}, aperiodicity has {ap.num_frames}"
        )
    ap_voiced = ap.values.mean(axis=0) < ap_threshold
    return _runs(ap_voiced != f0.vuv)


class PeriodicityIssue(NamedTuple):
    start: int
    end: int
    kind: str  # "voiced_without_harmonics" or "unvoiced_with_harmonics"


def spectral_periodicity_check(
    f0: F0Contour,
    mel: MelSpectrogram,
    band: tuple[int, int] = (2, 30),
    flatness_threshold: float = 0.5,
    energy_floor: float = 1e-3,
) -> list[PeriodicityIssue]:
    """Flag frames whose voicing decision contradicts low-band spectral shape.

    Voiced frames with noise-flat low bands, and unvoiced frames showing a
    strong harmonic ridge (low flatness, energy above the floor), are both
    reported as maximal runs.
    """
    if mel.num_frames != len(f0):
        raise ValueError(
            f"frame count mismatch: contour has {len(f0)}, mel has {mel.num_frames}"
        )
    lo, hi = band
    if not (0 <= lo <= hi < mel.mel_order):
        raise ValueError(f"band {band} out of range for mel order {mel.mel_order}")
    sub = mel.linear()[lo : hi + 1]
    flatness = np.exp(np.mean(np.log(sub), axis=0)) / np.mean(sub, axis=0)
    energy = np.mean(sub, axis=0)
    issues = [
        PeriodicityIssue(s, e, "voiced_without_harmonics")
        for s, e in _runs(f0.vuv & (flatness > flatness_threshold))
    ]
    issues += [
        PeriodicityIssue(s, e, "unvoiced_with_harmonics")
        for s, e in _runs(~f0.vuv & (flatness < flatness_threshold) & (energy > energy_floor))
    ]
    return sorted(issues, key=lambda i: (i.start, i.kind))
