"""Objective evaluation: MCD, F0 RMSE, median F0 deviation, V/UV error.

All comparisons assume copy synthesis (a shared frame clock), so no time
warping is applied. F0 deviations are computed over frames voiced in at
least one contour with unvoiced frames counted as 0 Hz; that makes RMSE
blow up on V/UV disagreements while the median stays robust to them.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, load_wav, resample
from .f0 import F0Contour, estimate_f0, load_f0_external
from .spectral import StftConfig, mel_cepstrum

MCD_CONSTANT = 10.0 * math.sqrt(2.0) / math.log(10.0)


def mcd_from_cepstra(c_ref: np.ndarray, c_hyp: np.ndarray) -> float:
    """dB distortion from (order+1, T) cepstra; coefficient 0 is excluded."""
    c_ref = np.asarray(c_ref, dtype=np.float64)
    c_hyp = np.asarray(c_hyp, dtype=np.float64)
    if c_ref.shape != c_hyp.shape:
        raise ValueError(f"cepstra shapes differ: {c_ref.shape} vs {c_hyp.shape}")
    dist = np.sqrt(np.sum((c_ref[1:] - c_hyp[1:]) ** 2, axis=0))
    return MCD_CONSTANT * float(np.mean(dist))


def mcd(
    y_ref: AudioClip,
    y_hyp: AudioClip,
    order: int = 24,
    mel_order: int = 80,
    cfg: StftConfig | None = None,
) -> float:
    """Mel-cepstral distortion in dB between frame-aligned signals."""
    if len(y_ref) == 0 or len(y_hyp) == 0:
        raise ValueError("cannot compute MCD of an empty signal")
    if y_ref.sample_rate != y_hyp.sample_rate:
        raise ValueError(
            f"sample rates differ: {y_ref.sample_rate} vs {y_hyp.sample_rate}"
        )
    n = max(len(y_ref), len(y_hyp))
    ref = AudioClip(np.pad(y_ref.samples, (0, n - len(y_ref))), y_ref.sample_rate)
    hyp = AudioClip(np.pad(y_hyp.samples, (0, n - len(y_hyp))), y_hyp.sample_rate)
    return mcd_from_cepstra(
        mel_cepstrum(ref, order, mel_order, cfg), mel_cepstrum(hyp, order, mel_order, cfg)
    )


def _included_diffs(ref: F0Contour, hyp: F0Contour) -> np.ndarray:
    if len(ref) != len(hyp):
        raise ValueError(f"contour lengths differ: {len(ref)} vs {len(hyp)}")
    include = ref.vuv | hyp.vuv
    return (ref.values - hyp.values)[include]


def f0_rmse(ref: F0Contour, hyp: F0Contour) -> float:
    """RMSE in Hz over frames voiced in at least one contour (unvoiced = 0 Hz)."""
    diffs = _included_diffs(ref, hyp)
    if diffs.size == 0:
        raise ValueError("no voiced frames in either contour")
    return float(np.sqrt(np.mean(diffs**2)))


def f0_md(ref: F0Contour, hyp: F0Contour) -> float:
    """Median absolute F0 difference in Hz (outlier-robust deviation)."""
    diffs = _included_diffs(ref, hyp)
    if diffs.size == 0:
        raise ValueError("no voiced frames in either contour")
    return float(np.median(np.abs(diffs)))


def vuv_error_rate(ref: F0Contour, hyp: F0Contour) -> float:
    """Fraction of frames with opposite voicing flags."""
    if len(ref) != len(hyp):
        raise ValueError(f"contour lengths differ: {len(ref)} vs {len(hyp)}")
    return float(np.mean(ref.vuv != hyp.vuv))


@dataclass(frozen=True)
class EvalConfig:
    mcd_order: int = 24
    mel_order: int = 80
    sample_rate: int = 16000
    frame_period_ms: float = 5.0
    f0_floor: float = 60.0
    f0_ceil: float = 600.0


@dataclass
class EvalReport:
    utterances: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    unpaired_ref: list[str] = field(default_factory=list)
    unpaired_hyp: list[str] = field(default_factory=list)
    evaluated: int = 0
    std_convention: str = "population"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        cols = ["stem", "mcd_db", "f0_rmse_hz", "f0_md_hz", "vuv_error_rate"]
        lines = [",".join(cols)]
        for row in self.utterances:
            lines.append(",".join(str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


METRIC_KEYS = ("mcd_db", "f0_rmse_hz", "f0_md_hz", "vuv_error_rate")


def aggregate(values) -> dict:
    """Mean and population standard deviation."""
    arr = np.asarray(list(values), dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def _load_pair_clip(path: Path, cfg: EvalConfig) -> AudioClip:
    clip = load_wav(path)
    if clip.sample_rate != cfg.sample_rate:
        clip = resample(clip, cfg.sample_rate)
    return clip


def _contour_for(path: Path, clip: AudioClip, cfg: EvalConfig) -> F0Contour:
    f0_file = path.with_suffix(".f0.txt")
    if f0_file.exists():
        return load_f0_external(f0_file, cfg.frame_period_ms)
    return estimate_f0(clip, cfg.frame_period_ms, cfg.f0_floor, cfg.f0_ceil)


def _evaluate_pair(args) -> dict:
    stem, ref_path, hyp_path, cfg = args
    ref = _load_pair_clip(ref_path, cfg)
    hyp = _load_pair_clip(hyp_path, cfg)
    ref_f0 = _contour_for(ref_path, ref, cfg)
    hyp_f0 = _contour_for(hyp_path, hyp, cfg)
    frames = min(len(ref_f0), len(hyp_f0))
    ref_f0 = F0Contour.from_values(ref_f0.values[:frames], cfg.frame_period_ms)
    hyp_f0 = F0Contour.from_values(hyp_f0.values[:frames], cfg.frame_period_ms)
    return {
        "stem": stem,
        "mcd_db": mcd(ref, hyp, cfg.mcd_order, cfg.mel_order),
        "f0_rmse_hz": f0_rmse(ref_f0, hyp_f0),
        "f0_md_hz": f0_md(ref_f0, hyp_f0),
        "vuv_error_rate": vuv_error_rate(ref_f0, hyp_f0),
    }


def evaluate_corpus(
    ref_dir: str | Path,
    hyp_dir: str | Path,
    cfg: EvalConfig | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Pair WAVs by stem and compute per-utterance metrics plus aggregates.

    Per-utterance failures are recorded, not fatal; unpaired files are
    listed explicitly. Results are sorted by stem, so the report bytes do
    not depend on the degree of parallelism.
    """
    cfg = cfg or EvalConfig()
    ref_dir, hyp_dir = Path(ref_dir), Path(hyp_dir)
    refs = {p.stem: p for p in sorted(ref_dir.glob("*.wav"))}
    hyps = {p.stem: p for p in sorted(hyp_dir.glob("*.wav"))}
    shared = sorted(set(refs) & set(hyps))
    if not shared:
        raise FileNotFoundError(
            f"no paired WAV files between {ref_dir} and {hyp_dir}"
        )
    report = EvalReport(
        unpaired_ref=sorted(set(refs) - set(hyps)),
        unpaired_hyp=sorted(set(hyps) - set(refs)),
    )
    tasks = [(stem, refs[stem], hyps[stem], cfg) for stem in shared]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_eval_pair_safe, tasks))
    else:
        outcomes = [_eval_pair_safe(t) for t in tasks]
    for stem, result, error in outcomes:
        if error is not None:
            report.failures.append({"stem": stem, "error": error})
        else:
            report.utterances.append(result)
    report.evaluated = len(report.utterances)
    if report.utterances:
        report.aggregates = {
            key: aggregate(row[key] for row in report.utterances) for key in METRIC_KEYS
        }
    return report


def _eval_pair_safe(args):
    stem = args[0]
    try:
        return stem, _evaluate_pair(args), None
    except Exception as exc:  # per-utterance robustness contract
        return stem, None, f"{type(exc).__name__}: {exc}"
