"""Joint optimization of the analyzer and synthesizer.

The objective combines four terms: weighted F0-row regression, weighted
KL divergence of the latent distribution against a unit Gaussian, mel
reconstruction error, and the multi-resolution spectral loss on the
synthesized waveform. Weights default to alpha1=100 and alpha2=0.01,
with the KL weight ramped in linearly to avoid posterior collapse.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import container
from .analyzer import Analyzer, AnalyzerConfig, LatentCode, LatentDistribution
from .data import TrainBatch, load_dataset, make_batch
from .spectral import DEFAULT_LOSS_CONFIGS, StftConfig, multi_res_stft_loss
from .synthesizer import Synthesizer, SynthesizerConfig, linear_upsample

CHECKPOINT_FORMAT = 1


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite; message names the offending term."""


@dataclass
class TrainConfig:
    alpha1: float = 100.0
    alpha2: float = 0.01
    learning_rate: float = 2e-4
    batch_size: int = 2
    max_steps: int = 5000
    rng_seed: int = 0
    data_dir: str = ""
    checkpoint_dir: str = ""
    latent_dim: int = 16
    mel_order: int = 80
    sample_rate: int = 16000
    frame_period_ms: float = 5.0
    fft_size: int = 1024
    window_length: int = 400
    crop_frames: int = 400  # 2 s segments
    kl_warmup_steps: int = 10000
    grad_clip: float = 5.0
    f0_floor: float = 60.0
    f0_ceil: float = 600.0
    analyzer_channels: int = 128
    synth_channels: int = 64
    num_harmonics: int = 8
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("alpha1 and alpha2 must be positive")
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2")

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.frame_period_ms / 1000.0))

    def stft_config(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop_length, self.window_length)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LossBreakdown:
    f0_term: float
    kl_term: float
    mel_term: float
    nsf_term: float
    total: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def kl_loss(dist: LatentDistribution) -> float:
    """Time-averaged KL(N(mu, e^logvar) || N(0, I)), summed over latent rows."""
    return float(_kl_term(dist.mu[None], dist.logvar[None]))


def f0_loss(f0_norm_true, z: LatentCode) -> float:
    """Mean squared error between normalized ground-truth F0 and the latent row."""
    target = torch.as_tensor(np.asarray(f0_norm_true), dtype=z.z.dtype)
    if target.ndim != 1 or target.shape[0] != z.num_frames:
        raise ValueError(
            f"F0 target must have length {z.num_frames}, got {tuple(target.shape)}"
        )
    row = torch.clamp(z.z[-1], 0.0, 1.0)
    return float(torch.mean((row - target) ** 2))


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over the mask's True positions; mask broadcasts over extra dims."""
    weight = mask.expand_as(values)
    return (values * weight).sum() / weight.sum().clamp(min=1.0)


def _kl_term(mu, logvar, frame_mask=None) -> torch.Tensor:
    per_frame = 0.5 * (torch.exp(logvar) + mu**2 - 1.0 - logvar).sum(dim=-2)
    if frame_mask is None:
        return per_frame.mean()
    return _masked_mean(per_frame, frame_mask)


@dataclass
class ModelOutputs:
    mu: torch.Tensor
    logvar: torch.Tensor
    z: torch.Tensor
    mel_hat: torch.Tensor
    wave_hat: torch.Tensor


def forward_batch(
    analyzer: Analyzer,
    synth: Synthesizer,
    batch: TrainBatch,
    noise_seed: int,
    sample: bool = True,
) -> ModelOutputs:
    """Encoder -> reparameterized latent -> mask decoder and waveform synth."""
    mu, logvar = analyzer.encode_batch(batch.mel)
    if sample:
        gen = torch.Generator().manual_seed(noise_seed % 2**63)
        eps = torch.randn(mu.shape, generator=gen, dtype=mu.dtype)
        z = mu + torch.exp(0.5 * logvar) * eps
    else:
        z = mu
    mel_hat = analyzer.decode_batch(z, batch.hs_linear, batch.ns_linear)
    cond = linear_upsample(z, batch.hop_length)
    wave_hat = synth(cond, batch.harmonic_excitation, batch.noise_excitation)
    return ModelOutputs(mu, logvar, z, mel_hat, wave_hat)


def loss_terms(
    batch: TrainBatch,
    outputs: ModelOutputs,
    alpha1: float,
    alpha2: float,
    loss_cfgs=DEFAULT_LOSS_CONFIGS,
) -> dict[str, torch.Tensor]:
    """All four objective terms plus the weighted total, as tensors."""
    mask = batch.frame_mask
    latent_rows = outputs.z.shape[-2]
    row = torch.clamp(outputs.z[..., latent_rows - 1, :], 0.0, 1.0)
    f0_term = _masked_mean((row - batch.f0_norm) ** 2, mask)
    kl_term = _kl_term(outputs.mu, outputs.logvar, mask)
    mel_term = _masked_mean((batch.mel - outputs.mel_hat) ** 2, mask[:, None, :])
    nsf_parts = []
    for i, frames in enumerate(batch.valid_frames):
        n = frames * batch.hop_length
        nsf_parts.append(
            multi_res_stft_loss(batch.wave[i, :n], outputs.wave_hat[i, :n], loss_cfgs)
        )
    nsf_term = torch.stack(nsf_parts).mean()
    total = alpha1 * f0_term + alpha2 * kl_term + mel_term + nsf_term
    return {
        "f0_term": f0_term,
        "kl_term": kl_term,
        "mel_term": mel_term,
        "nsf_term": nsf_term,
        "total": total,
    }


def effective_alpha2(cfg: TrainConfig, step: int | None) -> float:
    """Linear KL warm-up from 0 to alpha2 over the first warm-up steps."""
    if step is None or cfg.kl_warmup_steps <= 0:
        return cfg.alpha2
    return cfg.alpha2 * min(1.0, step / cfg.kl_warmup_steps)


def _breakdown(terms: dict[str, torch.Tensor]) -> LossBreakdown:
    return LossBreakdown(**{k: float(v.detach()) for k, v in terms.items()})


def total_loss(
    batch: TrainBatch, outputs: ModelOutputs, cfg: TrainConfig, step: int | None = None
) -> LossBreakdown:
    terms = loss_terms(batch, outputs, cfg.alpha1, effective_alpha2(cfg, step))
    return _breakdown(terms)


def build_models(cfg: TrainConfig) -> tuple[Analyzer, Synthesizer]:
    analyzer = Analyzer(
        AnalyzerConfig(
            mel_order=cfg.mel_order,
            latent_dim=cfg.latent_dim,
            channels=cfg.analyzer_channels,
        ),
        init_seed=cfg.rng_seed,
    )
    synth = Synthesizer(
        SynthesizerConfig(
            latent_dim=cfg.latent_dim,
            channels=cfg.synth_channels,
            num_harmonics=cfg.num_harmonics,
            sample_rate=cfg.sample_rate,
            hop_length=cfg.hop_length,
        ),
        init_seed=cfg.rng_seed + 1,
    )
    return analyzer, synth


def build_optimizer(analyzer: Analyzer, synth: Synthesizer, cfg: TrainConfig):
    params = list(analyzer.parameters()) + list(synth.parameters())
    return torch.optim.Adam(params, lr=cfg.learning_rate)


def train_step(
    batch: TrainBatch,
    analyzer: Analyzer,
    synth: Synthesizer,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    step: int,
) -> LossBreakdown:
    """One gradient step over all parameters; deterministic for a given seed."""
    noise_seed = (cfg.rng_seed * 2654435761 + step) % 2**63
    outputs = forward_batch(analyzer, synth, batch, noise_seed)
    terms = loss_terms(batch, outputs, cfg.alpha1, effective_alpha2(cfg, step))
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise TrainingDiverged(f"non-finite loss term {name!r} at step {step}")
    optimizer.zero_grad()
    terms["total"].backward()
    torch.nn.utils.clip_grad_norm_(
        [p for group in optimizer.param_groups for p in group["params"]], cfg.grad_clip
    )
    optimizer.step()
    return _breakdown(terms)


# --- checkpointing -------------------------------------------------------

_ARCH_FIELDS = (
    "latent_dim",
    "mel_order",
    "analyzer_channels",
    "synth_channels",
    "num_harmonics",
    "sample_rate",
    "frame_period_ms",
)


@dataclass
class Checkpoint:
    analyzer: Analyzer
    synth: Synthesizer
    optimizer_state: dict | None
    step: int
    cfg: TrainConfig
    checkpoint_id: str
    loss_tail: list = field(default_factory=list)


def _state_files(state: dict, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{key}": value.detach().cpu().numpy() for key, value in state.items()}


def save_checkpoint(
    analyzer: Analyzer,
    synth: Synthesizer,
    optimizer: torch.optim.Optimizer | None,
    step: int,
    cfg: TrainConfig,
    path: str | Path,
    loss_tail=(),
) -> str:
    """Write a checkpoint directory: one tensor container per weight + manifest.

    The directory is assembled under a temporary name and swapped into
    place, so a checkpoint either exists completely or not at all.
    Returns the content-derived checkpoint id.
    """
    path = Path(path)
    tmp = path.parent / (path.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    tensors = _state_files(analyzer.state_dict(), "analyzer")
    tensors.update(_state_files(synth.state_dict(), "synth"))
    optim_meta = None
    if optimizer is not None:
        state = optimizer.state_dict()
        optim_meta = {"param_groups": state["param_groups"]}
        for idx, entry in state["state"].items():
            for key, value in entry.items():
                tensors[f"optim.{idx}.{key}"] = (
                    value.detach().cpu().numpy()
                    if isinstance(value, torch.Tensor)
                    else np.asarray(value)
                )

    digest = hashlib.sha256()
    for name in sorted(tensors):
        container.write_tensor(tmp / f"{name}.ten", tensors[name])
        digest.update(name.encode())
        digest.update((tmp / f"{name}.ten").read_bytes())
    checkpoint_id = digest.hexdigest()[:12]

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "step": int(step),
        "rng_seed": cfg.rng_seed,
        "config": dataclasses.asdict(cfg),
        "loss_tail": [dict(t) if isinstance(t, dict) else t.as_dict() for t in loss_tail],
        "optimizer": optim_meta,
        "checkpoint_id": checkpoint_id,
        "tensors": sorted(tensors),
    }
    container.write_sidecar(tmp / "manifest.json", manifest)

    if path.exists():
        shutil.rmtree(path)
    tmp.rename(path)
    return checkpoint_id


def load_checkpoint(path: str | Path, expect: TrainConfig | None = None) -> Checkpoint:
    """Read a checkpoint; all tensors are validated before any state is built."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{path}: not a checkpoint (missing manifest.json)")
    manifest = container.read_sidecar(manifest_path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')}")
    cfg = TrainConfig.from_dict(manifest["config"])
    if expect is not None:
        for name in _ARCH_FIELDS:
            if getattr(expect, name) != getattr(cfg, name):
                raise ValueError(
                    f"checkpoint architecture mismatch on field {name!r}: "
                    f"checkpoint has {getattr(cfg, name)}, requested {getattr(expect, name)}"
                )
    tensors = {name: container.read_tensor(path / f"{name}.ten") for name in manifest["tensors"]}

    analyzer, synth = build_models(cfg)
    analyzer.load_state_dict(
        {
            key[len("analyzer.") :]: torch.as_tensor(val)
            for key, val in tensors.items()
            if key.startswith("analyzer.")
        }
    )
    synth.load_state_dict(
        {
            key[len("synth.") :]: torch.as_tensor(val)
            for key, val in tensors.items()
            if key.startswith("synth.")
        }
    )

    optimizer_state = None
    if manifest.get("optimizer"):
        state: dict[int, dict] = {}
        for key, val in tensors.items():
            if not key.startswith("optim."):
                continue
            _, idx, field_name = key.split(".", 2)
            state.setdefault(int(idx), {})[field_name] = torch.as_tensor(val)
        optimizer_state = {
            "state": state,
            "param_groups": manifest["optimizer"]["param_groups"],
        }

    return Checkpoint(
        analyzer=analyzer,
        synth=synth,
        optimizer_state=optimizer_state,
        step=int(manifest["step"]),
        cfg=cfg,
        checkpoint_id=manifest["checkpoint_id"],
        loss_tail=list(manifest.get("loss_tail", [])),
    )


# --- training loop -------------------------------------------------------


def train(
    cfg: TrainConfig,
    log_path: str | Path | None = None,
    resume: bool = True,
    progress_every: int = 0,
) -> Path:
    """Run the optimization loop; returns the final checkpoint path.

    Logs one JSON record per step ({step, terms..., wall_time}) and
    checkpoints periodically plus at the end ("latest" is always the most
    recent). Two runs with the same config and data produce identical
    loss sequences.
    """
    if not cfg.data_dir:
        raise ValueError("TrainConfig.data_dir is required")
    ckpt_dir = Path(cfg.checkpoint_dir or (Path(cfg.data_dir) / "checkpoints"))
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = Path(log_path) if log_path else ckpt_dir / "train_log.jsonl"

    stft_cfg = cfg.stft_config()
    utts = load_dataset(
        cfg.data_dir,
        cfg.sample_rate,
        cfg.mel_order,
        stft_cfg,
        f0_floor=cfg.f0_floor,
        f0_ceil=cfg.f0_ceil,
    )

    start_step = 0
    latest = ckpt_dir / "latest"
    if resume and latest.exists():
        bundle = load_checkpoint(latest, expect=cfg)
        analyzer, synth = bundle.analyzer, bundle.synth
        optimizer = build_optimizer(analyzer, synth, cfg)
        if bundle.optimizer_state:
            optimizer.load_state_dict(bundle.optimizer_state)
        start_step = bundle.step
    else:
        analyzer, synth = build_models(cfg)
        optimizer = build_optimizer(analyzer, synth, cfg)

    tail: list[LossBreakdown] = []
    t0 = time.time()
    with open(log_path, "a") as log:
        for step in range(start_step + 1, cfg.max_steps + 1):
            rng = np.random.default_rng([cfg.rng_seed, step])
            batch = make_batch(
                utts,
                cfg.batch_size,
                cfg.crop_frames,
                rng,
                stft_cfg,
                f0_floor=cfg.f0_floor,
                f0_ceil=cfg.f0_ceil,
                num_harmonics=cfg.num_harmonics,
            )
            breakdown = train_step(batch, analyzer, synth, optimizer, cfg, step)
            tail.append(breakdown)
            tail = tail[-100:]
            record = {"step": step, **breakdown.as_dict(), "wall_time": time.time() - t0}
            log.write(json.dumps(record, sort_keys=True) + "\n")
            log.flush()
            if progress_every and step % progress_every == 0:
                print(
                    f"step {step}/{cfg.max_steps} total={breakdown.total:.4f} "
                    f"f0={breakdown.f0_term:.5f} mel={breakdown.mel_term:.4f} "
                    f"nsf={breakdown.nsf_term:.4f} kl={breakdown.kl_term:.3f}",
                    flush=True,
                )
            if step % cfg.checkpoint_every == 0 or step == cfg.max_steps:
                save_checkpoint(
                    analyzer, synth, optimizer, step, cfg, latest, loss_tail=tail
                )
    return latest
