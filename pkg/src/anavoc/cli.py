"""Command-line entry point: features, training, analysis, synthesis,
pitch manipulation, evaluation, diagnostics, and plots."""
from __future__ import annotations

import dataclasses
import functools
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import container, metrics, pipeline
from .analyzer import load_latent, save_latent
from .audio_io import load_wav, save_wav
from .corpus import make_synthetic_corpus
from .data import find_f0_file, load_utterance
from .f0 import (
    AperiodicityMap,
    load_f0_external,
    save_f0,
    spectral_periodicity_check,
    vuv_agreement,
)
from .spectral import load_mel, save_mel
from .synthesizer import synthesize
from .training import TrainConfig, load_checkpoint, train


def _fail_cleanly(func):
    """Convert expected failures into a one-line error and nonzero exit."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, OSError, RuntimeError, KeyError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _load_config(config_path: str | None, **overrides) -> TrainConfig:
    """Precedence: built-in defaults < JSON config file < command-line flags."""
    cfg = TrainConfig.from_json(config_path) if config_path else TrainConfig()
    set_overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **set_overrides) if set_overrides else cfg


@click.group(help=__doc__)
def main():
    pass


_SIDECAR_SUFFIXES = {".txt", ".json", ".jsonl"}


def _extract_one(args):
    wav, out_dir, f0_path, cfg = args
    utt = load_utterance(
        wav,
        cfg.sample_rate,
        cfg.mel_order,
        cfg.stft_config(),
        f0_path=f0_path,
        f0_floor=cfg.f0_floor,
        f0_ceil=cfg.f0_ceil,
    )
    save_mel(utt.mel, out_dir / f"{utt.stem}.mel")
    save_f0(utt.f0, out_dir / f"{utt.stem}.f0.txt")
    return utt.stem


@main.command("features")
@click.argument("in_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--f0-dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@_fail_cleanly
def cmd_features(in_dir, out_dir, f0_dir, config_path, seed, jobs):
    """Extract mel + F0 feature files for every WAV in IN_DIR."""
    cfg = _load_config(config_path, rng_seed=seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for entry in sorted(in_dir.iterdir()):
        if not entry.is_file():
            continue
        if entry.suffix.lower() == ".wav":
            tasks.append((entry, out_dir, find_f0_file(entry, f0_dir), cfg))
        elif entry.suffix.lower() not in _SIDECAR_SUFFIXES:
            click.echo(f"warning: skipping non-audio file {entry.name}", err=True)
    if not tasks:
        raise click.ClickException(f"no WAV files found in {in_dir}")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            stems = list(pool.map(_extract_one, tasks))
    else:
        stems = [_extract_one(t) for t in tasks]
    click.echo(f"wrote features for {len(stems)} utterances to {out_dir}")


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint-dir", type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--progress-every", type=int, default=50, show_default=True)
@click.option("--no-resume", is_flag=True, default=False)
@_fail_cleanly
def cmd_train(data_dir, checkpoint_dir, config_path, seed, max_steps, batch_size, progress_every, no_resume):
    """Jointly train the analyzer and synthesizer on a directory of WAVs."""
    cfg = _load_config(
        config_path,
        data_dir=data_dir,
        checkpoint_dir=checkpoint_dir,
        rng_seed=seed,
        max_steps=max_steps,
        batch_size=batch_size,
    )
    path = train(cfg, resume=not no_resume, progress_every=progress_every)
    click.echo(f"final checkpoint: {path}")


@main.command("analyze")
@click.argument("in_wav", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def cmd_analyze(in_wav, checkpoint, output):
    """Encode a WAV into a latent code container."""
    bundle = load_checkpoint(checkpoint)
    clip = _load_at_rate(in_wav, bundle.cfg.sample_rate)
    _, z = pipeline.analyze_clip(clip, bundle.analyzer, bundle.cfg)
    save_latent(z, output, checkpoint_id=bundle.checkpoint_id)
    click.echo(f"latent code ({2 * z.latent_dim} x {z.num_frames}) -> {output}")


@main.command("synthesize")
@click.argument("latent_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--f0", "f0_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_cleanly
def cmd_synthesize(latent_path, checkpoint, f0_path, output, seed):
    """Render a waveform from a latent container (F0 from file or latent row)."""
    bundle = load_checkpoint(checkpoint)
    z = load_latent(latent_path)
    if f0_path:
        contour = load_f0_external(f0_path, z.frame_period_ms)
    else:
        contour = pipeline.latent_contour(z, bundle.cfg)
    clip = synthesize(z, contour, bundle.synth, rng_seed=seed)
    save_wav(clip, output)
    click.echo(f"synthesized {clip.duration_s:.2f} s -> {output}")


@main.command("copysyn")
@click.argument("in_wav", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_cleanly
def cmd_copysyn(in_wav, checkpoint, output, seed):
    """Analyze a WAV and resynthesize it unchanged (vocoder fidelity check)."""
    bundle = load_checkpoint(checkpoint)
    clip = _load_at_rate(in_wav, bundle.cfg.sample_rate)
    out, _, _ = pipeline.copy_synthesize(clip, bundle.analyzer, bundle.synth, bundle.cfg, seed)
    save_wav(out, output)
    click.echo(f"copy synthesis -> {output}")


@main.command("pitch-shift")
@click.argument("in_wav", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--semitones", required=True, type=float)
@click.option("--checkpoint", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_cleanly
def cmd_pitch_shift(in_wav, semitones, checkpoint, output, seed):
    """Shift voiced F0 by a semitone offset through the latent code."""
    if abs(semitones) > 24:
        raise click.ClickException(
            f"semitone shift must be within +/-24, got {semitones:+g}"
        )
    bundle = load_checkpoint(checkpoint)
    clip = _load_at_rate(in_wav, bundle.cfg.sample_rate)
    out, target = pipeline.pitch_shift(
        clip, semitones, bundle.analyzer, bundle.synth, bundle.cfg, seed
    )
    save_wav(out, output)
    voiced = target.values[target.vuv]
    target_median = float(np.median(voiced)) if voiced.size else 0.0
    measured = pipeline.measured_median_f0(out, bundle.cfg)
    click.echo(
        json.dumps(
            {
                "output": str(output),
                "semitones": semitones,
                "target_median_hz": round(target_median, 3),
                "measured_median_hz": round(measured, 3),
            },
            sort_keys=True,
        )
    )


@main.command("eval")
@click.argument("ref_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("hyp_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--jobs", type=int, default=1, show_default=True)
@_fail_cleanly
def cmd_eval(ref_dir, hyp_dir, output, csv_path, jobs):
    """Objective metrics for paired WAVs (matched by file stem)."""
    report = metrics.evaluate_corpus(ref_dir, hyp_dir, jobs=jobs)
    output.write_text(report.to_json())
    if csv_path:
        csv_path.write_text(report.to_csv())
    agg = report.aggregates or {}
    summary = {
        "evaluated": report.evaluated,
        "failures": len(report.failures),
        "mcd_db_mean": round(agg.get("mcd_db", {}).get("mean", float("nan")), 4),
        "f0_md_hz_mean": round(agg.get("f0_md_hz", {}).get("mean", float("nan")), 4),
    }
    click.echo(json.dumps(summary, sort_keys=True))


@main.command("diagnose")
@click.option("--f0", "f0_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ap", "ap_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--mel", "mel_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frame-period", type=float, default=5.0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def cmd_diagnose(f0_path, ap_path, mel_path, frame_period, output):
    """Report V/UV and periodicity inconsistencies between vocoder parameters."""
    if ap_path is None and mel_path is None:
        raise click.ClickException("provide --ap and/or --mel to check against")
    contour = load_f0_external(f0_path, frame_period)
    period_s = contour.frame_period_ms / 1000.0

    def _stamp(start, end, **extra):
        return {
            "start_frame": int(start),
            "end_frame": int(end),
            "start_s": round(start * period_s, 6),
            "end_s": round((end + 1) * period_s, 6),
            **extra,
        }

    result = {"f0_file": str(f0_path), "frame_period_ms": contour.frame_period_ms}
    if ap_path:
        ap = AperiodicityMap(container.read_tensor(ap_path), contour.frame_period_ms)
        result["vuv_agreement"] = [
            _stamp(s, e) for s, e in vuv_agreement(contour, ap)
        ]
    if mel_path:
        mel = load_mel(mel_path)
        result["spectral_periodicity"] = [
            _stamp(i.start, i.end, kind=i.kind)
            for i in spectral_periodicity_check(contour, mel)
        ]
    output.write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    issues = len(result.get("vuv_agreement", [])) + len(result.get("spectral_periodicity", []))
    click.echo(f"{issues} inconsistent range(s) -> {output}")


@main.command("plot")
@click.option("--f0", "f0_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--mel", "mel_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--frame-period", type=float, default=5.0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False, path_type=Path))
@_fail_cleanly
def cmd_plot(f0_paths, mel_path, frame_period, output):
    """Overlay F0 contours above an optional mel-spectrogram heatmap."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = 2 if mel_path else 1
    fig, axes = plt.subplots(rows, 1, figsize=(10, 3 * rows), sharex=True, squeeze=False)
    ax_f0 = axes[0][0]
    for path in f0_paths:
        contour = load_f0_external(path, frame_period)
        t = np.arange(len(contour)) * contour.frame_period_ms / 1000.0
        values = np.where(contour.vuv, contour.values, np.nan)
        ax_f0.plot(t, values, label=path.stem)
    ax_f0.set_ylabel("F0 [Hz]")
    ax_f0.legend(loc="upper right", fontsize="small")
    if mel_path:
        mel = load_mel(mel_path)
        extent = [0, mel.num_frames * mel.frame_period_ms / 1000.0, 0, mel.mel_order]
        axes[1][0].imshow(
            mel.values, origin="lower", aspect="auto", extent=extent, cmap="magma"
        )
        axes[1][0].set_ylabel("mel bin")
        axes[1][0].set_xlabel("time [s]")
    else:
        ax_f0.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(output, dpi=120)
    plt.close(fig)
    click.echo(f"plot -> {output}")


@main.command("make-corpus")
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--minutes", type=float, default=10.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_fail_cleanly
def cmd_make_corpus(out_dir, minutes, seed):
    """Generate the synthetic vowel corpus used for desk-scale training."""
    summary = make_synthetic_corpus(out_dir, minutes=minutes, seed=seed)
    click.echo(json.dumps(summary, sort_keys=True))


def _load_at_rate(path, sample_rate):
    from .audio_io import resample

    clip = load_wav(path)
    if clip.sample_rate != sample_rate:
        clip = resample(clip, sample_rate)
    return clip


if __name__ == "__main__":
    main()
