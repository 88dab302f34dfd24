import numpy as np
import pytest
import torch

from anavoc.analyzer import LatentCode
from anavoc.f0 import F0Contour
from anavoc.synthesizer import (
    Synthesizer,
    SynthesizerConfig,
    linear_upsample,
    sine_excitation,
    synthesize,
    upsample_controls,
    upsample_f0,
)

from conftest import fft_peak_hz

SMALL = SynthesizerConfig(latent_dim=2, channels=8)


@pytest.fixture(scope="module")
def small_synth():
    return Synthesizer(SMALL, init_seed=5)


def test_upsample_lengths():
    z = LatentCode(torch.randn(4, 200), 2, 5.0)
    contour = F0Contour.from_values(np.full(200, 150.0), 5.0)
    cond, f0_up = upsample_controls(z, contour, 16000)
    assert cond.shape == (4, 16000)
    assert f0_up.shape == (16000,)


def test_upsample_constant_row_stays_constant():
    z = LatentCode(torch.full((4, 20), 0.7), 2, 5.0)
    out = linear_upsample(z.z, 80)
    assert torch.allclose(out, torch.full((4, 1600), 0.7))


def test_upsample_midpoint_interpolation():
    values = np.array([100.0, 200.0])
    up = upsample_f0(values, 80)
    assert up[40] == pytest.approx(150.0)  # halfway between frame anchors
    assert up[0] == pytest.approx(100.0)
    assert up[80] == pytest.approx(200.0)


def test_upsample_f0_holds_zero_through_unvoiced():
    values = np.array([200.0, 0.0, 0.0, 180.0])
    up = upsample_f0(values, 10)
    assert np.all(up[15:25] == 0.0)  # interior of the unvoiced run
    assert not np.any((up > 0) & (up < 100.0))  # no sweep through low Hz


def test_upsample_length_mismatch():
    z = LatentCode(torch.randn(4, 10), 2, 5.0)
    contour = F0Contour.from_values(np.full(11, 100.0), 5.0)
    with pytest.raises(ValueError, match="length mismatch"):
        upsample_controls(z, contour, 16000)


def test_excitation_harmonic_peaks():
    clip = sine_excitation(np.full(16000, 110.0), rng_seed=0)
    assert abs(fft_peak_hz(clip.samples, 16000, 60, 165) - 110.0) <= 1.0
    assert abs(fft_peak_hz(clip.samples, 16000, 166, 275) - 220.0) <= 1.0


def test_excitation_unvoiced_is_noise():
    clip = sine_excitation(np.zeros(16000), rng_seed=1)
    assert abs(clip.samples.std() - 0.003) <= 0.0003


def test_excitation_deterministic():
    a = sine_excitation(np.full(8000, 200.0), rng_seed=7)
    b = sine_excitation(np.full(8000, 200.0), rng_seed=7)
    assert np.array_equal(a.samples, b.samples)


def test_excitation_rejects_negative():
    with pytest.raises(ValueError, match="non-negative"):
        sine_excitation(np.array([-1.0]), rng_seed=0)


def test_excitation_doubling_control_doubles_peak():
    f = 140.0
    lo = sine_excitation(np.full(16000, f), rng_seed=3)
    hi = sine_excitation(np.full(16000, 2 * f), rng_seed=3)
    peak_lo = fft_peak_hz(lo.samples, 16000, 0.6 * f, 1.45 * f)
    peak_hi = fft_peak_hz(hi.samples, 16000, 1.2 * f, 2.9 * f)
    assert peak_hi == pytest.approx(2 * peak_lo, abs=2.0)


def test_excitation_excludes_harmonics_above_nyquist():
    clip = sine_excitation(np.full(16000, 3000.0), rng_seed=0)
    spec = np.abs(np.fft.rfft(clip.samples))
    freqs = np.fft.rfftfreq(len(clip.samples), 1 / 16000)
    in_band = spec[(freqs > 2900) & (freqs < 3100)].max()
    # 9 kHz would alias to 7 kHz; require nothing comparable up there
    aliased = spec[(freqs > 6500) & (freqs < 7500)].max()
    assert aliased < 0.05 * in_band


def test_synthesize_output_length(small_synth):
    z = LatentCode(torch.randn(4, 200), 2, 5.0)
    contour = F0Contour.from_values(np.full(200, 220.0), 5.0)
    out = synthesize(z, contour, small_synth, rng_seed=0)
    assert len(out) == 200 * 80
    assert out.sample_rate == 16000


def test_synthesize_zero_projections_give_zero(small_synth):
    z = LatentCode(torch.randn(4, 50), 2, 5.0)
    contour = F0Contour.from_values(np.full(50, 150.0), 5.0)
    stripped = Synthesizer(SMALL, init_seed=5)
    with torch.no_grad():
        for branch in (stripped.harmonic_branch, stripped.noise_branch):
            branch.proj.weight.zero_()
            branch.proj.bias.zero_()
    out = synthesize(z, contour, stripped, rng_seed=0)
    assert np.all(out.samples == 0.0)


def test_synthesize_finite_for_random_weights_and_inputs(rng):
    for seed in range(3):
        synth = Synthesizer(SMALL, init_seed=seed)
        with torch.no_grad():
            for p in synth.parameters():
                p.add_(torch.as_tensor(rng.normal(0, 1.0, tuple(p.shape)), dtype=p.dtype))
        frames = int(rng.integers(1, 80))
        z = LatentCode(torch.randn(4, frames) * 10, 2, 5.0)
        values = np.where(rng.random(frames) < 0.5, 0.0, rng.uniform(60, 600, frames))
        contour = F0Contour.from_values(values, 5.0)
        out = synthesize(z, contour, synth, rng_seed=seed)
        assert np.all(np.isfinite(out.samples))
        assert np.max(np.abs(out.samples)) <= 1.0
        assert len(out) == frames * 80


def test_synthesize_deterministic(small_synth):
    z = LatentCode(torch.randn(4, 60), 2, 5.0)
    contour = F0Contour.from_values(np.full(60, 180.0), 5.0)
    a = synthesize(z, contour, small_synth, rng_seed=11)
    b = synthesize(z, contour, small_synth, rng_seed=11)
    assert np.array_equal(a.samples, b.samples)


def test_phase_continuity_bound():
    # phase steps come from the accumulator, so the largest per-sample
    # increment is 2*pi*H*f_max/sr for the top harmonic
    f0 = np.full(4000, 400.0)
    sr, harmonics = 16000, 8
    phase = 2 * np.pi * np.cumsum(f0) / sr
    steps = np.abs(np.diff(harmonics * phase))
    assert steps.max() <= 2 * np.pi * harmonics * 400.0 / sr + 1e-9


def test_condition_row_count_checked(small_synth):
    with pytest.raises(ValueError, match="rows"):
        small_synth(torch.randn(1, 6, 100), torch.randn(1, 1, 100), torch.randn(1, 1, 100))
