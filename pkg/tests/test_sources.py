import numpy as np
import pytest

from anavoc.f0 import F0Contour
from anavoc.sources import harmonic_source, noise_source
from anavoc.spectral import mel_spectrogram

from conftest import fft_peak_hz


def constant_contour(freq, frames=200):
    return F0Contour.from_values(np.full(frames, float(freq)), 5.0)


def test_100hz_has_all_harmonics_below_nyquist():
    clip = harmonic_source(constant_contour(100.0), 16000)
    assert len(clip) == 16000
    # FFT-peak oracle at 1 Hz resolution: local argmax near each k*100 Hz
    for k in range(1, 80):  # 100..7900 Hz
        peak = fft_peak_hz(clip.samples, 16000, k * 100 - 49, k * 100 + 49)
        assert abs(peak - k * 100) <= 1.0, f"harmonic {k} at {peak}"


def test_all_unvoiced_gives_silence():
    contour = F0Contour.from_values(np.zeros(100), 5.0)
    clip = harmonic_source(contour, 16000)
    assert np.all(clip.samples == 0.0)


def test_3000hz_has_exactly_two_harmonics():
    clip = harmonic_source(constant_contour(3000.0), 16000)
    spec = np.abs(np.fft.rfft(clip.samples))
    threshold = 0.05 * spec.max()
    strong = spec > threshold
    # count connected bands of strong bins
    bands = np.flatnonzero(np.diff(strong.astype(int)) == 1).size + int(strong[0])
    assert bands == 2
    assert abs(fft_peak_hz(clip.samples, 16000, 2500, 3500) - 3000) <= 1.0
    assert abs(fft_peak_hz(clip.samples, 16000, 5500, 6500) - 6000) <= 1.0


def test_bounded_amplitude(rng):
    for _ in range(5):
        values = np.where(rng.random(150) < 0.4, 0.0, rng.uniform(80, 500, 150))
        clip = harmonic_source(F0Contour.from_values(values, 5.0), 16000)
        assert np.max(np.abs(clip.samples)) <= 0.9 + 1e-12


def test_unvoiced_frames_silent_with_fades():
    values = np.zeros(60)
    values[20:40] = 200.0
    clip = harmonic_source(F0Contour.from_values(values, 5.0), 16000)
    assert np.all(clip.samples[: 20 * 80] == 0.0)
    assert np.all(clip.samples[40 * 80 :] == 0.0)
    assert np.max(np.abs(clip.samples[20 * 80 : 40 * 80])) > 0.1


def test_noise_deterministic():
    a = noise_source(5000, rng_seed=42)
    b = noise_source(5000, rng_seed=42)
    assert np.array_equal(a.samples, b.samples)
    c = noise_source(5000, rng_seed=43)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_statistics():
    clip = noise_source(160000, rng_seed=0)
    # CLT: sigma_mean = 0.1/400 = 2.5e-4, bound is 8 sigma
    assert abs(clip.samples.mean()) <= 0.002
    assert abs(clip.samples.std() - 0.1) <= 0.005


def test_noise_requires_positive_length():
    with pytest.raises(ValueError, match="positive"):
        noise_source(0, rng_seed=0)


def test_harmonic_ridge_exceeds_noise_ridge():
    # the property the decoder masks rely on: the harmonic source shows a
    # low-band spectral ridge (peaky bins) that the noise source lacks
    contour = constant_contour(250.0)
    hs = mel_spectrogram(harmonic_source(contour, 16000)).linear()
    ns = mel_spectrogram(noise_source(len(contour) * 80, 0)).linear()
    low = slice(2, 31)
    hs_contrast = np.median(hs[low].max(axis=0) / hs[low].mean(axis=0))
    ns_contrast = np.median(ns[low].max(axis=0) / ns[low].mean(axis=0))
    assert hs_contrast > ns_contrast
