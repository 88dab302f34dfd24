import struct

import numpy as np
import pytest

from anavoc.audio_io import AudioClip
from anavoc.f0 import (
    AperiodicityMap,
    F0Contour,
    contour_from_normalized,
    denormalize_f0,
    estimate_f0,
    load_f0_external,
    normalize_f0,
    save_f0,
    spectral_periodicity_check,
    vuv_agreement,
)
from anavoc.sources import harmonic_source
from anavoc.spectral import mel_spectrogram

from conftest import tone


# --- loading ---------------------------------------------------------------


def test_load_text_contour(tmp_path):
    path = tmp_path / "a.f0.txt"
    path.write_text("0\n110.5\n0\n")
    contour = load_f0_external(path, 5.0)
    assert np.array_equal(contour.values, [0.0, 110.5, 0.0])
    assert np.array_equal(contour.vuv, [False, True, False])


def test_load_float32_binary(tmp_path):
    path = tmp_path / "a.f0"
    values = [0.0, 220.25, 180.5, 0.0]
    path.write_bytes(struct.pack("<4f", *values))
    contour = load_f0_external(path, 5.0)
    assert np.allclose(contour.values, values)


def test_load_empty_file_errors(tmp_path):
    path = tmp_path / "e.f0.txt"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_f0_external(path, 5.0)


def test_load_negative_value_errors(tmp_path):
    path = tmp_path / "n.f0.txt"
    path.write_text("100\n-1\n")
    with pytest.raises(ValueError, match="negative"):
        load_f0_external(path, 5.0)


def test_load_nan_errors(tmp_path):
    path = tmp_path / "n.f0.txt"
    path.write_text("100\nnan\n")
    with pytest.raises(ValueError, match="finite"):
        load_f0_external(path, 5.0)


def test_save_load_round_trip(tmp_path):
    contour = F0Contour.from_values([0.0, 123.456, 200.0, 0.0], 5.0)
    save_f0(contour, tmp_path / "c.f0.txt")
    back = load_f0_external(tmp_path / "c.f0.txt", 5.0)
    assert np.allclose(back.values, contour.values, atol=1e-6)


def test_contour_invariant_enforced():
    with pytest.raises(ValueError, match="V/UV"):
        F0Contour(np.array([0.0, 100.0]), np.array([True, True]), 5.0)


# --- estimation ------------------------------------------------------------


def interior_slice(contour, clip):
    """Frames whose analysis window lies fully inside the signal."""
    hop = int(round(clip.sample_rate * contour.frame_period_ms / 1000.0))
    margin = -(-clip.sample_rate // 60 // hop // 2) + 1
    return slice(2 * margin, len(contour) - 2 * margin)


def test_estimate_pure_tone_220():
    clip = tone(220.0, 1.0)
    contour = estimate_f0(clip)
    inner = interior_slice(contour, clip)
    assert np.all(contour.vuv[inner])
    values = contour.values[inner]
    assert np.all(values >= 220 * 0.98)
    assert np.all(values <= 220 * 1.02)


@pytest.mark.parametrize("freq", [80.0, 123.0, 200.0, 287.5, 341.0, 400.0])
def test_estimate_accuracy_across_range(freq):
    clip = tone(freq, 0.8)
    contour = estimate_f0(clip)
    inner = interior_slice(contour, clip)
    values = contour.values[inner]
    voiced = values > 0
    within = np.abs(values[voiced] - freq) <= 0.02 * freq
    assert voiced.mean() >= 0.95
    assert within.mean() >= 0.95


def test_estimate_white_noise_mostly_unvoiced():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        clip = AudioClip(np.clip(0.3 * rng.standard_normal(16000), -1, 1), 16000)
        contour = estimate_f0(clip)
        assert (~contour.vuv).mean() >= 0.9


def test_estimate_silence_all_unvoiced():
    contour = estimate_f0(AudioClip(np.zeros(8000), 16000))
    assert not contour.vuv.any()


def test_estimate_bad_bounds():
    with pytest.raises(ValueError, match="floor"):
        estimate_f0(tone(200.0, 0.1), f0_floor=500, f0_ceil=100)


# --- normalization ---------------------------------------------------------


def test_normalize_boundaries():
    contour = F0Contour.from_values([60.0, 600.0, 0.0], 5.0)
    norm = normalize_f0(contour)
    assert norm[0] == pytest.approx(1e-4)  # floor reserved for unvoiced 0
    assert norm[1] == pytest.approx(1.0)
    assert norm[2] == 0.0


def test_normalize_round_trip(rng):
    values = np.exp(rng.uniform(np.log(60.5), np.log(600.0), 1000))
    contour = F0Contour.from_values(values, 5.0)
    norm = normalize_f0(contour)
    assert np.all(norm > 0) and np.all(norm <= 1)
    back = denormalize_f0(norm)
    assert np.max(np.abs(back - values) / values) < 1e-6


def test_normalize_range_property(rng):
    values = np.where(rng.random(500) < 0.3, 0.0, rng.uniform(60, 600, 500))
    contour = F0Contour.from_values(values, 5.0)
    norm = normalize_f0(contour)
    assert np.all(norm >= 0.0) and np.all(norm <= 1.0)
    assert np.all((norm == 0) == ~contour.vuv)
    assert np.all(norm[contour.vuv] > 0)


def test_contour_from_normalized_round_trip():
    contour = F0Contour.from_values([0.0, 100.0, 250.0, 0.0, 590.0], 5.0)
    back = contour_from_normalized(normalize_f0(contour), 5.0)
    assert np.array_equal(back.vuv, contour.vuv)
    assert np.allclose(back.values[back.vuv], contour.values[contour.vuv], rtol=1e-9)


# --- V/UV agreement --------------------------------------------------------


def _ap(values_1d):
    return AperiodicityMap(np.asarray(values_1d, dtype=float)[None, :], 5.0)


def test_vuv_agreement_full_agreement():
    contour = F0Contour.from_values(np.full(20, 200.0), 5.0)
    assert vuv_agreement(contour, _ap(np.zeros(20))) == []


def test_vuv_agreement_constructed_disagreement():
    # contour says frames 10..19 are voiced; aperiodicity (1.0 everywhere)
    # says nothing is voiced, so only the voiced run disagrees
    values = np.zeros(30)
    values[10:20] = 150.0
    contour = F0Contour.from_values(values, 5.0)
    assert vuv_agreement(contour, _ap(np.ones(30))) == [(10, 19)]


def test_vuv_agreement_single_frame_runs():
    values = np.full(8, 100.0)
    contour = F0Contour.from_values(values, 5.0)
    ap = np.zeros(8)
    ap[3] = 1.0
    ap[5] = 1.0
    assert vuv_agreement(contour, _ap(ap)) == [(3, 3), (5, 5)]


def test_vuv_agreement_matches_brute_force(rng):
    for _ in range(200):
        n = int(rng.integers(1, 40))
        vuv = rng.random(n) < 0.5
        values = np.where(vuv, 150.0, 0.0)
        contour = F0Contour.from_values(values, 5.0)
        ap_vals = rng.random(n)
        got = vuv_agreement(contour, _ap(ap_vals), ap_threshold=0.5)
        # brute-force oracle: per-frame disagreement then run merging
        disagree = [(ap_vals[i] < 0.5) != vuv[i] for i in range(n)]
        expected = []
        i = 0
        while i < n:
            if disagree[i]:
                j = i
                while j + 1 < n and disagree[j + 1]:
                    j += 1
                expected.append((i, j))
                i = j + 1
            else:
                i += 1
        assert got == expected


def test_vuv_agreement_length_mismatch():
    contour = F0Contour.from_values(np.zeros(5), 5.0)
    with pytest.raises(ValueError, match="mismatch"):
        vuv_agreement(contour, _ap(np.zeros(6)))


# --- spectral periodicity --------------------------------------------------
#
# Constructions analyze the interior of a longer steady recording, so no
# analysis window overlaps the signal boundary (edge windows genuinely look
# like broadband transients and would be flagged for real reasons).

from anavoc.spectral import MelSpectrogram  # noqa: E402


def interior_tone_mel(freq=250.0, frames=200, margin=8):
    contour = F0Contour.from_values(np.full(frames + 2 * margin, freq), 5.0)
    mel = mel_spectrogram(harmonic_source(contour, 16000))
    return MelSpectrogram(
        mel.values[:, margin : margin + frames], mel.mel_order,
        mel.frame_period_ms, mel.sample_rate,
    )


def interior_noise_mel(frames=200, margin=8, seed=7):
    rng = np.random.default_rng(seed)
    n = (frames + 2 * margin) * 80
    clip = AudioClip(np.clip(0.3 * rng.standard_normal(n), -1, 1), 16000)
    mel = mel_spectrogram(clip)
    return MelSpectrogram(
        mel.values[:, margin : margin + frames], mel.mel_order,
        mel.frame_period_ms, mel.sample_rate,
    )


def test_periodicity_consistent_tone_is_clean():
    mel = interior_tone_mel()
    contour = F0Contour.from_values(np.full(200, 250.0), 5.0)
    assert spectral_periodicity_check(contour, mel) == []


def test_periodicity_consistent_noise_is_clean():
    mel = interior_noise_mel()
    contour = F0Contour.from_values(np.zeros(200), 5.0)
    assert spectral_periodicity_check(contour, mel) == []


def test_periodicity_tone_forced_unvoiced_flagged_exactly():
    mel = interior_tone_mel()
    values = np.full(200, 250.0)
    values[50:100] = 0.0  # deny voicing on an interior run
    contour = F0Contour.from_values(values, 5.0)
    issues = spectral_periodicity_check(contour, mel)
    assert issues == [(50, 99, "unvoiced_with_harmonics")]


def test_periodicity_noise_forced_voiced_flagged_exactly():
    mel = interior_noise_mel()
    values = np.zeros(200)
    values[50:100] = 250.0  # claim voicing over noise
    contour = F0Contour.from_values(values, 5.0)
    issues = spectral_periodicity_check(contour, mel)
    assert issues == [(50, 99, "voiced_without_harmonics")]


def test_periodicity_all_noise_forced_voiced_flags_everything():
    mel = interior_noise_mel()
    contour = F0Contour.from_values(np.full(200, 200.0), 5.0)
    assert spectral_periodicity_check(contour, mel) == [
        (0, 199, "voiced_without_harmonics")
    ]


def test_periodicity_length_mismatch():
    mel = interior_tone_mel()
    short = F0Contour.from_values(np.full(195, 250.0), 5.0)
    with pytest.raises(ValueError, match="mismatch"):
        spectral_periodicity_check(short, mel)
