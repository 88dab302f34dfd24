import cmath
import math

import numpy as np
import pytest
import torch

from anavoc.audio_io import AudioClip
from anavoc.spectral import (
    AMP_FLOOR,
    DEFAULT_LOSS_CONFIGS,
    LOG_FLOOR,
    MelSpectrogram,
    StftConfig,
    cepstra_from_log_mel,
    mel_cepstrum,
    mel_filterbank,
    mel_spectrogram,
    multi_res_stft_loss,
    num_frames,
    stft,
    stft_magnitude_t,
)

from conftest import tone


def test_config_ordering_enforced():
    with pytest.raises(ValueError, match="hop_length <= window_length <= fft_size"):
        StftConfig(fft_size=256, hop_length=80, window_length=400)


def test_stft_column_count_one_second():
    clip = tone(220.0, 1.0)
    assert stft(clip).shape == (513, 200)


def test_stft_zero_clip_zero_magnitudes():
    clip = AudioClip(np.zeros(4000), 16000)
    assert np.max(np.abs(stft(clip))) == 0.0


def test_stft_tone_bin():
    # bin = f * fft / sr oracle: 1000 Hz -> bin 64 at fft 1024, sr 16000
    clip = tone(1000.0, 1.0)
    mag = np.abs(stft(clip))
    interior = mag[:, 5:-5]
    assert np.all(np.argmax(interior, axis=0) == 64)


def test_stft_frame_count_formula_every_length():
    cfg = StftConfig(fft_size=64, hop_length=8, window_length=32)
    for n in range(1, 1001):
        spec = stft(np.ones(n), cfg)
        assert spec.shape[1] == num_frames(n, 8) == math.ceil(n / 8)


def test_stft_empty_errors():
    with pytest.raises(ValueError, match="empty"):
        stft(np.zeros(0), StftConfig())


def test_torch_and_numpy_stft_agree():
    clip = tone(313.0, 0.25, amp=0.7)
    cfg = StftConfig()
    ours = np.abs(stft(clip, cfg))
    theirs = stft_magnitude_t(torch.as_tensor(clip.samples), cfg).numpy()
    assert np.allclose(ours, theirs, atol=1e-8)


def test_mel_silence_hits_floor():
    clip = AudioClip(np.zeros(16000), 16000)
    mel = mel_spectrogram(clip)
    assert np.all(mel.values == LOG_FLOOR)


def test_mel_shape_order_80():
    mel = mel_spectrogram(tone(220.0, 1.0), mel_order=80)
    assert mel.values.shape == (80, 200)
    assert mel.frame_period_ms == pytest.approx(5.0)


def test_mel_gain_linearity():
    # linearity-of-filterbank oracle: doubling amplitude doubles linear mel
    quiet = mel_spectrogram(tone(220.0, 0.4, amp=0.2))
    loud = mel_spectrogram(tone(220.0, 0.4, amp=0.4))
    above = (quiet.values > LOG_FLOOR + 1e-9) & (loud.values > LOG_FLOOR + 1e-9)
    # only where the doubled value also stayed above floor is the shift exact
    shift = loud.values[above] - quiet.values[above]
    exact = shift[quiet.values[above] > LOG_FLOOR + math.log(2)]
    assert np.allclose(exact, math.log(2), atol=1e-9)


def test_mel_monotone_under_gain():
    rng = np.random.default_rng(0)
    clip = AudioClip(0.1 * rng.standard_normal(6400), 16000)
    louder = AudioClip(2.5 * clip.samples, 16000)  # pure gain, no clipping
    a = mel_spectrogram(clip).values
    b = mel_spectrogram(louder).values
    assert np.all(b >= a - 1e-12)


def test_mel_order_validation():
    with pytest.raises(ValueError, match="mel_order"):
        mel_filterbank(16000, 1024, 0)


def test_cepstrum_deterministic():
    clip = tone(150.0, 0.3)
    assert np.array_equal(mel_cepstrum(clip, 24), mel_cepstrum(clip, 24))


def test_cepstrum_of_flat_spectrum():
    # DCT of a constant vector: c0 = v * sqrt(M), higher terms 0
    clip = AudioClip(np.zeros(8000), 16000)  # silence -> flat log-mel at the floor
    ceps = mel_cepstrum(clip, 10, mel_order=80)
    assert np.allclose(ceps[0], LOG_FLOOR * math.sqrt(80), atol=1e-9)
    assert np.allclose(ceps[1:], 0.0, atol=1e-9)


def test_cepstrum_matches_brute_force_dct():
    frame = np.array([0.3, -1.2, 2.5, 0.7])
    got = cepstra_from_log_mel(frame, 3)[:, 0]
    m = len(frame)
    expected = np.zeros(4)
    for k in range(4):
        acc = sum(frame[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * m)) for i in range(m))
        scale = math.sqrt(1 / m) if k == 0 else math.sqrt(2 / m)
        expected[k] = scale * acc
    assert np.allclose(got, expected, atol=1e-9)


def test_cepstrum_order_exceeding_bins_errors():
    with pytest.raises(ValueError, match="exceeds"):
        mel_cepstrum(tone(220.0, 0.1), order=80, mel_order=80)


def test_stft_loss_identity_is_zero():
    clip = tone(220.0, 0.5)
    assert multi_res_stft_loss(clip, clip) == 0.0


def test_stft_loss_symmetry(rng):
    a = AudioClip(0.3 * rng.standard_normal(5000), 16000)
    b = AudioClip(0.3 * rng.standard_normal(5000), 16000)
    assert multi_res_stft_loss(a, b) == pytest.approx(multi_res_stft_loss(b, a), rel=1e-12)


def test_stft_loss_nonnegative(rng):
    a = AudioClip(0.1 * rng.standard_normal(3000), 16000)
    b = AudioClip(0.1 * rng.standard_normal(2500), 16000)  # padded internally
    assert multi_res_stft_loss(a, b) >= 0.0


def test_stft_loss_empty_errors():
    with pytest.raises(ValueError, match="empty"):
        multi_res_stft_loss(np.zeros(0), np.zeros(0))


def _brute_force_single_frame_loss(x, y, floor=AMP_FLOOR):
    """Hand evaluation: boxcar window 8, hop 8, fft 8, one frame, center padding."""

    def log_mag_spectrum(sig):
        padded = [0.0] * 4 + list(sig) + [0.0] * 4
        frame = padded[:8]
        bins = []
        for k in range(5):  # rfft of size 8 -> 5 bins
            acc = sum(frame[n] * cmath.exp(-2j * cmath.pi * k * n / 8) for n in range(8))
            bins.append(math.log(max(abs(acc), floor)))
        return bins

    lx, ly = log_mag_spectrum(x), log_mag_spectrum(y)
    return sum((a - b) ** 2 for a, b in zip(lx, ly)) / len(lx)


def test_stft_loss_matches_brute_force_dft():
    cfg = StftConfig(fft_size=8, hop_length=8, window_length=8, window="boxcar")
    x = [0.5, -0.25, 0.125, 0.9, -0.7, 0.3, 0.0, -0.1]
    y = [0.1, 0.4, -0.5, 0.25, 0.65, -0.3, 0.2, 0.05]
    got = multi_res_stft_loss(np.array(x), np.array(y), cfgs=[cfg])
    assert got == pytest.approx(_brute_force_single_frame_loss(x, y), abs=1e-9)


def test_stft_loss_differentiable_wrt_estimate():
    y = torch.sin(torch.arange(4000) * 0.1)
    y_hat = torch.zeros(4000, requires_grad=True)
    loss = multi_res_stft_loss(y, y_hat, DEFAULT_LOSS_CONFIGS)
    loss.backward()
    assert y_hat.grad is not None
    assert torch.isfinite(y_hat.grad).all()


def test_mel_serialization_round_trip(tmp_path):
    from anavoc.spectral import load_mel, save_mel

    mel = mel_spectrogram(tone(220.0, 0.3))
    save_mel(mel, tmp_path / "x.mel")
    back = load_mel(tmp_path / "x.mel")
    assert back.mel_order == mel.mel_order
    assert back.sample_rate == mel.sample_rate
    assert back.frame_period_ms == mel.frame_period_ms
    assert np.allclose(back.values, mel.values, atol=1e-6)  # float32 container


def test_mel_values_validation():
    with pytest.raises(ValueError, match="finite"):
        MelSpectrogram(np.array([[np.inf]]), 1, 5.0, 16000)
