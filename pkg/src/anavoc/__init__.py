"""anavoc: a neural analyzer-synthesizer vocoder.

Analysis maps mel-spectrograms to an interpretable latent code whose last
row tracks normalized F0; synthesis drives a harmonic-plus-noise neural
source-filter model from that code and an explicit F0 contour.
"""

__version__ = "0.1.0"

from .audio_io import AudioClip, load_wav, resample, save_wav
from .f0 import F0Contour, estimate_f0, normalize_f0
from .spectral import MelSpectrogram, StftConfig, mel_spectrogram

__all__ = [
    "AudioClip",
    "F0Contour",
    "MelSpectrogram",
    "StftConfig",
    "estimate_f0",
    "load_wav",
    "mel_spectrogram",
    "normalize_f0",
    "resample",
    "save_wav",
    "__version__",
]
