"""WAV ingestion and writing (PCM16 or float32)."""

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .exceptions import FormatError, UnsupportedRateError


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int


def load_wav(path, expected_rate=44100):
    """Read a mono or stereo WAV file as float64 samples in [-1, 1].

    Stereo is downmixed by averaging.  Files at any rate other than
    ``expected_rate`` are refused; nothing is resampled.
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if expected_rate is not None and rate != expected_rate:
        raise UnsupportedRateError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if samples.size == 0:
        raise FormatError(f"{path}: no samples")
    if not np.all(np.isfinite(samples)):
        raise FormatError(f"{path}: non-finite samples")
    return AudioClip(samples, int(rate))


def write_wav(path, samples, sample_rate=44100, pcm16=False):
    samples = np.asarray(samples, dtype=np.float64)
    if pcm16:
        data = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = samples.astype(np.float32)
    wavfile.write(path, int(sample_rate), data)
