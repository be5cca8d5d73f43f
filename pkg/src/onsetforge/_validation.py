"""Input validation helpers used by the estimators and functional API."""

import numpy as np

from .exceptions import InvalidInputError


def check_audio(audio):
    """Return ``audio`` as a 1-D float64 array, rejecting empty or non-finite input."""
    x = np.asarray(audio, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"audio must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise InvalidInputError("audio is empty")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("audio contains non-finite samples")
    return x


def check_magnitude(spec, n_bins=None, min_frames=1):
    """Validate a (frames, bins) real magnitude spectrogram."""
    s = np.asarray(spec)
    if np.iscomplexobj(s):
        s = np.abs(s)
    s = s.astype(np.float64, copy=False)
    if s.ndim != 2:
        raise InvalidInputError(f"spectrogram must be 2-D, got shape {s.shape}")
    if n_bins is not None and s.shape[1] != n_bins:
        raise InvalidInputError(f"spectrogram has {s.shape[1]} bins, model expects {n_bins}")
    if s.shape[0] < min_frames:
        raise InvalidInputError(f"spectrogram needs at least {min_frames} frames, has {s.shape[0]}")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("spectrogram contains non-finite values")
    return s


def check_finite(x, name="input"):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return a


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
