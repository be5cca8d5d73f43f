"""Constant-Q transform.

Each bin is a Hann-windowed complex exponential of length
``ceil(q_factor * sample_rate / f_k)``, L1-normalised and centred on sample
``t * hop`` for frame ``t``.  The transform is evaluated by direct summation:
the zero-padded signal is cut into hop-sized blocks, every kernel is cut on
the same grid, and one matrix product followed by a diagonal gather yields
all frames and bins at once.
"""

import io
import math
import struct
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_audio
from .exceptions import FormatError, InvalidInputError

G1_HZ = 48.9994
SPEC_MAGIC = b"CQTS"
SPEC_VERSION = 1
_SPEC_HEADER = struct.Struct("<4sIIIdI")


@dataclass(frozen=True)
class CqtConfig:
    sample_rate: float = 44100.0
    hop: int = 1024
    bins: int = 79
    bins_per_octave: int = 12
    q_factor: float = 32.0
    min_freq: float = G1_HZ

    def __post_init__(self):
        if self.bins < 1 or self.hop < 1 or self.bins_per_octave < 1:
            raise InvalidInputError("bins, hop and bins_per_octave must be >= 1")
        if not (self.q_factor > 0 and self.min_freq > 0 and self.sample_rate > 0):
            raise InvalidInputError("q_factor, min_freq and sample_rate must be positive")
        top = self.min_freq * 2.0 ** ((self.bins - 1) / self.bins_per_octave)
        if top >= self.sample_rate / 2:
            raise InvalidInputError(f"highest bin {top:.1f} Hz is not below Nyquist")

    @property
    def frame_rate(self):
        return self.sample_rate / self.hop

    def frame_to_seconds(self, frame):
        return frame * self.hop / self.sample_rate

    def seconds_to_frame(self, seconds):
        return int(round(seconds * self.sample_rate / self.hop))

    def to_dict(self):
        return asdict(self)


def bin_frequency(config, k):
    """Centre frequency in Hz of bin ``k``."""
    if not 0 <= k < config.bins:
        raise IndexError(f"bin {k} out of range [0, {config.bins})")
    return config.min_freq * 2.0 ** (k / config.bins_per_octave)


def kernel_length(config, k):
    """Analysis window length in samples for bin ``k``."""
    f = bin_frequency(config, k)
    # guard against 32 * 44100 / f landing a hair above an integer
    return int(math.ceil(config.q_factor * config.sample_rate / f - 1e-9))


def bin_kernel(config, k):
    """Complex analysis kernel (already conjugated) for bin ``k``."""
    n = kernel_length(config, k)
    window = np.hanning(n) if n > 2 else np.ones(n)
    window = window / window.sum()
    f = bin_frequency(config, k)
    phase = 2.0 * np.pi * f * (np.arange(n) - n // 2) / config.sample_rate
    return window * np.exp(-1j * phase)


@lru_cache(maxsize=8)
def _block_plan(config):
    hop = config.hop
    leads = [kernel_length(config, k) // 2 for k in range(config.bins)]
    pad_left = max(-(-lead // hop) * hop for lead in leads)
    rows = []
    plan = []  # (first block offset, row of real part, row of imag part, n blocks)
    cursor = 0
    for k in range(config.bins):
        kern = bin_kernel(config, k)
        start = pad_left - leads[k]
        b0, d = divmod(start, hop)
        nblk = -(-(d + kern.size) // hop)
        buf = np.zeros(nblk * hop, dtype=np.complex128)
        buf[d:d + kern.size] = kern
        blocks = buf.reshape(nblk, hop)
        rows.append(blocks.real)
        rows.append(blocks.imag)
        plan.append((b0, cursor, cursor + nblk, nblk))
        cursor += 2 * nblk
    kmat = np.ascontiguousarray(np.vstack(rows).T)
    kmat.setflags(write=False)
    reach = max(b0 + nblk for b0, _, _, nblk in plan)
    return pad_left, kmat, tuple(plan), reach


def _cqt_equal_length(config, clips):
    """Transform a (n_clips, n_samples) float64 array; returns (n_clips, frames, bins)."""
    n_clips, n_samples = clips.shape
    hop = config.hop
    frames = n_samples // hop + 1
    pad_left, kmat, plan, reach = _block_plan(config)
    n_blocks = frames - 1 + reach
    padded = np.zeros((n_clips, n_blocks * hop))
    padded[:, pad_left:pad_left + n_samples] = clips
    prod = padded.reshape(n_clips * n_blocks, hop) @ kmat
    prod = prod.reshape(n_clips, n_blocks, -1)
    out = np.empty((n_clips, frames, config.bins), dtype=np.complex128)
    t = np.arange(frames)[:, None]
    for k, (b0, re_row, im_row, nblk) in enumerate(plan):
        j = np.arange(nblk)[None, :]
        rows = t + b0 + j
        out[:, :, k].real = prod[:, rows, re_row + j].sum(axis=-1)
        out[:, :, k].imag = prod[:, rows, im_row + j].sum(axis=-1)
    return out


def cqt(config, audio):
    """Complex CQT of a mono signal, shape ``(len(audio) // hop + 1, bins)``."""
    x = check_audio(audio)
    return _cqt_equal_length(config, x[None, :])[0]


def cqt_many(config, clips):
    """Transform several clips; equal-length clips share one matrix product."""
    checked = [check_audio(c) for c in clips]
    lengths = {c.size for c in checked}
    if len(lengths) == 1:
        return list(_cqt_equal_length(config, np.stack(checked)))
    return [cqt(config, c) for c in checked]


def interior_frames(config, n_samples):
    """Frames whose longest kernel lies entirely inside a signal of ``n_samples``."""
    half = max(kernel_length(config, k) for k in range(config.bins)) // 2 + 1
    frames = n_samples // config.hop + 1
    return [t for t in range(frames)
            if t * config.hop - half >= 0 and t * config.hop + half < n_samples]


class ConstantQTransform(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapping :func:`cqt`.

    ``transform`` accepts a 1-D signal or a list of signals and returns the
    complex spectrogram(s); ``magnitude=True`` returns ``abs`` instead.
    """

    def __init__(self, sample_rate=44100.0, hop=1024, bins=79, bins_per_octave=12,
                 q_factor=32.0, min_freq=G1_HZ, magnitude=False):
        self.sample_rate = sample_rate
        self.hop = hop
        self.bins = bins
        self.bins_per_octave = bins_per_octave
        self.q_factor = q_factor
        self.min_freq = min_freq
        self.magnitude = magnitude

    @property
    def config(self):
        return CqtConfig(float(self.sample_rate), int(self.hop), int(self.bins),
                         int(self.bins_per_octave), float(self.q_factor), float(self.min_freq))

    def fit(self, X=None, y=None):
        self.config_ = self.config
        return self

    def transform(self, X):
        config = self.config
        single = np.ndim(X) == 1 and not isinstance(X, (list, tuple))
        specs = [cqt(config, X)] if single else cqt_many(config, X)
        if self.magnitude:
            specs = [np.abs(s) for s in specs]
        return specs[0] if single else specs


def write_spectrogram(fh, spec, sample_rate, hop):
    """Write one complex spectrogram to a binary stream."""
    spec = np.asarray(spec)
    frames, bins = spec.shape
    fh.write(_SPEC_HEADER.pack(SPEC_MAGIC, SPEC_VERSION, frames, bins, float(sample_rate), int(hop)))
    pairs = np.empty((frames, bins, 2), dtype="<f4")
    pairs[..., 0] = spec.real
    pairs[..., 1] = spec.imag
    fh.write(pairs.tobytes())


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def read_spectrogram(fh):
    """Read one spectrogram; returns ``(complex64 array, sample_rate, hop)``."""
    magic, version, frames, bins, sample_rate, hop = _SPEC_HEADER.unpack(
        _read_exact(fh, _SPEC_HEADER.size))
    if magic != SPEC_MAGIC:
        raise FormatError(f"bad spectrogram magic {magic!r}")
    if version != SPEC_VERSION:
        raise FormatError(f"unsupported spectrogram version {version}")
    raw = np.frombuffer(_read_exact(fh, frames * bins * 8), dtype="<f4").reshape(frames, bins, 2)
    spec = (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64)
    return spec, sample_rate, hop


def save_spectrogram(path, spec, config):
    with open(path, "wb") as fh:
        write_spectrogram(fh, spec, config.sample_rate, config.hop)


def load_spectrogram(path):
    with open(path, "rb") as fh:
        return read_spectrogram(fh)


def spectrogram_bytes(spec, config):
    buf = io.BytesIO()
    write_spectrogram(buf, spec, config.sample_rate, config.hop)
    return buf.getvalue()
