"""Spectral bases: 88 labelled per-note complex spectrograms per (instrument, velocity)."""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cqt import CqtConfig, cqt_many, read_spectrogram, write_spectrogram
from .exceptions import FormatError, InvalidInputError
from .wav import load_wav

N_PITCHES = 88
LOWEST_MIDI = 21
BASIS_MAGIC = b"SBAS"
BASIS_VERSION = 1
_CONFIG = struct.Struct("<dIIIdd")
_TAIL = struct.Struct("<BII")


def midi_to_hz(midi):
    return 440.0 * 2.0 ** ((np.asarray(midi, dtype=np.float64) - 69) / 12)


@dataclass
class SpectralBasis:
    """One (instrument, velocity) basis.

    ``notes`` has shape ``(88, frames, bins)``; index ``i`` is MIDI pitch ``21 + i``.
    Stored as complex64, the precision of the on-disk format.
    """

    instrument: str
    velocity: int
    onset_frame: int
    notes: np.ndarray
    config: CqtConfig = field(default_factory=CqtConfig)

    def __post_init__(self):
        self.notes = np.asarray(self.notes, dtype=np.complex64)
        if self.notes.ndim != 3 or self.notes.shape[0] != N_PITCHES:
            raise InvalidInputError(f"basis needs {N_PITCHES} notes, got shape {self.notes.shape}")
        if self.notes.shape[2] != self.config.bins:
            raise InvalidInputError(f"basis has {self.notes.shape[2]} bins, config says {self.config.bins}")
        if not 0 <= self.onset_frame < self.notes.shape[1]:
            raise InvalidInputError(f"onset frame {self.onset_frame} outside [0, {self.notes.shape[1]})")
        if not 1 <= self.velocity <= 127:
            raise InvalidInputError(f"velocity {self.velocity} outside 1..127")
        if not np.all(np.isfinite(self.notes.view(np.float32))):
            raise InvalidInputError("basis contains non-finite values")

    @property
    def frames(self):
        return self.notes.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SpectralBasis):
            return NotImplemented
        return (self.instrument == other.instrument and self.velocity == other.velocity
                and self.onset_frame == other.onset_frame and self.config == other.config
                and self.notes.shape == other.notes.shape
                and self.notes.tobytes() == other.notes.tobytes())


class BasisSet:
    """Non-empty collection of bases sharing one CQT configuration."""

    def __init__(self, bases):
        self.bases = list(bases)
        if not self.bases:
            raise InvalidInputError("basis set is empty")
        configs = {b.config for b in self.bases}
        if len(configs) != 1:
            raise InvalidInputError("all bases must share the same CQT configuration")
        self.config = self.bases[0].config
        self._padded = None

    def __len__(self):
        return len(self.bases)

    def __iter__(self):
        return iter(self.bases)

    def __getitem__(self, i):
        return self.bases[i]

    def padded(self, margin):
        """Stack every basis into ``(n_bases, 88, margin + frames + margin, bins)``, zero margins.

        Re-based onset frames are ``margin + onset_frame``.  Cached per margin.
        """
        if self._padded is not None and self._padded[0] == margin:
            return self._padded[1], self._padded[2]
        frames = max(b.frames for b in self.bases)
        bins = self.config.bins
        stack = np.zeros((len(self.bases), N_PITCHES, frames + 2 * margin, bins), dtype=np.complex128)
        onsets = np.empty(len(self.bases), dtype=np.int64)
        for i, b in enumerate(self.bases):
            stack[i, :, margin:margin + b.frames] = b.notes
            onsets[i] = margin + b.onset_frame
        self._padded = (margin, stack, onsets)
        return stack, onsets


def build_basis(config, recordings, onset_time, instrument, velocity):
    """CQT 88 per-note recordings into a basis truncated to the shortest spectrogram."""
    if len(recordings) != N_PITCHES:
        raise InvalidInputError(f"expected {N_PITCHES} recordings, got {len(recordings)}")
    onset_sample = int(round(onset_time * config.sample_rate))
    clips = [np.asarray(r, dtype=np.float64) for r in recordings]
    for i, clip in enumerate(clips):
        if not 0 <= onset_time < clip.size / config.sample_rate:
            raise InvalidInputError(f"onset {onset_time} s outside clip for MIDI {LOWEST_MIDI + i}")
        if not np.any(clip[onset_sample:]):
            raise InvalidInputError(f"recording for MIDI {LOWEST_MIDI + i} is silent after the onset")
    specs = cqt_many(config, clips)
    frames = min(s.shape[0] for s in specs)
    onset_frame = config.seconds_to_frame(onset_time)
    notes = np.stack([s[:frames] for s in specs]).astype(np.complex64)
    for i in range(N_PITCHES):
        if not np.any(np.abs(notes[i, onset_frame:]) > 0):
            raise InvalidInputError(f"basis note MIDI {LOWEST_MIDI + i} is silent after the onset")
    return SpectralBasis(instrument, int(velocity), onset_frame, notes, config)


def render_toy_note(rng, config, midi, velocity, partials=8, decay_rates=(0.8, 0.3),
                    velocity_scaling=1.0, onset_time=0.5, tone_seconds=3.0):
    """Render one note as exponentially decaying harmonic partials after a silent lead-in."""
    fs = config.sample_rate
    f0 = float(midi_to_hz(midi))
    n_lead = int(round(onset_time * fs))
    t = np.arange(int(round(tone_seconds * fs))) / fs
    rolloff = 1.0 + max(0.0, 1.5 * (1.0 - velocity_scaling * velocity / 127.0))
    base_decay, partial_decay = decay_rates
    tone = np.zeros_like(t)
    for h in range(1, partials + 1):
        f = h * f0
        if f >= 0.45 * fs:
            break
        amp = h ** -rolloff * rng.uniform(0.85, 1.0)
        decay = base_decay * (f0 / 110.0) ** 0.4 * (1.0 + partial_decay * (h - 1))
        phase = rng.uniform(0, 2 * np.pi)
        tone += amp * np.exp(-decay * t) * np.sin(2 * np.pi * f * t + phase)
    attack = min(t.size, int(0.005 * fs))
    tone[:attack] *= np.linspace(0.0, 1.0, attack, endpoint=False)
    gain = 0.5 * (velocity / 127.0) ** 1.5 / max(np.abs(tone).max(), 1e-12)
    return np.concatenate([np.zeros(n_lead), gain * tone])


def synth_toy_basis(config=None, rng_seed=0, velocity=90, instrument="toy", partials=8,
                    decay_rates=(0.8, 0.3), velocity_scaling=1.0, onset_time=0.5,
                    tone_seconds=3.0):
    """Self-contained harmonic basis: 0.5 s silence then 3 s of tone per pitch.

    ``velocity_scaling`` controls how much louder velocities brighten the
    spectrum (flatter partial roll-off); 0 makes timbre velocity-independent.
    """
    if partials < 1:
        raise InvalidInputError("partials must be >= 1")
    config = config or CqtConfig()
    rng = np.random.default_rng(rng_seed)
    clips = [render_toy_note(rng, config, LOWEST_MIDI + i, velocity, partials, decay_rates,
                             velocity_scaling, onset_time, tone_seconds)
             for i in range(N_PITCHES)]
    return build_basis(config, clips, onset_time, instrument, velocity)


def toy_basis_set(config=None, rng_seed=0, velocities=(30, 60, 90, 120), **kwargs):
    """One toy basis per velocity layer; layer ``i`` uses seed ``rng_seed + i``."""
    return BasisSet(synth_toy_basis(config, rng_seed + i, v, **kwargs)
                    for i, v in enumerate(velocities))


def load_basis_dir(directory, config, onset_time, instrument, velocity):
    """Build a basis from ``<directory>/<midi>.wav`` for MIDI 21..108."""
    directory = Path(directory)
    clips = []
    for midi in range(LOWEST_MIDI, LOWEST_MIDI + N_PITCHES):
        path = directory / f"{midi}.wav"
        if not path.exists():
            raise FileNotFoundError(f"missing recording {path}")
        clips.append(load_wav(path, int(config.sample_rate)).samples)
    return build_basis(config, clips, onset_time, instrument, velocity)


def save_basis(basis, path):
    c = basis.config
    tag = basis.instrument.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC + struct.pack("<I", BASIS_VERSION))
        fh.write(_CONFIG.pack(c.sample_rate, c.hop, c.bins, c.bins_per_octave, c.q_factor, c.min_freq))
        fh.write(struct.pack("<H", len(tag)) + tag)
        fh.write(_TAIL.pack(basis.velocity, basis.onset_frame, basis.frames))
        for note in basis.notes:
            write_spectrogram(fh, note, c.sample_rate, c.hop)


def _take(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError("truncated basis file")
    return data


def load_basis(path):
    with open(path, "rb") as fh:
        if _take(fh, 4) != BASIS_MAGIC:
            raise FormatError(f"{path}: not a basis file")
        (version,) = struct.unpack("<I", _take(fh, 4))
        if version != BASIS_VERSION:
            raise FormatError(f"{path}: unsupported basis version {version}")
        try:
            config = CqtConfig(*_CONFIG.unpack(_take(fh, _CONFIG.size)))
        except InvalidInputError as exc:
            raise FormatError(f"{path}: invalid CQT parameters ({exc})") from exc
        (n_tag,) = struct.unpack("<H", _take(fh, 2))
        instrument = _take(fh, n_tag).decode("utf-8")
        velocity, onset_frame, frames = _TAIL.unpack(_take(fh, _TAIL.size))
        notes = np.empty((N_PITCHES, frames, config.bins), dtype=np.complex64)
        for i in range(N_PITCHES):
            spec, rate, hop = read_spectrogram(fh)
            if spec.shape != (frames, config.bins) or rate != config.sample_rate or hop != config.hop:
                raise FormatError(f"{path}: note {i} does not match the basis header")
            notes[i] = spec
        if fh.read(1):
            raise FormatError(f"{path}: trailing data after {N_PITCHES} notes")
    try:
        return SpectralBasis(instrument, velocity, onset_frame, notes, config)
    except InvalidInputError as exc:
        raise FormatError(f"{path}: {exc}") from exc
