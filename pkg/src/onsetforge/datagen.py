"""Procedural generation of labelled reading windows from spectral bases.

Every example superimposes randomly placed, scaled and phase-rotated chords
of basis notes in the complex domain, takes the magnitude over the 8-frame
reading window, adds a little white noise and normalises to a maximum of 1.
Window frames are addressed relative to the prediction frame (frame 0, the
5th of the window), so the window spans relative frames -4 .. +3.
"""

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_random_state
from .basis import LOWEST_MIDI, N_PITCHES
from .events import NoteEvent
from .exceptions import FormatError, InvalidInputError

LABEL_T, LABEL_U, LABEL_F = 1.0, 0.5, 0.0
DATASET_MAGIC = b"ONST"
DATASET_VERSION = 1


@dataclass(frozen=True)
class DatagenConfig:
    onset_frame_min: int = -130
    onset_frame_max: int = 10
    chords_lambda: float = 6.0
    notes_p: float = 0.4
    note_scale_min: float = 0.1
    note_scale_max: float = 1.0
    chord_scale_min: float = 0.1
    chord_scale_max: float = 1.0
    jitter_sigma: float = 0.5
    decay_prob: float = 0.05
    decay_factor_per_frame: float = math.exp(-1.0)
    noise_magnitude: float = 0.003
    silence_threshold: float = 1e-3
    window_frames: int = 8
    center_frame_offset: int = 4
    unknown_halo: tuple = (-2, -1, 1, 2)
    # overrides for controlled experiments; None keeps the random draw
    fixed_chord_count: int = None
    random_phase: bool = True

    def __post_init__(self):
        object.__setattr__(self, "unknown_halo", tuple(int(h) for h in self.unknown_halo))
        if not (0 <= self.decay_prob <= 1 and 0 < self.notes_p <= 1):
            raise InvalidInputError("probabilities must lie in [0, 1] (notes_p in (0, 1])")
        if self.note_scale_min > self.note_scale_max or self.chord_scale_min > self.chord_scale_max:
            raise InvalidInputError("scale minimum exceeds maximum")
        if self.onset_frame_min > self.onset_frame_max:
            raise InvalidInputError("onset_frame_min exceeds onset_frame_max")
        if self.window_frames != 8 or self.center_frame_offset != 4:
            raise InvalidInputError("the network reads 8-frame windows centred on the 5th frame")
        if self.chords_lambda < 0 or self.jitter_sigma < 0 or self.noise_magnitude < 0:
            raise InvalidInputError("chords_lambda, jitter_sigma and noise_magnitude must be >= 0")
        if 0 in self.unknown_halo:
            raise InvalidInputError("frame 0 cannot be part of the unknown halo")

    @property
    def relative_frames(self):
        return np.arange(self.window_frames) - self.center_frame_offset

    def to_dict(self):
        d = asdict(self)
        d["unknown_halo"] = list(self.unknown_halo)
        return d


@dataclass
class TrainingExample:
    """An 8x79 normalised magnitude window with its 88 ternary labels.

    ``onsets`` (generated examples only) records every rendered note as
    ``(pitch index, relative onset frame)`` after jitter.
    """

    window: np.ndarray
    labels: np.ndarray
    onsets: np.ndarray = None


@dataclass
class GenerationStats:
    """Running record of the random draws, including attempts later discarded."""

    chord_counts: list = field(default_factory=list)
    chord_sizes: list = field(default_factory=list)
    restarts: int = 0
    examples: int = 0

    def summary(self):
        counts = np.asarray(self.chord_counts, dtype=np.float64)
        sizes = np.asarray(self.chord_sizes, dtype=np.float64)
        return {
            "examples": self.examples,
            "attempts": int(counts.size),
            "restarts": self.restarts,
            "mean_chords": float(counts.mean()) if counts.size else 0.0,
            "mean_chord_size": float(sizes.mean()) if sizes.size else 0.0,
        }


def ternary_labels(pitches, rel_onsets, halo=(-2, -1, 1, 2)):
    """T for an onset at frame 0, else U for an onset inside ``halo``, else F."""
    labels = np.zeros(N_PITCHES)
    pitches = np.asarray(pitches, dtype=np.int64)
    rel_onsets = np.asarray(rel_onsets, dtype=np.int64)
    in_halo = (rel_onsets[:, None] == np.asarray(halo, dtype=np.int64)[None, :]).any(axis=1)
    labels[pitches[in_halo]] = LABEL_U
    labels[pitches[rel_onsets == 0]] = LABEL_T
    return labels


def _sample_notes(rng, n_bases, config, stats):
    """Draw one attempt's random structure.  Draw order is part of the RNG contract."""
    basis = int(rng.integers(n_bases))
    if config.fixed_chord_count is None:
        n_chords = int(rng.poisson(config.chords_lambda))
    else:
        n_chords = int(config.fixed_chord_count)
    chord_onsets = rng.integers(config.onset_frame_min, config.onset_frame_max + 1, size=n_chords)
    sizes = np.minimum(rng.geometric(config.notes_p, size=n_chords), N_PITCHES)
    chord_scales = rng.uniform(config.chord_scale_min, config.chord_scale_max, size=n_chords)
    # row-wise argsort of uniforms: each chord gets a uniform random subset, no repeats
    order = np.argsort(rng.random((n_chords, N_PITCHES)), axis=1)
    pitches = order[np.arange(N_PITCHES)[None, :] < sizes[:, None]]
    n = pitches.size
    note_scales = rng.uniform(config.note_scale_min, config.note_scale_max, size=n)
    phases = rng.uniform(0.0, 2 * np.pi, size=n)
    if config.jitter_sigma > 0:
        jitter = np.round(rng.normal(0.0, config.jitter_sigma, size=n)).astype(np.int64)
    else:
        jitter = np.zeros(n, dtype=np.int64)
    decays = rng.random(n) < config.decay_prob
    decay_starts = rng.integers(0, config.window_frames, size=n) - config.center_frame_offset
    if stats is not None:
        stats.chord_counts.append(n_chords)
        stats.chord_sizes.extend(int(s) for s in sizes)
    coef = note_scales * np.repeat(chord_scales, sizes)
    if config.random_phase:
        coef = coef * np.exp(1j * phases)
    onsets = np.repeat(chord_onsets, sizes) + jitter
    return basis, pitches, onsets, coef, decays, decay_starts


def generate_example(rng, basis_set, config=None, stats=None):
    """Generate one training example, restarting on silent windows."""
    config = config or DatagenConfig()
    rng = check_random_state(rng)
    stack, basis_onsets = basis_set.padded(1)
    last = stack.shape[2] - 1
    rel = config.relative_frames
    while True:
        b, pitches, onsets, coef, decays, decay_starts = _sample_notes(rng, len(basis_set), config, stats)
        idx = basis_onsets[b] + rel[None, :] - onsets[:, None]
        idx = np.where((idx >= 1) & (idx < last), idx, 0)  # frame 0 of the padded stack is zero
        notes = stack[b, pitches[:, None], idx]  # (n, frames, bins)
        gains = np.where(decays[:, None] & (rel[None, :] >= decay_starts[:, None]),
                         config.decay_factor_per_frame ** np.maximum(rel[None, :] - decay_starts[:, None], 0),
                         1.0) * coef[:, None]
        mag = np.abs(np.einsum("nf,nfb->fb", gains, notes))
        if mag.max(initial=0.0) > config.silence_threshold:
            break
        if stats is not None:
            stats.restarts += 1
    if config.noise_magnitude > 0:
        mag += rng.uniform(0.0, config.noise_magnitude, size=mag.shape)
    mag /= mag.max()
    if stats is not None:
        stats.examples += 1
    labels = ternary_labels(pitches, onsets, config.unknown_halo)
    return TrainingExample(mag, labels, np.stack([pitches, onsets], axis=1))


def generate_batch(rng, basis_set, config=None, n=32, stats=None):
    """``n`` sequential :func:`generate_example` draws from one RNG stream."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = check_random_state(rng)
    return [generate_example(rng, basis_set, config, stats) for _ in range(n)]


def generate_parallel(seed, basis_set, config=None, n=32, threads=1):
    """Generate ``n`` examples with ``threads`` workers.

    One worker draws from ``default_rng(seed)``, identical to
    :func:`generate_batch`.  With more workers the seed is split through
    ``SeedSequence.spawn`` so each worker owns a disjoint stream; the result
    is deterministic for a given ``(seed, threads)`` pair.
    """
    if threads <= 1:
        return generate_batch(np.random.default_rng(seed), basis_set, config, n)
    children = np.random.SeedSequence(seed).spawn(threads)
    counts = [n // threads + (i < n % threads) for i in range(threads)]
    basis_set.padded(1)  # build the shared cache before the workers read it
    with ThreadPoolExecutor(threads) as pool:
        parts = pool.map(lambda a: generate_batch(np.random.default_rng(a[0]), basis_set, config, a[1])
                         if a[1] else [], zip(children, counts))
        return [ex for part in parts for ex in part]


def stack_examples(examples):
    """Network-ready ``(X, Y)``: flattened windows ``(n, 632)`` and labels ``(n, 88)``."""
    X = np.stack([ex.window.reshape(-1) for ex in examples])
    Y = np.stack([ex.labels for ex in examples])
    return X, Y


def extract_window(spectrogram, annotations, center_frame, cqt_config, threshold=1e-3,
                   halo=(-2, -1, 1, 2)):
    """Cut a labelled window out of a full-piece magnitude spectrogram.

    Returns ``None`` when the window is silent (max <= ``threshold``).
    """
    spec = np.asarray(spectrogram, dtype=np.float64)
    frames = spec.shape[0]
    if frames < 8:
        raise InvalidInputError("spectrogram needs at least 8 frames")
    if not 4 <= center_frame <= frames - 4:
        raise IndexError(f"centre frame {center_frame} outside [4, {frames - 4}]")
    window = spec[center_frame - 4:center_frame + 4]
    peak = window.max()
    if not peak > threshold:
        return None
    pitches = [ev.pitch - LOWEST_MIDI for ev in annotations]
    rel = [cqt_config.seconds_to_frame(ev.onset) - center_frame for ev in annotations]
    return TrainingExample(window / peak, ternary_labels(pitches, rel, halo))


def sample_windows(rng, spectrogram, annotations, cqt_config, n, threshold=1e-3, max_tries=None):
    """Draw up to ``n`` non-silent windows at uniformly random centres."""
    rng = check_random_state(rng)
    frames = spectrogram.shape[0]
    if frames < 8:
        return []
    out = []
    tries = 0
    max_tries = max_tries or 20 * n
    while len(out) < n and tries < max_tries:
        tries += 1
        ex = extract_window(spectrogram, annotations, int(rng.integers(4, frames - 3)), cqt_config,
                            threshold)
        if ex is not None:
            out.append(ex)
    return out


def render_piece(rng, basis_set, n_frames=400, gap_range=(4, 30), notes_p=0.4, max_chord=6,
                 scale_range=(0.3, 1.0), duration_range=(5, 60), lead_in=8):
    """Superimpose a random chord sequence into a full-piece complex spectrogram.

    Each note picks its own basis (velocity layer), scale and phase; after a
    random duration it decays by a factor of e per frame.  Returns the
    spectrogram and the ground-truth events (onsets on exact frame times).
    """
    rng = check_random_state(rng)
    config = basis_set.config
    stack, basis_onsets = basis_set.padded(1)
    n_basis_frames = stack.shape[2]
    piece = np.zeros((n_frames, config.bins), dtype=np.complex128)
    events = []
    t = lead_in
    frames = np.arange(n_frames)
    while t < n_frames - 8:
        size = min(int(rng.geometric(notes_p)), max_chord)
        for p in rng.choice(N_PITCHES, size=size, replace=False):
            b = int(rng.integers(len(basis_set)))
            coef = rng.uniform(*scale_range) * np.exp(1j * rng.uniform(0, 2 * np.pi))
            duration = int(rng.integers(duration_range[0], duration_range[1] + 1))
            idx = basis_onsets[b] + frames - t
            idx = np.where((idx >= 1) & (idx < n_basis_frames - 1), idx, 0)
            gain = np.exp(-np.maximum(frames - t - duration, 0)) * coef
            piece += gain[:, None] * stack[b, p, idx]
            events.append(NoteEvent(config.frame_to_seconds(t), int(p) + LOWEST_MIDI))
        t += int(rng.integers(gap_range[0], gap_range[1] + 1))
    return piece, sorted(events)


def write_dataset(path, examples):
    """Binary dataset: header then per example 632 f32 window values and 88 u8 labels (F=0, U=1, T=2)."""
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + struct.pack("<II", DATASET_VERSION, len(examples)))
        for ex in examples:
            fh.write(np.asarray(ex.window, dtype="<f4").reshape(-1).tobytes())
            fh.write(np.round(np.asarray(ex.labels) * 2).astype(np.uint8).tobytes())


def read_dataset(path):
    """Return ``(windows (n, 8, 79) float32, labels (n, 88) float64 in {0, 0.5, 1})``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != DATASET_MAGIC:
        raise FormatError(f"{path}: not a dataset file")
    version, count = struct.unpack("<II", data[4:12])
    if version != DATASET_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    record = np.dtype([("window", "<f4", (8, 79)), ("labels", "u1", (N_PITCHES,))])
    if len(data) != 12 + count * record.itemsize:
        raise FormatError(f"{path}: size does not match {count} records")
    recs = np.frombuffer(data, dtype=record, offset=12, count=count)
    if np.any(recs["labels"] > 2):
        raise FormatError(f"{path}: label codes must be 0, 1 or 2")
    return recs["window"].copy(), recs["labels"].astype(np.float64) / 2
