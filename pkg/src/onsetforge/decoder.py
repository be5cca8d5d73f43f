"""Slide the reading window over a piece, threshold the raw piano roll, collapse runs to events."""

import numpy as np

from ._validation import check_magnitude
from .basis import LOWEST_MIDI, N_PITCHES
from .cqt import CqtConfig, cqt
from .events import NoteEvent
from .network import forward, load_model
from .wav import load_wav

__all__ = ["NoteEvent", "roll_out", "decode_events", "transcribe", "transcribe_file",
           "normalize_spectrogram"]


def normalize_spectrogram(spec):
    """Magnitude of ``spec`` scaled to a global maximum of 1 (silence stays zero)."""
    mag = np.abs(np.asarray(spec))
    peak = mag.max(initial=0.0)
    return mag / peak if peak > 0 else mag.astype(np.float64)


def window_stack(mag, silence_threshold=1e-3):
    """Per-centre normalised windows ``(n_centres, 632)`` plus a mask of non-silent centres.

    Centre ``c`` (4 <= c <= frames - 4) reads frames ``c-4 .. c+3``.
    """
    frames, bins = mag.shape
    centres = np.arange(4, frames - 3)
    views = np.lib.stride_tricks.sliding_window_view(mag, 8, axis=0)  # (frames-7, bins, 8)
    windows = views[centres - 4].transpose(0, 2, 1).reshape(len(centres), 8 * bins)
    peaks = windows.max(axis=1)
    keep = peaks > silence_threshold
    windows = windows[keep] / peaks[keep, None]
    return centres, keep, windows


def roll_out(params, spectrogram, silence_threshold=1e-3, chunk=4096):
    """Raw piano roll ``(frames, 88)``; rows without a full, non-silent window are zero."""
    mag = check_magnitude(spectrogram, n_bins=params.W1.shape[1] // 8, min_frames=8)
    roll = np.zeros((mag.shape[0], N_PITCHES))
    centres, keep, windows = window_stack(mag, silence_threshold)
    active = centres[keep]
    for start in range(0, len(active), chunk):
        roll[active[start:start + chunk]] = forward(params, windows[start:start + chunk])
    return roll


def decode_events(roll, threshold=0.8, hop=1024, sample_rate=44100.0):
    """Collapse each maximal run of frames with ``roll > threshold`` into one event.

    The event sits at the mean frame of the run; its confidence is the run's
    peak raw value.  Events are sorted by (onset, pitch).
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    roll = np.asarray(roll, dtype=np.float64)
    active = roll > threshold
    events = []
    padded = np.zeros((active.shape[0] + 2, active.shape[1]), dtype=np.int8)
    padded[1:-1] = active
    edges = np.diff(padded, axis=0)
    for pitch in range(active.shape[1]):
        starts = np.flatnonzero(edges[:, pitch] == 1)
        ends = np.flatnonzero(edges[:, pitch] == -1)  # exclusive
        for s, e in zip(starts, ends):
            mean_frame = (s + e - 1) / 2.0
            events.append(NoteEvent(float(mean_frame * hop / sample_rate), pitch + LOWEST_MIDI,
                                    float(roll[s:e, pitch].max())))
    events.sort(key=lambda ev: (ev.onset, ev.pitch))
    return events


def transcribe(params, audio, cqt_config=None, threshold=0.8):
    """Audio samples to note events: CQT, global normalisation, roll-out, decoding."""
    cqt_config = cqt_config or CqtConfig()
    mag = normalize_spectrogram(cqt(cqt_config, audio))
    if mag.shape[0] < 8:
        return []
    roll = roll_out(params, mag)
    return decode_events(roll, threshold, cqt_config.hop, cqt_config.sample_rate)


def transcribe_file(model_path, audio_path, config=None, threshold=0.8):
    """Transcribe a WAV file with a saved model; ``config`` defaults to the model's CQT settings."""
    params, model_config = load_model(model_path)
    config = config or model_config
    clip = load_wav(audio_path, int(config.sample_rate))
    return transcribe(params, clip.samples, config, threshold)
