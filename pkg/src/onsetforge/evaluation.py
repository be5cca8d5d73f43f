"""Scoring: note-onset matching and ternary confusion metrics."""

from collections import defaultdict
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._validation import check_random_state
from .cqt import CqtConfig
from .datagen import DatagenConfig, generate_batch, sample_windows, stack_examples
from .decoder import decode_events, normalize_spectrogram, roll_out
from .exceptions import InvalidInputError
from .network import forward


def _ratio(num, den):
    return num / den if den else 0.0


def _f_measure(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class MatchReport:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self):
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self):
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def accuracy(self):
        return _ratio(self.tp, self.tp + self.fp + self.fn)

    @property
    def f_measure(self):
        return _f_measure(self.precision, self.recall)

    def __add__(self, other):
        return MatchReport(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "accuracy": self.accuracy, "f_measure": self.f_measure}


def max_bipartite_matching(adjacency, n_right):
    """Size of a maximum matching; ``adjacency[i]`` lists right vertices joined to left ``i``.

    Augmenting paths (Kuhn); instances here are a few events per pitch.
    """
    match_right = [-1] * n_right

    def augment(u, seen):
        for v in adjacency[u]:
            if v in seen:
                continue
            seen.add(v)
            if match_right[v] < 0 or augment(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    return sum(augment(u, set()) for u in range(len(adjacency)))


def match_events(predictions, truth, tolerance=0.05):
    """One-to-one matching of predictions to truth at equal pitch within ``tolerance`` seconds."""
    by_pitch_pred = defaultdict(list)
    by_pitch_true = defaultdict(list)
    for ev in predictions:
        by_pitch_pred[ev.pitch].append(ev.onset)
    for ev in truth:
        by_pitch_true[ev.pitch].append(ev.onset)
    tp = 0
    for pitch, ref in by_pitch_true.items():
        est = by_pitch_pred.get(pitch)
        if not est:
            continue
        ref_arr = np.asarray(ref)
        # rounding keeps e.g. 1.05 - 1.00 from landing a hair above 0.05
        dist = np.round(np.abs(np.asarray(est)[:, None] - ref_arr[None, :]), 9)
        adjacency = [np.flatnonzero(row <= tolerance).tolist() for row in dist]
        tp += max_bipartite_matching(adjacency, len(ref))
    return MatchReport(tp, len(predictions) - tp, len(truth) - tp)


CELL_LAYOUT = (("HTP", "STP", "HFP"),   # prediction T; label T, U, F
               ("SFN", "VC", "SFP"),    # prediction U
               ("HFN", "STN", "HTN"))   # prediction F


@dataclass
class TernaryConfusion:
    HTP: int = 0
    STP: int = 0
    HFP: int = 0
    SFN: int = 0
    VC: int = 0
    SFP: int = 0
    HFN: int = 0
    STN: int = 0
    HTN: int = 0

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix)
        return cls(**{CELL_LAYOUT[i][j]: int(m[i, j]) for i in range(3) for j in range(3)})

    def matrix(self):
        return np.array([[getattr(self, c) for c in row] for row in CELL_LAYOUT])

    def total(self):
        return sum(getattr(self, f.name) for f in fields(self))

    def __add__(self, other):
        return TernaryConfusion.from_matrix(self.matrix() + other.matrix())

    def to_dict(self):
        return asdict(self)


def _ternary_index(values, hi, lo):
    # 0 = T, 1 = U, 2 = F; boundary values count as U
    return np.where(values > hi, 0, np.where(values < lo, 2, 1))


def ternary_confusion(outputs, labels, hi=0.8, lo=0.2):
    """Tally (prediction, label) pairs; predictions are T above ``hi``, F below ``lo``, else U."""
    if not hi > lo:
        raise InvalidInputError("hi must exceed lo")
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if outputs.shape != labels.shape:
        raise InvalidInputError(f"outputs {outputs.shape} and labels {labels.shape} differ in shape")
    pred = _ternary_index(outputs, hi, lo).ravel()
    truth = np.select([labels == 1.0, labels == 0.5], [0, 1], 2).ravel()
    counts = np.bincount(pred * 3 + truth, minlength=9).reshape(3, 3)
    return TernaryConfusion.from_matrix(counts)


def ternary_metrics(c):
    """``(P, R, A, F)`` from a ternary confusion; empty denominators give 0."""
    p = _ratio(c.HTP + c.STP, c.HTP + c.STP + c.HFP)
    r = _ratio(c.HTP, c.HTP + c.SFN + c.HFN)
    a = _ratio(c.HTP + c.STP, c.HTP + c.STP + c.HFP + c.SFN + c.HFN)
    return p, r, a, _f_measure(p, r)


def _ternary_report(c):
    p, r, a, f = ternary_metrics(c)
    return {**c.to_dict(), "precision": p, "recall": r, "accuracy": a, "f_measure": f}


@dataclass
class Piece:
    """One annotated recording: its complex or magnitude spectrogram and true events."""

    name: str
    spectrogram: np.ndarray
    events: list


def aggregate_match(reports):
    """Pooled (micro) counts plus per-piece (macro) averages of the four metrics."""
    if not reports:
        return {}
    pooled = sum(reports, MatchReport(0, 0, 0))
    macro = {k: float(np.mean([getattr(r, k) for r in reports]))
             for k in ("precision", "recall", "accuracy", "f_measure")}
    return {"micro": pooled.to_dict(), "macro": macro}


def evaluate_predictions(predicted, truth, names=None, tolerance=0.05):
    """Score lists of predicted event lists against matching truth lists."""
    names = names or [str(i) for i in range(len(truth))]
    reports = [match_events(p, t, tolerance) for p, t in zip(predicted, truth)]
    return {"mode": "events", "tolerance": tolerance,
            "pieces": [{"name": n, **r.to_dict()} for n, r in zip(names, reports)],
            "aggregate": aggregate_match(reports)}


def evaluate_dataset(params, pieces, mode="events", cqt_config=None, threshold=0.8,
                     tolerance=0.05, hi=0.8, lo=0.2, windows_per_piece=32, rng=None):
    """Evaluate a model on annotated pieces.

    ``mode="events"`` transcribes every piece and matches events (test protocol).
    ``mode="windows"`` samples random non-silent windows and scores them with
    the ternary confusion metrics (validation protocol).
    """
    cqt_config = cqt_config or CqtConfig()
    if mode not in ("events", "windows"):
        raise InvalidInputError(f"unknown evaluation mode {mode!r}")
    if mode == "events":
        predicted = []
        for piece in pieces:
            mag = normalize_spectrogram(piece.spectrogram)
            if mag.shape[0] < 8:
                predicted.append([])
                continue
            roll = roll_out(params, mag)
            predicted.append(decode_events(roll, threshold, cqt_config.hop, cqt_config.sample_rate))
        report = evaluate_predictions(predicted, [p.events for p in pieces],
                                      [p.name for p in pieces], tolerance)
        report["threshold"] = threshold
        return report

    rng = check_random_state(rng)
    per_piece = []
    total = TernaryConfusion()
    for piece in pieces:
        mag = normalize_spectrogram(piece.spectrogram)
        examples = sample_windows(rng, mag, piece.events, cqt_config, windows_per_piece)
        if not examples:
            c = TernaryConfusion()
        else:
            X, Y = stack_examples(examples)
            c = ternary_confusion(forward(params, X), Y, hi, lo)
        total = total + c
        per_piece.append({"name": piece.name, "windows": len(examples), **_ternary_report(c)})
    report = {"mode": "windows", "hi": hi, "lo": lo, "pieces": per_piece}
    report["aggregate"] = _ternary_report(total) if pieces else {}
    return report


def evaluate_generated(params, basis_set, datagen_config=None, n=32768, rng=None, hi=0.8, lo=0.2,
                       batch=1024):
    """Ternary metrics on ``n`` freshly generated windows (training/validation rows)."""
    rng = check_random_state(rng)
    datagen_config = datagen_config or DatagenConfig()
    total = TernaryConfusion()
    remaining = n
    while remaining > 0:
        k = min(batch, remaining)
        X, Y = stack_examples(generate_batch(rng, basis_set, datagen_config, k))
        total = total + ternary_confusion(forward(params, X), Y, hi, lo)
        remaining -= k
    return _ternary_report(total)
