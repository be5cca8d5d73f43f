import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onsetforge.datagen import render_piece
from onsetforge.evaluation import (CELL_LAYOUT, MatchReport, Piece, TernaryConfusion,
                                   evaluate_dataset, evaluate_generated, evaluate_predictions,
                                   match_events, max_bipartite_matching, ternary_confusion,
                                   ternary_metrics)
from onsetforge.events import NoteEvent, read_events, read_maps_annotations, write_maps_annotations
from onsetforge.exceptions import FormatError, InvalidInputError
from onsetforge.network import init_params


def brute_force_matches(pred, truth, tol):
    """Largest one-to-one matching by trying every injection (tiny instances only)."""
    best = 0
    pairs = [(i, j) for i, p in enumerate(pred) for j, t in enumerate(truth)
             if p.pitch == t.pitch and round(abs(p.onset - t.onset), 9) <= tol]
    for r in range(min(len(pred), len(truth)), 0, -1):
        for combo in itertools.combinations(pairs, r):
            if len({i for i, _ in combo}) == r and len({j for _, j in combo}) == r:
                return r
    return best


events = st.lists(st.builds(NoteEvent, st.integers(0, 30).map(lambda k: k * 0.02),
                            st.sampled_from([60, 61])), max_size=5)


def test_exact_and_tolerance_edges():
    truth = [NoteEvent(1.0, 60)]
    assert match_events([NoteEvent(1.05, 60)], truth).tp == 1
    assert match_events([NoteEvent(1.0501, 60)], truth).tp == 0
    assert match_events([NoteEvent(1.0, 61)], truth).tp == 0


def test_one_to_one():
    r = match_events([NoteEvent(1.0, 60), NoteEvent(1.01, 60)], [NoteEvent(1.0, 60)])
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)


def test_greedy_would_fail():
    # nearest-first pairing would take (1.04, 1.00) and lose a match
    pred = [NoteEvent(1.04, 60), NoteEvent(0.96, 60)]
    truth = [NoteEvent(1.00, 60), NoteEvent(1.08, 60)]
    assert match_events(pred, truth).tp == 2


def test_metrics_examples():
    r = MatchReport(3, 1, 2)
    assert r.precision == 0.75 and r.recall == 0.6 and r.accuracy == 0.5
    assert r.f_measure == pytest.approx(2 / 3)
    assert MatchReport(0, 0, 0).f_measure == 0.0


@settings(max_examples=200, deadline=None)
@given(events, events)
def test_matching_against_brute_force(pred, truth):
    r = match_events(pred, truth)
    assert r.tp == brute_force_matches(pred, truth, 0.05)
    assert r.tp + r.fp == len(pred) and r.tp + r.fn == len(truth)


@settings(max_examples=100, deadline=None)
@given(events, events)
def test_matching_symmetric(pred, truth):
    assert match_events(pred, truth).tp == match_events(truth, pred).tp


@settings(max_examples=100, deadline=None)
@given(events, events, st.floats(0.0, 0.1), st.floats(0.0, 0.1))
def test_tolerance_monotone(pred, truth, a, b):
    lo, hi = sorted((a, b))
    assert match_events(pred, truth, lo).tp <= match_events(pred, truth, hi).tp


def test_bipartite_helper():
    assert max_bipartite_matching([[0, 1], [0], [1]], 2) == 2
    assert max_bipartite_matching([], 3) == 0


def test_ternary_cells_each_once():
    outputs, labels, expected = [], [], []
    values = {0: 0.9, 1: 0.5, 2: 0.1}
    label_values = {0: 1.0, 1: 0.5, 2: 0.0}
    for i, row in enumerate(CELL_LAYOUT):
        for j, name in enumerate(row):
            outputs.append(values[i])
            labels.append(label_values[j])
            expected.append(name)
    c = ternary_confusion(np.array(outputs), np.array(labels))
    assert c.total() == 9
    assert all(getattr(c, name) == 1 for name in expected)


def test_ternary_boundaries_are_unknown():
    c = ternary_confusion(np.array([0.8, 0.2]), np.array([1.0, 0.0]))
    assert c.SFN == 1 and c.SFP == 1


def test_ternary_rejects_bad_thresholds():
    with pytest.raises(InvalidInputError):
        ternary_confusion(np.zeros(3), np.zeros(3), hi=0.2, lo=0.2)
    with pytest.raises(InvalidInputError):
        ternary_confusion(np.zeros(3), np.zeros(4))


def test_ternary_metrics_formulae():
    c = TernaryConfusion(HTP=6, STP=2, HFP=2, SFN=1, VC=9, SFP=9, HFN=3, STN=9, HTN=99)
    p, r, a, f = ternary_metrics(c)
    assert p == pytest.approx(0.8)
    assert r == pytest.approx(0.6)
    assert a == pytest.approx(8 / 14)
    assert f == pytest.approx(2 * 0.8 * 0.6 / 1.4)
    assert ternary_metrics(TernaryConfusion()) == (0.0, 0.0, 0.0, 0.0)


def test_confusion_addition():
    a = TernaryConfusion(HTP=1, VC=2)
    assert (a + a).VC == 4
    np.testing.assert_array_equal(TernaryConfusion.from_matrix(a.matrix()).matrix(), a.matrix())


def test_evaluate_predictions_perfect_and_empty():
    truth = [[NoteEvent(0.5, 60), NoteEvent(1.0, 64)], [NoteEvent(2.0, 70)]]
    report = evaluate_predictions(truth, truth)
    assert report["aggregate"]["micro"]["f_measure"] == 1.0
    assert report["aggregate"]["macro"]["precision"] == 1.0
    assert evaluate_predictions([], [])["aggregate"] == {}


def test_micro_differs_from_macro():
    truth = [[NoteEvent(0.5, 60)], [NoteEvent(k * 0.5, 60) for k in range(1, 4)]]
    pred = [[NoteEvent(0.5, 60)], []]
    agg = evaluate_predictions(pred, truth)["aggregate"]
    assert agg["micro"]["recall"] == 0.25
    assert agg["macro"]["recall"] == 0.5


def test_evaluate_dataset_modes(toy_set, rng):
    params = init_params(rng)
    spec, events = render_piece(np.random.default_rng(3), toy_set, n_frames=120)
    pieces = [Piece("a", spec, events), Piece("short", np.zeros((5, 79)), [])]
    rep = evaluate_dataset(params, pieces, "events")
    assert len(rep["pieces"]) == 2
    rep = evaluate_dataset(params, pieces, "windows", windows_per_piece=8, rng=rng)
    assert rep["pieces"][0]["windows"] == 8
    assert rep["pieces"][1]["windows"] == 0
    with pytest.raises(InvalidInputError):
        evaluate_dataset(params, pieces, "frames")


def test_evaluate_generated(toy_set, rng):
    rep = evaluate_generated(init_params(rng), toy_set, n=50, rng=rng, batch=20)
    assert sum(rep[c] for row in CELL_LAYOUT for c in row) == 50 * 88


def test_maps_parsing(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("OnsetTime\tOffsetTime\tMidiPitch\n0.500\t1.2\t60\n\n1.25\t1.5\t72\n")
    assert read_maps_annotations(path) == [NoteEvent(0.5, 60), NoteEvent(1.25, 72)]
    assert read_events(path) == read_maps_annotations(path)
    write_maps_annotations(tmp_path / "b.txt", [NoteEvent(0.5, 60)])
    assert read_events(tmp_path / "b.txt") == [NoteEvent(0.5, 60)]
    path.write_text("onset pitch\n1 2\n")
    with pytest.raises(FormatError):
        read_maps_annotations(path)
