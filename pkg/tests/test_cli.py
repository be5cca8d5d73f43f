import json

import numpy as np
import pytest
from scipy.io import wavfile

from onsetforge.basis import save_basis
from onsetforge.cli import main
from onsetforge.config import RunConfig, load_config, save_config
from onsetforge.datagen import read_dataset
from onsetforge.events import NoteEvent, read_events_csv, write_events_csv
from onsetforge.exceptions import FormatError, InvalidInputError, UnsupportedRateError
from onsetforge.imaging import read_pgm
from onsetforge.network import init_params, load_model, save_model
from onsetforge.wav import load_wav, write_wav


@pytest.fixture(scope="module")
def basis_file(tmp_path_factory, toy_basis):
    path = tmp_path_factory.mktemp("basis") / "toy.sbas"
    save_basis(toy_basis, path)
    return path


def test_wav_pcm16_scaling(tmp_path):
    path = tmp_path / "a.wav"
    wavfile.write(path, 44100, np.array([32767, -32768, 0], dtype=np.int16))
    clip = load_wav(path)
    np.testing.assert_allclose(clip.samples, [32767 / 32768, -1.0, 0.0])
    assert clip.samples[0] == pytest.approx(0.99997, abs=1e-5)


def test_wav_stereo_is_averaged(tmp_path):
    path = tmp_path / "s.wav"
    wavfile.write(path, 44100, np.array([[0.5, 0.1], [-0.2, 0.2]], dtype=np.float32))
    np.testing.assert_allclose(load_wav(path).samples, [0.3, 0.0], atol=1e-7)


def test_wav_rate_mismatch(tmp_path):
    path = tmp_path / "r.wav"
    write_wav(path, np.zeros(100), sample_rate=48000)
    with pytest.raises(UnsupportedRateError):
        load_wav(path)


def test_wav_rejects_other_sample_types(tmp_path):
    path = tmp_path / "i.wav"
    wavfile.write(path, 44100, np.zeros(10, dtype=np.int32))
    with pytest.raises(FormatError):
        load_wav(path)


def test_config_round_trip(tmp_path):
    cfg = RunConfig().override("datagen.chords_lambda", "4.5").override("train.iterations", "7")
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_config_rejects_unknown():
    with pytest.raises(InvalidInputError):
        RunConfig.from_dict({"train": {"iters": 3}})
    with pytest.raises(InvalidInputError):
        RunConfig.from_dict({"optimizer": {}})
    with pytest.raises(InvalidInputError):
        RunConfig().override("train", "3")


def test_unknown_config_key_exit_2(tmp_path, basis_file):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"bogus": 1}}))
    code = main(["train", "--basis", str(basis_file), "--config", str(cfg), "-o", str(tmp_path / "m")])
    assert code == 2


def test_unknown_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--no-such-flag"])
    assert info.value.code == 2


def test_missing_file_exit_3(tmp_path):
    code = main(["train", "--basis", str(tmp_path / "nope.sbas"), "-o", str(tmp_path / "m")])
    assert code == 3


def test_corrupt_basis_exit_3(tmp_path):
    bad = tmp_path / "bad.sbas"
    bad.write_bytes(b"JUNKJUNKJUNK")
    assert main(["datagen", "dump", "--basis", str(bad), "--n", "2", "-o", str(tmp_path / "d")]) == 3


def test_train_zero_iterations_equals_init(tmp_path, basis_file):
    out = tmp_path / "m.onnw"
    emitted = tmp_path / "eff.json"
    assert main(["train", "--basis", str(basis_file), "--iterations", "0", "--seed", "5",
                 "--emit-config", str(emitted), "-o", str(out)]) == 0
    params, _ = load_model(out)
    init = init_params(np.random.default_rng(5))
    for a, b in zip(params.tensors(), init.tensors()):
        np.testing.assert_array_equal(a, b.astype(np.float32))
    assert json.loads(emitted.read_text())["train"]["seed"] == 5


def test_train_writes_log(tmp_path, basis_file):
    log = tmp_path / "log.csv"
    assert main(["train", "--basis", str(basis_file), "--iterations", "4", "--set",
                 "train.log_every=2", "--log", str(log), "-o", str(tmp_path / "m")]) == 0
    lines = log.read_text().splitlines()
    assert lines[0] == "iteration,train_loss" and len(lines) == 3


def test_evaluate_identical_csvs(tmp_path, capsys):
    path = tmp_path / "e.csv"
    write_events_csv(path, [NoteEvent(0.5, 60), NoteEvent(0.9, 62)])
    report_path = tmp_path / "r.json"
    assert main(["evaluate", "events", str(path), "--truth", str(path),
                 "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["aggregate"]["micro"]["f_measure"] == 1.0


def test_evaluate_mismatched_pairs_exit_2(tmp_path):
    path = tmp_path / "e.csv"
    write_events_csv(path, [])
    assert main(["evaluate", "events", str(path), str(path), "--truth", str(path)]) == 2


def test_datagen_stats(capsys):
    assert main(["datagen", "stats", "--n", "50", "--seed", "1"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["examples"] == 50


def test_datagen_dump_with_image(tmp_path, basis_file):
    out, pgm = tmp_path / "d.onst", tmp_path / "w.pgm"
    assert main(["datagen", "dump", "--basis", str(basis_file), "--n", "6", "--pgm", str(pgm),
                 "-o", str(out)]) == 0
    windows, labels = read_dataset(out)
    assert windows.shape == (6, 8, 79)
    image = read_pgm(pgm)
    assert image.shape == (79, 8)
    assert main(["inspect", "render", "--dataset", str(out), "--index", "2",
                 "-o", str(tmp_path / "x.pgm")]) == 0


def test_transcribe_and_render(tmp_path, rng):
    model = tmp_path / "m.onnw"
    save_model(init_params(rng), model)
    audio = tmp_path / "a.wav"
    t = np.arange(44100) / 44100
    write_wav(audio, 0.3 * np.sin(2 * np.pi * 440 * t) * (t > 0.3))
    out = tmp_path / "e.csv"
    assert main(["transcribe", "--model", str(model), "--threshold", "0.5",
                 "--roll-pgm", str(tmp_path / "roll.pgm"), "-o", str(out), str(audio)]) == 0
    events = read_events_csv(out)
    assert all(21 <= e.pitch <= 108 for e in events)
    assert read_pgm(tmp_path / "roll.pgm").shape == (88, 44)
    assert main(["inspect", "render", "--audio", str(audio), "-o", str(tmp_path / "s.pgm")]) == 0
    assert read_pgm(tmp_path / "s.pgm").shape == (79, 44)


def test_transcribe_bad_rate_exit_3(tmp_path, rng):
    model = tmp_path / "m.onnw"
    save_model(init_params(rng), model)
    audio = tmp_path / "a.wav"
    write_wav(audio, np.zeros(1000), sample_rate=22050)
    assert main(["transcribe", "--model", str(model), str(audio)]) == 3


def test_threads_env(tmp_path, basis_file, monkeypatch):
    monkeypatch.setenv("ONSETFORGE_THREADS", "x")
    assert main(["datagen", "dump", "--basis", str(basis_file), "--n", "2",
                 "-o", str(tmp_path / "d")]) == 2
