"""Command-line interface.

Exit codes: 0 success, 2 usage or invalid input, 3 file/format problems,
4 numeric failure during training.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import basis as basis_mod
from .config import RunConfig, load_config, save_config
from .cqt import cqt, load_spectrogram
from .datagen import GenerationStats, generate_batch, generate_parallel, read_dataset, write_dataset
from .decoder import decode_events, normalize_spectrogram, roll_out
from .evaluation import Piece, evaluate_dataset, evaluate_predictions
from .events import read_events, write_events_csv
from .exceptions import FormatError, InvalidInputError, NumericError
from .imaging import time_frequency_image, write_pgm
from .network import load_model, save_model, train, write_metrics_csv
from .wav import load_wav

logger = logging.getLogger("onsetforge")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("ONSETFORGE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError(f"ONSETFORGE_THREADS must be an integer, got {env!r}")
    return 1


def _run_config(args):
    config = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"--set expects section.key=value, got {item!r}")
        config = config.override(key, value)
    shortcuts = {"iterations": "train.iterations", "batch_size": "train.batch_size",
                 "learning_rate": "train.learning_rate", "threshold": "decode.threshold",
                 "tolerance": "eval.tolerance"}
    for attr, dotted in shortcuts.items():
        value = getattr(args, attr, None)
        if value is not None:
            config = config.override(dotted, json.dumps(value))
    if getattr(args, "seed", None) is not None:
        config = config.override("train.seed", str(args.seed))
    if getattr(args, "emit_config", None):
        save_config(config, args.emit_config)
    return config


def _load_basis_set(paths):
    return basis_mod.BasisSet(basis_mod.load_basis(p) for p in paths)


def _load_audio_spectrogram(path, config):
    if str(path).endswith(".cqts"):
        spec, _, _ = load_spectrogram(path)
        return spec
    return cqt(config.cqt, load_wav(path, int(config.cqt.sample_rate)).samples)


def cmd_basis_build(args):
    config = _run_config(args)
    b = basis_mod.load_basis_dir(args.wav_dir, config.cqt, args.onset, args.instrument, args.velocity)
    basis_mod.save_basis(b, args.output)
    print(f"wrote {args.output}: {b.frames} frames, onset frame {b.onset_frame}")


def cmd_basis_synth(args):
    config = _run_config(args)
    b = basis_mod.synth_toy_basis(config.cqt, args.seed if args.seed is not None else 0, args.velocity,
                                  args.instrument, args.partials, tuple(args.decay_rates),
                                  args.velocity_scaling)
    basis_mod.save_basis(b, args.output)
    print(f"wrote {args.output}: {b.frames} frames, onset frame {b.onset_frame}")


def _basis_or_toy(args, config):
    if args.basis:
        return _load_basis_set(args.basis)
    logger.info("no --basis given; using the synthetic toy basis set")
    return basis_mod.toy_basis_set(config.cqt)


def cmd_datagen_dump(args):
    config = _run_config(args)
    seed = config.train.seed
    examples = generate_parallel(seed, _load_basis_set(args.basis), config.datagen, args.n,
                                 _threads(args))
    write_dataset(args.output, examples)
    if args.pgm:
        write_pgm(args.pgm, time_frequency_image(examples[args.pgm_index].window))
    print(f"wrote {len(examples)} examples to {args.output}")


def cmd_datagen_stats(args):
    config = _run_config(args)
    stats = GenerationStats()
    generate_batch(np.random.default_rng(config.train.seed), _basis_or_toy(args, config),
                   config.datagen, args.n, stats)
    print(json.dumps(stats.summary(), indent=2))


def cmd_train(args):
    config = _run_config(args)
    basis_set = _load_basis_set(args.basis)
    if basis_set.config != config.cqt:
        raise InvalidInputError("basis CQT parameters differ from the run configuration")
    prefetch = 2 if _threads(args) > 1 else 0
    params, log = train(basis_set, config.datagen, config.train, prefetch=prefetch)
    save_model(params, args.output, config.cqt)
    if args.log:
        write_metrics_csv(args.log, log)
    print(f"wrote {args.output} after {config.train.iterations} iterations")


def _transcribe_one(params, path, config):
    mag = normalize_spectrogram(_load_audio_spectrogram(path, config))
    if mag.shape[0] < 8:
        return np.zeros((mag.shape[0], basis_mod.N_PITCHES)), []
    roll = roll_out(params, mag)
    return roll, decode_events(roll, config.decode.threshold, config.cqt.hop, config.cqt.sample_rate)


def cmd_transcribe(args):
    config = _run_config(args)
    params, model_cqt = load_model(args.model)
    config = replace(config, cqt=model_cqt)
    roll, events = _transcribe_one(params, args.audio, config)
    if args.output:
        write_events_csv(args.output, events)
    else:
        write_events_csv("/dev/stdout", events)
    if args.roll_pgm:
        write_pgm(args.roll_pgm, time_frequency_image(roll))


def _pairs(args):
    if len(args.truth) != len(args.inputs):
        raise InvalidInputError("need one --truth file per input")
    return list(zip(args.inputs, args.truth))


def _write_report(report, path):
    text = json.dumps(report, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def cmd_evaluate_events(args):
    config = _run_config(args)
    if args.model:
        params, _ = load_model(args.model)
        predicted = [_transcribe_one(params, a, config)[1] for a, _ in _pairs(args)]
    else:
        predicted = [read_events(p) for p, _ in _pairs(args)]
    truth = [read_events(t) for _, t in _pairs(args)]
    report = evaluate_predictions(predicted, truth, [str(a) for a, _ in _pairs(args)],
                                  config.eval.tolerance)
    _write_report(report, args.report)


def cmd_evaluate_windows(args):
    config = _run_config(args)
    params, _ = load_model(args.model)
    pieces = [Piece(str(a), _load_audio_spectrogram(a, config), read_events(t)) for a, t in _pairs(args)]
    report = evaluate_dataset(params, pieces, "windows", config.cqt, config.decode.threshold,
                              config.eval.tolerance, config.eval.hi, config.eval.lo,
                              config.eval.windows_per_piece, np.random.default_rng(config.train.seed))
    _write_report(report, args.report)


def cmd_inspect_render(args):
    config = _run_config(args)
    if args.dataset:
        windows, _ = read_dataset(args.dataset)
        write_pgm(args.output, time_frequency_image(windows[args.index]))
        return
    if not args.audio:
        raise InvalidInputError("inspect render needs --audio or --dataset")
    mag = normalize_spectrogram(_load_audio_spectrogram(args.audio, config))
    if args.model:
        params, _ = load_model(args.model)
        write_pgm(args.output, time_frequency_image(roll_out(params, mag)))
    else:
        write_pgm(args.output, time_frequency_image(mag))


def _common(p, seed=True):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    p.add_argument("--emit-config", metavar="PATH", help="write the effective configuration as JSON")
    p.add_argument("--threads", type=int, help="worker threads (env ONSETFORGE_THREADS)")
    if seed:
        p.add_argument("--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="onsetforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    basis = sub.add_parser("basis", help="build or synthesise spectral bases").add_subparsers(
        dest="action", required=True)
    p = basis.add_parser("build", help="CQT a directory of <midi>.wav files")
    _common(p, seed=False)
    p.add_argument("--wav-dir", required=True)
    p.add_argument("--onset", type=float, default=0.5, help="onset time in seconds shared by all clips")
    p.add_argument("--instrument", default="unknown")
    p.add_argument("--velocity", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_basis_build)

    p = basis.add_parser("synth", help="synthetic harmonic toy basis")
    _common(p)
    p.add_argument("--velocity", type=int, default=90)
    p.add_argument("--instrument", default="toy")
    p.add_argument("--partials", type=int, default=8)
    p.add_argument("--decay-rates", type=float, nargs=2, default=(0.8, 0.3))
    p.add_argument("--velocity-scaling", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_basis_synth)

    datagen = sub.add_parser("datagen", help="generate labelled windows").add_subparsers(
        dest="action", required=True)
    p = datagen.add_parser("dump", help="write a binary dataset")
    _common(p)
    p.add_argument("--basis", nargs="+", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pgm", help="also write one window as a PGM image")
    p.add_argument("--pgm-index", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_datagen_dump)

    p = datagen.add_parser("stats", help="generator draw statistics")
    _common(p)
    p.add_argument("--basis", nargs="*")
    p.add_argument("--n", type=int, default=100000)
    p.set_defaults(func=cmd_datagen_stats)

    p = sub.add_parser("train", help="train the network on generated data")
    _common(p)
    p.add_argument("--basis", nargs="+", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--log", help="metrics CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transcribe", help="audio (.wav) or spectrogram (.cqts) to onset CSV")
    _common(p, seed=False)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--roll-pgm", help="write the raw piano roll as a PGM image")
    p.add_argument("-o", "--output")
    p.add_argument("audio")
    p.set_defaults(func=cmd_transcribe)

    evaluate = sub.add_parser("evaluate", help="score predictions").add_subparsers(
        dest="action", required=True)
    p = evaluate.add_parser("events", help="onset matching P/R/A/F")
    _common(p, seed=False)
    p.add_argument("--model", help="transcribe the inputs with this model; otherwise inputs are event CSVs")
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_evaluate_events)

    p = evaluate.add_parser("windows", help="ternary window metrics on annotated audio")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--report")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_evaluate_windows)

    inspect = sub.add_parser("inspect", help="render images").add_subparsers(dest="action", required=True)
    p = inspect.add_parser("render", help="spectrogram, piano roll or dataset window as PGM")
    _common(p, seed=False)
    p.add_argument("--audio")
    p.add_argument("--model", help="render the raw piano roll instead of the spectrogram")
    p.add_argument("--dataset")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_inspect_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (InvalidInputError, IndexError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
