"""Piano note-onset transcription trained on procedurally generated spectral data."""

from .basis import BasisSet, SpectralBasis, build_basis, load_basis, save_basis, synth_toy_basis, toy_basis_set
from .cqt import ConstantQTransform, CqtConfig, bin_frequency, cqt, kernel_length
from .datagen import DatagenConfig, TrainingExample, extract_window, generate_batch, generate_example
from .decoder import decode_events, roll_out, transcribe, transcribe_file
from .estimator import OnsetTranscriber
from .evaluation import (MatchReport, TernaryConfusion, evaluate_dataset, match_events,
                         ternary_confusion, ternary_metrics)
from .events import NoteEvent
from .exceptions import FormatError, InvalidInputError, NumericError, OnsetForgeError
from .network import (NetworkParams, TrainConfig, adam_step, forward, gradient, init_params,
                      load_model, masked_loss, save_model, train)

__version__ = "0.1.0"
