"""scikit-learn style front end: train on generated data, predict onset events."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_magnitude
from .basis import BasisSet, SpectralBasis
from .cqt import CqtConfig, cqt
from .datagen import DatagenConfig
from .decoder import decode_events, normalize_spectrogram, roll_out
from .evaluation import Piece, evaluate_dataset
from .network import TrainConfig, init_params, load_model, save_model, train


def _as_basis_set(X):
    if isinstance(X, BasisSet):
        return X
    if isinstance(X, SpectralBasis):
        return BasisSet([X])
    return BasisSet(list(X))


class OnsetTranscriber(BaseEstimator):
    """Piano onset transcriber trained purely on procedurally generated windows.

    ``fit`` takes a :class:`~onsetforge.basis.BasisSet` (or a list of bases)
    as its training source; ``y`` is ignored because labels come from the
    generator.  ``predict`` maps a spectrogram or audio signal to
    :class:`~onsetforge.events.NoteEvent` lists.

    Parameters
    ----------
    iterations : int
        Number of ADAM steps (1.5 million at full scale).
    threshold : float
        Activation threshold applied to the raw piano roll.
    datagen_config : DatagenConfig or None
        Generator settings; ``None`` uses the defaults.
    random_state : int
        Seeds both initialisation and the example stream.
    """

    def __init__(self, iterations=1_500_000, batch_size=32, learning_rate=1e-3, adam_beta1=0.9,
                 adam_beta2=0.999, adam_epsilon=1e-8, l2_lambda=5e-10, threshold=0.8,
                 datagen_config=None, random_state=0, log_every=1000, prefetch=0):
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.l2_lambda = l2_lambda
        self.threshold = threshold
        self.datagen_config = datagen_config
        self.random_state = random_state
        self.log_every = log_every
        self.prefetch = prefetch

    def train_config(self):
        return TrainConfig(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_epsilon,
                           self.batch_size, self.l2_lambda, self.iterations, self.random_state,
                           self.log_every)

    def fit(self, X, y=None, callbacks=()):
        basis_set = _as_basis_set(X)
        self.params_, self.log_ = train(basis_set, self.datagen_config or DatagenConfig(),
                                        self.train_config(), callbacks, prefetch=self.prefetch)
        self.cqt_config_ = basis_set.config
        return self

    def init(self, cqt_config=None):
        """Set fitted state to the untrained initial parameters."""
        self.params_ = init_params(np.random.default_rng(self.random_state))
        self.log_ = []
        self.cqt_config_ = cqt_config or CqtConfig()
        return self

    def _magnitude(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            X = cqt(self.cqt_config_, X)
        return normalize_spectrogram(check_magnitude(X, n_bins=self.cqt_config_.bins))

    def predict_proba(self, X):
        """Raw piano roll ``(frames, 88)`` for a spectrogram or a 1-D audio signal."""
        check_is_fitted(self, "params_")
        return roll_out(self.params_, self._magnitude(X))

    def predict(self, X):
        """Onset events for a spectrogram or a 1-D audio signal."""
        roll = self.predict_proba(X)
        return decode_events(roll, self.threshold, self.cqt_config_.hop, self.cqt_config_.sample_rate)

    def score(self, X, y, tolerance=0.05):
        """Pooled onset F-measure over pieces ``X`` (spectrograms) with true events ``y``."""
        check_is_fitted(self, "params_")
        pieces = [Piece(str(i), s, ev) for i, (s, ev) in enumerate(zip(X, y))]
        report = evaluate_dataset(self.params_, pieces, "events", self.cqt_config_, self.threshold,
                                  tolerance)
        return report["aggregate"]["micro"]["f_measure"] if pieces else 0.0

    def save(self, path):
        check_is_fitted(self, "params_")
        save_model(self.params_, path, self.cqt_config_)

    @classmethod
    def load(cls, path, **kwargs):
        est = cls(**kwargs)
        est.params_, est.cqt_config_ = load_model(path)
        est.log_ = []
        return est
