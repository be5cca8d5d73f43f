"""Feed-forward onset network: 632 inputs, two softsign layers of 512, 88 sigmoid outputs.

Trained with a cross-entropy that ignores U-labelled outputs, an L2 penalty
``l2_lambda * sum(W**2)`` on the weight matrices (biases excluded) and ADAM.
All arithmetic is float64; model files store float32.
"""

import csv
import logging
import math
import queue
import struct
import threading
from dataclasses import asdict, dataclass

import numba
import numpy as np

from ._validation import check_finite
from .cqt import CqtConfig
from .datagen import DatagenConfig, generate_batch, stack_examples
from .exceptions import FormatError, InvalidInputError, NumericError

logger = logging.getLogger(__name__)

DIMS = (632, 512, 512, 88)
MODEL_MAGIC = b"ONNW"
MODEL_VERSION = 1
_FINGERPRINT = struct.Struct("<dIIdd")
_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 32
    l2_lambda: float = 5e-10
    iterations: int = 1_500_000
    seed: int = 0
    log_every: int = 1000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidInputError("ADAM betas must lie in [0, 1)")
        if self.batch_size < 1 or self.iterations < 0 or self.log_every < 1:
            raise InvalidInputError("batch_size and log_every must be >= 1, iterations >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class NetworkParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

    def tensors(self):
        return [getattr(self, n) for n in self.NAMES]

    @classmethod
    def from_tensors(cls, tensors):
        return cls(*tensors)

    @property
    def dims(self):
        return (self.W1.shape[1], self.W1.shape[0], self.W2.shape[0], self.W3.shape[0])

    def copy(self):
        return NetworkParams.from_tensors([t.copy() for t in self.tensors()])

    def flat(self):
        """All tensors as one vector (the backing buffer when there is one)."""
        buf = getattr(self, "_flat", None)
        if buf is not None:
            return buf
        return np.concatenate([t.reshape(-1) for t in self.tensors()])

    def flat_backed(self):
        """Copy whose tensors are views into one contiguous float64 buffer."""
        buf = np.concatenate([np.asarray(t, dtype=np.float64).reshape(-1) for t in self.tensors()])
        views = []
        offset = 0
        for t in self.tensors():
            views.append(buf[offset:offset + t.size].reshape(t.shape))
            offset += t.size
        out = NetworkParams.from_tensors(views)
        out._flat = buf
        return out

    def zeros_like(self):
        return NetworkParams.from_tensors([np.zeros_like(t) for t in self.tensors()])

    def checksum(self):
        return sum(float(np.sum(t, dtype=np.float64)) for t in self.tensors())

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b)
                   for a, b in zip(self.tensors(), other.tensors()))


def init_params(rng, dims=DIMS):
    """Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    tensors = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        tensors.append(np.zeros(fan_out))
    return NetworkParams.from_tensors(tensors)


def softsign(z):
    return z / (1.0 + np.abs(z))


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activations(params, X):
    z1 = X @ params.W1.T + params.b1
    h1 = softsign(z1)
    z2 = h1 @ params.W2.T + params.b2
    h2 = softsign(z2)
    z3 = h2 @ params.W3.T + params.b3
    return z1, h1, z2, h2, z3


def forward(params, window):
    """Outputs in (0, 1) for one flattened window ``(632,)`` or a batch ``(n, 632)``."""
    X = check_finite(window, "window")
    single = X.ndim == 1
    X = X.reshape(1, -1) if single else X.reshape(X.shape[0], -1)
    if X.shape[1] != params.W1.shape[1]:
        raise InvalidInputError(f"expected {params.W1.shape[1]} inputs, got {X.shape[1]}")
    y = sigmoid(_activations(params, X)[-1])
    return y[0] if single else y


def _mask(labels):
    return labels != 0.5


def masked_loss(outputs, labels):
    """Cross-entropy summed over non-U outputs; batches average over examples."""
    p = np.clip(np.asarray(outputs, dtype=np.float64), _EPS, 1.0 - _EPS)
    y = np.asarray(labels, dtype=np.float64)
    terms = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    per_example = np.where(_mask(y), terms, 0.0).sum(axis=-1)
    return float(per_example) if per_example.ndim == 0 else float(per_example.mean())


def l2_penalty(params, l2_lambda):
    return l2_lambda * sum(float(np.sum(W * W)) for W in (params.W1, params.W2, params.W3))


def objective(params, X, Y, l2_lambda):
    """Masked batch loss plus the L2 term, computed stably from logits."""
    z3 = _activations(params, np.asarray(X, dtype=np.float64))[-1]
    Y = np.asarray(Y, dtype=np.float64)
    # -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    terms = np.logaddexp(0.0, z3) - Y * z3
    data = np.where(_mask(Y), terms, 0.0).sum(axis=1).mean()
    return float(data) + l2_penalty(params, l2_lambda)


def gradient(params, X, Y, l2_lambda):
    """Loss and exact gradient of :func:`objective`; returns ``(loss, NetworkParams)``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise InvalidInputError("empty batch")
    z1, h1, z2, h2, z3 = _activations(params, X)
    mask = _mask(Y)
    terms = np.logaddexp(0.0, z3) - Y * z3
    loss = float(np.where(mask, terms, 0.0).sum(axis=1).mean()) + l2_penalty(params, l2_lambda)

    grads = _empty_like_flat(params)
    dz3 = np.where(mask, sigmoid(z3) - Y, 0.0) / n
    np.matmul(dz3.T, h2, out=grads.W3)
    grads.W3 += (2.0 * l2_lambda) * params.W3
    np.sum(dz3, axis=0, out=grads.b3)
    dz2 = (dz3 @ params.W3) / (1.0 + np.abs(z2)) ** 2
    np.matmul(dz2.T, h1, out=grads.W2)
    grads.W2 += (2.0 * l2_lambda) * params.W2
    np.sum(dz2, axis=0, out=grads.b2)
    dz1 = (dz2 @ params.W2) / (1.0 + np.abs(z1)) ** 2
    np.matmul(dz1.T, X, out=grads.W1)
    grads.W1 += (2.0 * l2_lambda) * params.W1
    np.sum(dz1, axis=0, out=grads.b1)
    return loss, grads


def _empty_like_flat(params):
    buf = np.empty(sum(t.size for t in params.tensors()))
    views = []
    offset = 0
    for t in params.tensors():
        views.append(buf[offset:offset + t.size].reshape(t.shape))
        offset += t.size
    out = NetworkParams.from_tensors(views)
    out._flat = buf
    return out


@dataclass
class AdamState:
    """First/second moments over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, params):
        n = sum(t.size for t in params.tensors())
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, grads, state, config):
    """One bias-corrected ADAM update applied in place; returns ``(params, state)``."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr_c1 = config.learning_rate / (1.0 - b1 ** state.t)
    inv_c2 = 1.0 / (1.0 - b2 ** state.t)
    g = grads.flat()
    if getattr(params, "_flat", None) is not None:
        _adam_kernel(params._flat, g, state.m, state.v, b1, b2, lr_c1, inv_c2, config.adam_epsilon)
        return params, state
    flat = params.flat()
    _adam_kernel(flat, g, state.m, state.v, b1, b2, lr_c1, inv_c2, config.adam_epsilon)
    offset = 0
    for p in params.tensors():
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return params, state


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, b2, lr_c1, inv_c2, eps):
    # fused single pass; elementwise numpy would stream the buffers ~12 times
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr_c1 * mi / (math.sqrt(vi * inv_c2) + eps)


def data_rng(seed):
    """Example stream used by :func:`train`; independent of the initialisation stream."""
    return np.random.default_rng([int(seed), 1])


def _batches(rng, basis_set, datagen_config, batch_size, count, prefetch):
    """Yield ``count`` stacked batches, optionally produced ahead by a worker thread.

    The worker consumes the same single RNG stream in the same order, so the
    batches are identical with or without prefetching.
    """
    def make():
        return stack_examples(generate_batch(rng, basis_set, datagen_config, batch_size))

    if prefetch <= 0:
        for _ in range(count):
            yield make()
        return
    handoff = queue.Queue(maxsize=prefetch)
    stop = threading.Event()

    def produce():
        try:
            for _ in range(count):
                item = make()
                while not stop.is_set():
                    try:
                        handoff.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
        except BaseException as exc:  # surfaced in the consumer
            handoff.put(exc)

    worker = threading.Thread(target=produce, daemon=True)
    worker.start()
    try:
        for _ in range(count):
            item = handoff.get()
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        worker.join()


def train(basis_set, datagen_config=None, train_config=None, callbacks=(), params=None, prefetch=0):
    """Train on freshly generated batches.

    Parameters are initialised from ``default_rng(seed)`` unless ``params``
    is given; examples come from :func:`data_rng`.  Every ``log_every``
    iterations the mean training loss since the previous entry is logged and
    each callback is called as ``callback(iteration, params)``; a returned
    dict is merged into the log entry.  ``prefetch > 0`` generates that many
    batches ahead on a worker thread.  Returns ``(params, log)``.
    """
    datagen_config = datagen_config or DatagenConfig()
    train_config = train_config or TrainConfig()
    params = init_params(np.random.default_rng(train_config.seed)) if params is None else params
    params = params.flat_backed()
    state = AdamState.zeros(params)
    batches = _batches(data_rng(train_config.seed), basis_set, datagen_config,
                       train_config.batch_size, train_config.iterations, prefetch)
    log = []
    running = 0.0
    since = 0
    for it, (X, Y) in enumerate(batches, start=1):
        loss, grads = gradient(params, X, Y, train_config.l2_lambda)
        if not np.isfinite(loss):
            batches.close()
            raise NumericError(f"non-finite loss {loss} at iteration {it}")
        adam_step(params, grads, state, train_config)
        running += loss
        since += 1
        if it % train_config.log_every == 0 or it == train_config.iterations:
            entry = {"iteration": it, "train_loss": running / since}
            for cb in callbacks:
                extra = cb(it, params)
                if extra:
                    entry.update(extra)
            log.append(entry)
            logger.info("iteration %d loss %.5f", it, entry["train_loss"])
            running, since = 0.0, 0
    return params, log


def write_metrics_csv(path, log):
    keys = ["iteration", "train_loss"]
    for entry in log:
        keys += [k for k in entry if k not in keys]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(log)


def save_model(params, path, cqt_config=None):
    c = cqt_config or CqtConfig()
    dims = params.dims
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for t in params.tensors():
            fh.write(np.asarray(t, dtype="<f4").tobytes())
        fh.write(_FINGERPRINT.pack(c.min_freq, c.bins, c.hop, c.q_factor, c.sample_rate))


def load_model(path, expected_dims=DIMS):
    """Return ``(params, cqt_config)``; topology must equal ``expected_dims``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file")
    version, n_dims = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    if n_dims != 4 or len(data) < 12 + 4 * n_dims:
        raise FormatError(f"{path}: expected 4 layer sizes, header says {n_dims}")
    dims = struct.unpack_from(f"<{n_dims}I", data, 12)
    if expected_dims is not None and tuple(dims) != tuple(expected_dims):
        raise FormatError(f"{path}: topology {dims} does not match expected {tuple(expected_dims)}")
    offset = 12 + 4 * n_dims
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes += [(fan_out, fan_in), (fan_out,)]
    n_values = sum(int(np.prod(s)) for s in shapes)
    if len(data) != offset + 4 * n_values + _FINGERPRINT.size:
        raise FormatError(f"{path}: truncated or oversized model file")
    tensors = []
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(np.frombuffer(data, dtype="<f4", count=size, offset=offset)
                       .astype(np.float64).reshape(shape))
        offset += 4 * size
    min_freq, bins, hop, q, fs = _FINGERPRINT.unpack_from(data, offset)
    params = NetworkParams.from_tensors(tensors)
    if not all(np.all(np.isfinite(t)) for t in tensors):
        raise FormatError(f"{path}: non-finite weights")
    return params, CqtConfig(fs, hop, bins, 12, q, min_freq)
