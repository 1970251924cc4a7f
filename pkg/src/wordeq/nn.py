"""Dense word-to-EQ regressor trained with mean absolute error.

Architecture: input -> 300 -> 200 -> 100 -> 80 -> 60 (ReLU, inverted dropout)
-> 40 (sigmoid). The input is either a frozen 300-d word embedding or a one-hot
vector over the training vocabulary (the no-embedding baseline). Everything is
plain numpy in float64.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import EMBEDDING_DIM, NUM_BANDS
from .dataset import denormalize
from .embeddings import EmbeddingTable, embed_descriptor
from .errors import (DivergenceError, FormatError, ModelStateError,
                     UnresolvableDescriptorError)
from .io_utils import atomic_write_bytes

HIDDEN_UNITS = (300, 200, 100, 80, 60)
LAYER_UNITS = HIDDEN_UNITS + (NUM_BANDS,)

EMBEDDING = "embedding"
ONE_HOT = "one_hot"


@dataclass
class MlpModel:
    input_mode: str
    input_dim: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    vocab: tuple[str, ...] = ()
    step: int = 0
    _vocab_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._vocab_index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def layer_units(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def vocab_index(self, word: str) -> int:
        return self._vocab_index.get(word.lower(), -1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    dropout_rate: float = 0.1
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    early_stop_patience: int | None = 50

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.early_stop_patience is not None and self.early_stop_patience <= 0:
            raise ValueError("early_stop_patience must be positive")


@dataclass(frozen=True)
class Prediction:
    normalized: np.ndarray

    @property
    def gains_db(self) -> np.ndarray:
        return denormalize(self.normalized)


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]
    masks: list[np.ndarray | None]
    output: np.ndarray
    step: int


def init_model(input_mode: str = EMBEDDING, seed: int = 0, *, vocab: Sequence[str] = (),
               input_dim: int = EMBEDDING_DIM, layer_units: Sequence[int] = LAYER_UNITS) -> MlpModel:
    """He-uniform hidden layers, Glorot-uniform sigmoid output, zero biases."""
    if input_mode == ONE_HOT:
        vocab = tuple(w.lower() for w in vocab)
        if not vocab:
            raise ValueError("one-hot mode needs a non-empty vocabulary")
        if len(set(vocab)) != len(vocab):
            raise ValueError("vocabulary contains duplicates")
        input_dim = len(vocab)
    elif input_mode == EMBEDDING:
        vocab = ()
    else:
        raise ValueError(f"unknown input mode {input_mode!r}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = input_dim
    last = len(layer_units) - 1
    for i, units in enumerate(layer_units):
        if i < last:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + units))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, units)))
        biases.append(np.zeros(units))
        fan_in = units
    return MlpModel(input_mode, input_dim, weights, biases, tuple(vocab))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(model: MlpModel, x, training: bool = False, rng: np.random.Generator | None = None,
            dropout_rate: float = 0.1):
    """Run the network on a batch (or a single input vector).

    Returns ``(output, cache)``; ``cache`` is ``None`` unless ``training``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"input has shape {x.shape}, model expects width {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite network input")
    use_dropout = training and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("training with dropout needs an rng")
    keep = 1.0 - dropout_rate

    pre, post, masks = [], [], []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i < last:
            a = np.maximum(z, 0.0)
            mask = None
            if use_dropout:
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            masks.append(mask)
        else:
            a = _sigmoid(z)
        pre.append(z)
        post.append(a)

    out = a[0] if single else a
    if not training:
        return out, None
    return out, ForwardCache(x, pre, post, masks, a, model.step)


def mae_loss(prediction, target) -> float:
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError(f"shape mismatch: {prediction.shape} vs {target.shape}")
    return float(np.mean(np.abs(prediction - target)))


def backward(model: MlpModel, cache: ForwardCache | None, target) -> list[np.ndarray]:
    """Gradients of the batch MAE with respect to ``model.params()`` order.

    The subgradient of |.| at zero is taken as zero.
    """
    if cache is None:
        raise ModelStateError("backward needs the cache of a training-mode forward pass")
    if cache.step != model.step:
        raise ModelStateError("forward cache is stale: parameters changed since the forward pass")
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[None, :]
    out = cache.output
    if target.shape != out.shape:
        raise ValueError(f"target shape {target.shape} does not match output {out.shape}")

    delta = np.sign(out - target) / out.size * out * (1.0 - out)
    n_layers = len(model.weights)
    grads: list[np.ndarray] = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        a_prev = cache.inputs if i == 0 else cache.post[i - 1]
        grads[2 * i] = a_prev.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i == 0:
            break
        delta = delta @ model.weights[i].T
        mask = cache.masks[i - 1]
        if mask is not None:
            delta = delta * mask
        delta = delta * (cache.pre[i - 1] > 0.0)
    return grads


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def update(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def encode_inputs(model: MlpModel, descriptors: Sequence[str],
                  table: EmbeddingTable | None = None) -> np.ndarray:
    """Network input rows for ``descriptors``.

    One-hot mode maps unknown words to the all-zero row. Embedding mode raises
    :class:`UnresolvableDescriptorError` for words the table cannot embed.
    """
    if model.input_mode == ONE_HOT:
        x = np.zeros((len(descriptors), model.input_dim))
        for row, word in enumerate(descriptors):
            j = model.vocab_index(word)
            if j >= 0:
                x[row, j] = 1.0
        return x
    if table is None:
        raise ValueError("embedding mode needs an embedding table")
    if table.dimension != model.input_dim:
        raise ValueError(f"table dimension {table.dimension} != model input width {model.input_dim}")
    rows = []
    for word in descriptors:
        vec = embed_descriptor(table, word)
        if vec is None:
            raise UnresolvableDescriptorError(f"descriptor {word!r} is not covered by table {table.name!r}")
        rows.append(vec)
    return np.array(rows, dtype=np.float64).reshape(len(descriptors), model.input_dim)


def train(model: MlpModel, inputs, targets, config: TrainConfig = TrainConfig()):
    """Mini-batch training; returns ``(trained_copy, per_epoch_loss)``.

    The input model is left untouched. Shuffling and dropout masks come from a
    single generator seeded with ``config.seed``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets must be 2-d with matching row counts")
    if x.shape[0] == 0:
        raise ValueError("training set is empty")
    if y.shape[1] != model.weights[-1].shape[1]:
        raise ValueError("target width does not match the output layer")

    model = copy.deepcopy(model)
    rng = np.random.default_rng(config.seed)
    params = model.params()
    if config.optimizer == "adam":
        opt = _Adam(params, config.learning_rate, config.beta1, config.beta2, config.epsilon)
    else:
        opt = _Sgd(config.learning_rate)

    n = x.shape[0]
    trace: list[float] = []
    best = np.inf
    since_best = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out, cache = forward(model, x[idx], training=True, rng=rng,
                                 dropout_rate=config.dropout_rate)
            total += mae_loss(out, y[idx]) * idx.size
            grads = backward(model, cache, y[idx])
            opt.update(params, grads)
            model.step += 1
        loss = total / n
        if not np.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in params):
            raise DivergenceError(epoch, loss)
        trace.append(loss)
        if loss < best:
            best = loss
            since_best = 0
        else:
            since_best += 1
            if config.early_stop_patience is not None and since_best >= config.early_stop_patience:
                break
    return model, trace


def predict(model: MlpModel, descriptor: str, table: EmbeddingTable | None = None) -> Prediction:
    if not descriptor or not descriptor.strip():
        raise ValueError("descriptor must be non-empty")
    if model.input_mode == EMBEDDING and table is None:
        raise ValueError("embedding-mode prediction needs an embedding table")
    x = encode_inputs(model, [descriptor.strip()], table)
    out, _ = forward(model, x[0], training=False)
    return Prediction(out)


def predict_many(model: MlpModel, descriptors: Sequence[str],
                 table: EmbeddingTable | None = None) -> np.ndarray:
    """Normalized predictions, one row per descriptor."""
    x = encode_inputs(model, descriptors, table)
    out, _ = forward(model, x, training=False)
    return out


# -- serialization -------------------------------------------------------------

_MAGIC = b"WEQMODEL"
_VERSION = 1


def model_to_bytes(model: MlpModel) -> bytes:
    header = json.dumps({
        "input_mode": model.input_mode,
        "input_dim": model.input_dim,
        "vocab": list(model.vocab),
        "shapes": [list(w.shape) for w in model.weights],
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params())
    payload = _MAGIC + struct.pack("<II", _VERSION, len(header)) + header + body
    return payload + hashlib.sha256(payload).digest()


def model_from_bytes(blob: bytes) -> MlpModel:
    if len(blob) < len(_MAGIC) + 8 + 32 or not blob.startswith(_MAGIC):
        raise FormatError("not a wordeq model file")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise FormatError("model file checksum mismatch")
    version, hlen = struct.unpack_from("<II", payload, len(_MAGIC))
    if version != _VERSION:
        raise FormatError(f"unsupported model file version {version}")
    start = len(_MAGIC) + 8
    header = json.loads(payload[start:start + hlen].decode("utf-8"))
    offset = start + hlen
    weights, biases = [], []
    for fan_in, units in header["shapes"]:
        for shape in ((fan_in, units), (units,)):
            count = int(np.prod(shape))
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64)
            offset += 8 * count
            (weights if len(shape) == 2 else biases).append(arr.reshape(shape))
    if offset != len(payload):
        raise FormatError("model file has trailing bytes")
    return MlpModel(header["input_mode"], header["input_dim"], weights, biases, tuple(header["vocab"]))


def save_model(model: MlpModel, path) -> None:
    atomic_write_bytes(path, model_to_bytes(model))


def load_model(path) -> MlpModel:
    return model_from_bytes(Path(path).read_bytes())
