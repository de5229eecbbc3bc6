"""Fully-connected error-rate classifier trained with Adam on binary cross entropy.

Hidden layers are rectified linear; the output layer is an element-wise
sigmoid, one unit per 2% error bin.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .dataset import LAYOUT_TAG, NUM_CLASSES, NUM_FEATURES, dequantize

DEFAULT_DIMS = (NUM_FEATURES, 400, 300, NUM_CLASSES)
PROB_CLAMP = 1e-7
MODEL_MAGIC = "ALSX-MLP"


class ModelError(ValueError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def bce_loss(probs, target) -> float:
    """Summed binary cross entropy against one-hot targets (mean over a batch)."""
    p = np.clip(np.asarray(probs, dtype=float), PROB_CLAMP, 1 - PROB_CLAMP)
    y = _one_hot(np.atleast_1d(target), p.shape[-1])
    p2 = np.atleast_2d(p)
    per_sample = -(y * np.log(p2) + (1 - y) * np.log(1 - p2)).sum(axis=1)
    return float(per_sample.mean())


def _one_hot(targets, k: int) -> np.ndarray:
    y = np.zeros((len(targets), k))
    y[np.arange(len(targets)), targets] = 1.0
    return y


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_exact: float
    val_within1: float


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None


def accuracy(pred, target) -> tuple[float, float]:
    """Exact-class and within-one-bin accuracy."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if len(target) == 0:
        return 0.0, 0.0
    return float(np.mean(pred == target)), float(np.mean(np.abs(pred - target) <= 1))


class Mlp:
    def __init__(self, dims=DEFAULT_DIMS, seed: int = 0, layout: str = LAYOUT_TAG):
        self.dims = tuple(int(d) for d in dims)
        self.seed = seed
        self.layout = layout
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.reset_optimizer()

    def reset_optimizer(self):
        self.m = [np.zeros_like(p) for p in self.params()]
        self.v = [np.zeros_like(p) for p in self.params()]
        self.t = 0

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params):
        self.weights = [np.array(p) for p in params[0::2]]
        self.biases = [np.array(p) for p in params[1::2]]

    # -- forward / backward ----------------------------------------------------

    def forward(self, x):
        """Class probabilities and the activations needed by :meth:`backward`."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        if a.shape[1] != self.dims[0]:
            raise ModelError(f"expected {self.dims[0]} features, got {a.shape[1]}")
        acts = [a]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pre.append(z)
            a = sigmoid(z) if i == last else np.maximum(z, 0.0)
            acts.append(a)
        probs = acts[-1]
        if np.ndim(x) == 1:
            probs = probs[0]
        return probs, (acts, pre)

    def backward(self, x, targets) -> list[np.ndarray]:
        """Gradients of the batch-summed loss, ordered like :meth:`params`."""
        targets = np.atleast_1d(targets)
        probs, (acts, pre) = self.forward(x)
        probs = np.atleast_2d(probs)
        y = _one_hot(targets, self.dims[-1])
        clipped = (probs < PROB_CLAMP) | (probs > 1 - PROB_CLAMP)
        delta = np.where(clipped, 0.0, probs - y)
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads = [acts[i].T @ delta, delta.sum(axis=0)] + grads
            if i:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return grads

    def adam_step(self, grads, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8):
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise ModelError("non-finite gradient")
        self.t += 1
        c1 = 1 - beta1 ** self.t
        c2 = 1 - beta2 ** self.t
        for p, g, m, v in zip(self.params(), grads, self.m, self.v):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    # -- training / inference --------------------------------------------------

    def fit(self, x_train, y_train, x_val=None, y_val=None, epochs: int = 30, batch_size: int = 32,
            lr: float = 1e-3, seed: int = 0, layout: str | None = None) -> History:
        """Mini-batch training; the parameters of the best validation epoch are kept."""
        if layout is not None and layout != self.layout:
            raise ModelError(f"dataset layout {layout!r} does not match model layout {self.layout!r}")
        x_train = np.asarray(x_train, dtype=float)
        y_train = np.asarray(y_train, dtype=int)
        if epochs > 0 and len(x_train) == 0:
            raise ModelError("empty training set")
        if x_val is None or len(x_val) == 0:
            x_val, y_val = x_train, y_train
        rng = np.random.default_rng(seed)
        hist = History()
        best = None
        best_key = None
        for ep in range(1, epochs + 1):
            order = rng.permutation(len(x_train))
            total = 0.0
            for s in range(0, len(order), batch_size):
                idx = order[s:s + batch_size]
                xb, yb = x_train[idx], y_train[idx]
                grads = self.backward(xb, yb)
                self.adam_step(grads, lr)
                total += bce_loss(self.forward(xb)[0], yb) * len(idx)
            exact, near = accuracy(self.predict_class(x_val), y_val)
            hist.epochs.append(EpochRecord(ep, total / len(x_train), exact, near))
            key = (exact, near)
            if best_key is None or key > best_key:
                best_key, best, hist.best_epoch = key, copy.deepcopy(self.params()), ep
        if best is not None:
            self.set_params(best)
        return hist

    def predict_class(self, x) -> np.ndarray:
        probs, _ = self.forward(x)
        probs = np.atleast_2d(probs)
        # ties go to the higher (more pessimistic) class
        return probs.shape[1] - 1 - np.argmax(probs[:, ::-1], axis=1)

    def predict_error(self, features) -> tuple[int, float]:
        cls = int(self.predict_class(features)[0])
        return cls, dequantize(cls)

    # -- serialization ---------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{MODEL_MAGIC} v1 " + " ".join(map(str, self.dims)) + f" LAYOUT={self.layout}"]
        for w, b in zip(self.weights, self.biases):
            lines.extend(f"{v:.17g}" for v in w.ravel())
            lines.extend(f"{v:.17g}" for v in b)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, expected_dims=DEFAULT_DIMS, layout: str | None = LAYOUT_TAG) -> Mlp:
        nl = text.find("\n")
        header = (text if nl < 0 else text[:nl]).split()
        if len(header) < 4 or header[0] != MODEL_MAGIC or header[1] != "v1":
            raise ModelError(f"not an {MODEL_MAGIC} v1 file (byte offset 0)")
        tag = next((t.split("=", 1)[1] for t in header if t.startswith("LAYOUT=")), None)
        try:
            dims = tuple(int(t) for t in header[2:] if not t.startswith("LAYOUT="))
        except ValueError:
            raise ModelError("malformed layer dimensions in header (byte offset 0)") from None
        if expected_dims is not None and dims != tuple(expected_dims):
            raise ModelError(f"dimension mismatch: file has {dims}, expected {tuple(expected_dims)}")
        if layout is not None and tag != layout:
            raise ModelError(f"feature layout {tag!r} does not match {layout!r}")
        model = cls(dims, layout=tag or LAYOUT_TAG)
        pos = nl + 1
        values = []
        need = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        while len(values) < need:
            if pos >= len(text):
                raise ModelError(f"truncated model file: expected {need} values, found {len(values)} "
                                 f"(byte offset {len(text)})")
            end = text.find("\n", pos)
            end = len(text) if end < 0 else end
            try:
                values.append(float(text[pos:end]))
            except ValueError:
                raise ModelError(f"malformed value {text[pos:end]!r} at byte offset {pos}") from None
            pos = end + 1
        if text[pos:].strip():
            raise ModelError(f"trailing data at byte offset {pos}")
        arr = np.array(values)
        params = []
        k = 0
        for a, b in zip(dims[:-1], dims[1:]):
            params.append(arr[k:k + a * b].reshape(a, b))
            k += a * b
            params.append(arr[k:k + b].copy())
            k += b
        model.set_params(params)
        return model

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path, expected_dims=DEFAULT_DIMS, layout: str | None = LAYOUT_TAG) -> Mlp:
        with open(path) as f:
            return cls.from_text(f.read(), expected_dims, layout)


def save_model(model: Mlp, path):
    model.save(path)


def load_model(path, expected_dims=DEFAULT_DIMS) -> Mlp:
    return Mlp.load(path, expected_dims)
