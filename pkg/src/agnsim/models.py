"""Differentiable test problems with hand-written loss and gradient.

Parameters are flat float64 numpy vectors ("param vectors"). Every model
exposes ``dim``, ``loss(params, batch)``, ``gradient(params, batch)`` and
``init_params(rng)``; classifiers also expose ``predict``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalFault


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # (size, features)
    targets: np.ndarray  # (size,)

    def __post_init__(self):
        if len(self.inputs) != len(self.targets):
            raise ConfigError(
                f"batch inputs ({len(self.inputs)}) and targets ({len(self.targets)}) differ in length"
            )

    @property
    def size(self) -> int:
        return len(self.targets)


def as_param_vector(values, dim: int | None = None) -> np.ndarray:
    """Copy ``values`` into a finite 1-D float64 vector, checking ``dim``."""
    vec = np.array(values, dtype=np.float64).reshape(-1)
    if vec.size == 0:
        raise ConfigError("parameter vector must be nonempty")
    if dim is not None and vec.size != dim:
        raise ConfigError(f"dimension mismatch: expected {dim}, got {vec.size}")
    if not np.all(np.isfinite(vec)):
        raise NumericalFault("parameter vector has non-finite entries")
    return vec


def _check(model, params: np.ndarray, batch: Batch | None) -> None:
    if params.ndim != 1 or params.shape[0] != model.dim:
        raise ConfigError(f"dimension mismatch: model dim {model.dim}, params shape {params.shape}")
    if batch is not None and batch.size == 0:
        raise ConfigError("empty batch")


def _log1pexp(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Quadratic:
    """Bowl ``0.5 (theta - opt)^T A (theta - opt)``; the batch is ignored."""

    kind = "quadratic"

    def __init__(self, matrix, optimum=None, start=None):
        A = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if A.shape[0] != A.shape[1]:
            raise ConfigError("quadratic matrix must be square")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
            raise ConfigError("quadratic matrix must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig.min() <= 0:
            raise ConfigError("quadratic matrix must be positive definite")
        self.A = A
        self.dim = A.shape[0]
        self.optimum = np.zeros(self.dim) if optimum is None else as_param_vector(optimum, self.dim)
        self.start = None if start is None else as_param_vector(start, self.dim)
        self.condition_number = float(eig.max() / eig.min())

    @classmethod
    def diagonal(cls, diag, optimum=None, start=None) -> "Quadratic":
        return cls(np.diag(np.asarray(diag, dtype=np.float64)), optimum, start)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        if self.start is not None:
            return self.start.copy()
        return rng.uniform(-1.0, 1.0, size=self.dim)

    def loss(self, params: np.ndarray, batch: Batch | None = None) -> float:
        _check(self, params, None)
        d = params - self.optimum
        return float(0.5 * d @ self.A @ d)

    def gradient(self, params: np.ndarray, batch: Batch | None = None) -> np.ndarray:
        _check(self, params, None)
        return self.A @ (params - self.optimum)


class LogisticRegression:
    """Binary logistic regression; params are ``[w_1..w_d, b]``."""

    kind = "logistic-regression"

    def __init__(self, n_features: int):
        if n_features < 1:
            raise ConfigError("logistic regression needs at least one feature")
        self.n_features = n_features
        self.dim = n_features + 1

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        r = 1.0 / np.sqrt(self.n_features)
        return rng.uniform(-r, r, size=self.dim)

    def logits(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return inputs @ params[:-1] + params[-1]

    def loss(self, params: np.ndarray, batch: Batch) -> float:
        _check(self, params, batch)
        z = self.logits(params, batch.inputs)
        y = batch.targets.astype(np.float64)
        return float(np.mean(_log1pexp(z) - y * z))

    def gradient(self, params: np.ndarray, batch: Batch) -> np.ndarray:
        _check(self, params, batch)
        z = self.logits(params, batch.inputs)
        err = (_sigmoid(z) - batch.targets) / batch.size
        grad = np.empty(self.dim)
        grad[:-1] = batch.inputs.T @ err
        grad[-1] = err.sum()
        return grad

    def predict(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return (self.logits(params, inputs) > 0).astype(np.int64)


class MLP:
    """Fully connected network trained with backpropagation.

    ``widths`` lists every layer including input and output. A single
    output unit uses a sigmoid with binary cross-entropy; wider outputs use
    softmax cross-entropy against integer labels.
    """

    kind = "mlp"
    _activations = ("sigmoid", "tanh")

    def __init__(self, widths, activation: str = "tanh"):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigError(f"invalid MLP widths {widths}")
        if activation not in self._activations:
            raise ConfigError(f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        self.shapes = list(zip(widths[:-1], widths[1:]))
        self.dim = sum(i * o + o for i, o in self.shapes)

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers = []
        pos = 0
        for fan_in, fan_out in self.shapes:
            W = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = params[pos:pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        chunks = []
        for fan_in, fan_out in self.shapes:
            r = 1.0 / np.sqrt(fan_in)
            chunks.append(rng.uniform(-r, r, size=fan_in * fan_out))
            chunks.append(rng.uniform(-r, r, size=fan_out))
        return np.concatenate(chunks)

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else _sigmoid(z)

    def _act_grad(self, a):
        # derivative expressed through the activation output
        return 1.0 - a * a if self.activation == "tanh" else a * (1.0 - a)

    def _forward(self, params, inputs):
        layers = self.unpack(params)
        acts = [inputs]
        h = inputs
        for W, b in layers[:-1]:
            h = self._act(h @ W + b)
            acts.append(h)
        W, b = layers[-1]
        return layers, acts, h @ W + b

    def _output_loss_and_delta(self, logits, targets):
        m = len(targets)
        if logits.shape[1] == 1:
            z = logits[:, 0]
            y = targets.astype(np.float64)
            loss = np.mean(_log1pexp(z) - y * z)
            delta = ((_sigmoid(z) - y) / m)[:, None]
        else:
            shifted = logits - logits.max(axis=1, keepdims=True)
            logsum = np.log(np.exp(shifted).sum(axis=1))
            idx = np.arange(m)
            loss = np.mean(logsum - shifted[idx, targets])
            probs = np.exp(shifted - logsum[:, None])
            probs[idx, targets] -= 1.0
            delta = probs / m
        return float(loss), delta

    def loss(self, params: np.ndarray, batch: Batch) -> float:
        _check(self, params, batch)
        _, _, logits = self._forward(params, batch.inputs)
        return self._output_loss_and_delta(logits, batch.targets)[0]

    def gradient(self, params: np.ndarray, batch: Batch) -> np.ndarray:
        _check(self, params, batch)
        layers, acts, logits = self._forward(params, batch.inputs)
        _, delta = self._output_loss_and_delta(logits, batch.targets)
        grads = []
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            grads.append(delta.sum(axis=0))
            grads.append((acts[li].T @ delta).reshape(-1))
            if li > 0:
                delta = (delta @ W.T) * self._act_grad(acts[li])
        grads.reverse()
        return np.concatenate(grads)

    def predict(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        _, _, logits = self._forward(params, inputs)
        if logits.shape[1] == 1:
            return (logits[:, 0] > 0).astype(np.int64)
        return np.argmax(logits, axis=1)


def loss(model, params: np.ndarray, batch: Batch) -> float:
    """Mean loss of ``model`` at ``params`` over ``batch``."""
    return model.loss(params, batch)


def gradient(model, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Mean gradient of the loss over ``batch``; same shape as ``params``."""
    return model.gradient(params, batch)
