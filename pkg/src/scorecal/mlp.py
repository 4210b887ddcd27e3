"""Tiny numpy multilayer perceptron with Adam training and MC dropout.

Two affine layers with a rectifier between them and a softmax on top,
trained by minimizing the mean squared error against one-hot targets.
Dropout, when enabled, zeroes hidden activations after the input
expansion layer with inverted scaling, at training time and at
inference time alike, so repeated stochastic forward passes ("trials")
have magnitudes comparable to deterministic ones.  Backpropagation is
written out by hand and is checked against finite differences in the
test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError

MODEL_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the loss trace up to that point."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass
class MlpConfig:
    in_dim: int = 1
    hidden_dim: int = 16
    out_dim: int = 2
    dropout_rate: float = 0.0

    def validate(self) -> None:
        if min(self.in_dim, self.hidden_dim) < 1:
            raise InvalidInputError("layer widths must be >= 1")
        if self.out_dim < 2:
            raise InvalidInputError("a classifier head needs out_dim >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidInputError("dropout_rate must lie in [0, 1)")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Mlp:
    """in_dim -> hidden_dim (relu, optional dropout) -> out_dim (softmax)."""

    def __init__(self, config: MlpConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        # He-style scaling for the rectifier layer, smaller for the head.
        self.w1 = rng.normal(0.0, np.sqrt(2.0 / config.in_dim),
                             (config.in_dim, config.hidden_dim))
        self.b1 = np.zeros(config.hidden_dim)
        self.w2 = rng.normal(0.0, np.sqrt(1.0 / config.hidden_dim),
                             (config.hidden_dim, config.out_dim))
        self.b2 = np.zeros(config.out_dim)

    def _as_input(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] != self.config.in_dim:
            raise InvalidInputError(
                f"input shape {arr.shape} does not match in_dim {self.config.in_dim}"
            )
        return arr

    def _mask(self, n: int, rng: np.random.Generator | None) -> np.ndarray | None:
        """Fresh inverted-dropout mask, or None when dropout is inactive."""
        if rng is None or self.config.dropout_rate == 0.0:
            return None
        keep = 1.0 - self.config.dropout_rate
        return (rng.random((n, self.config.hidden_dim)) < keep) / keep

    def forward(self, x, dropout_rng: np.random.Generator | None = None) -> np.ndarray:
        """Softmax scores, shape (n, out_dim).  Rows sum to 1.

        Passing ``dropout_rng`` draws a fresh dropout mask (one
        stochastic trial); omitting it gives the deterministic pass.
        """
        arr = self._as_input(x)
        scores, _ = self._forward_parts(arr, self._mask(arr.shape[0], dropout_rng))
        return scores

    def _forward_parts(self, arr: np.ndarray, mask: np.ndarray | None):
        z1 = arr @ self.w1 + self.b1
        h = np.maximum(z1, 0.0)
        hd = h if mask is None else h * mask
        scores = _softmax(hd @ self.w2 + self.b2)
        return scores, (arr, z1, hd, mask)

    def loss_and_grads(self, x, labels, mask: np.ndarray | None = None):
        """MSE loss against one-hot targets and gradients for every parameter.

        ``mask`` fixes the dropout mask so the loss is a deterministic
        function of the parameters (required both by the optimizer step
        and by finite-difference checking).
        """
        arr = self._as_input(x)
        labels = np.asarray(labels)
        n, d = arr.shape[0], self.config.out_dim
        targets = np.zeros((n, d))
        targets[np.arange(n), labels] = 1.0
        y, (arr, z1, hd, mask) = self._forward_parts(arr, mask)
        diff = y - targets
        loss = float(np.mean(diff ** 2))
        # d loss / d softmax output, then through the softmax Jacobian.
        dy = 2.0 * diff / diff.size
        dz2 = y * (dy - (dy * y).sum(axis=1, keepdims=True))
        grads = {
            "w2": hd.T @ dz2,
            "b2": dz2.sum(axis=0),
        }
        dhd = dz2 @ self.w2.T
        dh = dhd if mask is None else dhd * mask
        dz1 = dh * (z1 > 0.0)
        grads["w1"] = arr.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return loss, grads

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def trial_scores(self, x, trial_count: int, seed: int) -> np.ndarray:
        """Stack of ``trial_count`` stochastic forward passes, shape (T, n, d).

        Per-trial generators are split deterministically from ``seed``,
        so equal seeds reproduce every trial bit for bit.
        """
        if trial_count < 1:
            raise InvalidInputError("trial_count must be >= 1")
        arr = self._as_input(x)
        seeds = np.random.SeedSequence(seed).spawn(trial_count)
        out = np.empty((trial_count, arr.shape[0], self.config.out_dim))
        for t in range(trial_count):
            out[t] = self.forward(arr, dropout_rng=np.random.default_rng(seeds[t]))
        return out

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "kind": "mlp",
            "in_dim": self.config.in_dim,
            "hidden_dim": self.config.hidden_dim,
            "out_dim": self.config.out_dim,
            "dropout_rate": self.config.dropout_rate,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("version") != MODEL_VERSION or d.get("kind") != "mlp":
            raise InvalidInputError("not an mlp artifact of a supported version")
        cfg = MlpConfig(d["in_dim"], d["hidden_dim"], d["out_dim"], d["dropout_rate"])
        model = cls(cfg, seed=0)
        model.w1 = np.asarray(d["w1"], dtype=np.float64)
        model.b1 = np.asarray(d["b1"], dtype=np.float64)
        model.w2 = np.asarray(d["w2"], dtype=np.float64)
        model.b2 = np.asarray(d["b2"], dtype=np.float64)
        return model


def train_mlp(model: Mlp, x, labels, *, epochs: int = 20, batch_size: int = 256,
              learning_rate: float = 1e-3, seed: int = 0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> list[float]:
    """Adam-train the model in place; returns the per-epoch mean loss trace.

    Dropout is active during training whenever the model's
    dropout_rate is nonzero.  Non-finite loss aborts with
    TrainingDivergedError carrying the partial trace.
    """
    arr = model._as_input(x)
    labels = np.asarray(labels)
    if labels.shape != (arr.shape[0],):
        raise InvalidInputError("labels length does not match inputs")
    if epochs < 1 or batch_size < 1:
        raise InvalidInputError("epochs and batch_size must be >= 1")
    rng = np.random.default_rng(seed)
    params = model.parameters()
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    trace: list[float] = []
    n = arr.shape[0]
    use_dropout = model.config.dropout_rate > 0.0
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            xb, yb = arr[idx], labels[idx]
            mask = model._mask(xb.shape[0], rng) if use_dropout else None
            loss, grads = model.loss_and_grads(xb, yb, mask=mask)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss!r} at step {step}", trace)
            epoch_loss += loss * xb.shape[0]
            step += 1
            for k, p in params.items():
                g = grads[k]
                m[k] = beta1 * m[k] + (1.0 - beta1) * g
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g
                m_hat = m[k] / (1.0 - beta1 ** step)
                v_hat = v[k] / (1.0 - beta2 ** step)
                p -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        trace.append(epoch_loss / n)
    return trace
