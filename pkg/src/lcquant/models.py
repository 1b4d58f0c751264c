"""Pluggable loss models: closed-form linear regression and a dense MLP.

A model owns its training (and optional test) data and exposes three things
the compression driver needs: loss evaluation, analytic gradients, and the
penalized learning step

    min_w  L(w) + (mu/2) ||w_q - target||^2

where w_q are the quantizable parameters (weight matrices only -- biases are
never quantized, carry no multipliers, and the penalty never touches them).

Parameter layout conventions: data is row-major (X has shape (N, d_in)),
layer l has weight matrix W_l of shape (n_out, n_in) and bias b_l of length
n_out, the flat *weight* vector concatenates W_l.ravel() over layers, and
the flat *parameter* vector interleaves W_l.ravel(), b_l per layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .lc import clipped_lr

__all__ = ["SgdConfig", "LinearRegressionModel", "MlpModel"]


@dataclass
class SgdConfig:
    """Hyperparameters for one SGD-based learning step.

    The base learning-rate schedule is eta_t = lr0 * lr_decay**t with t a
    global epoch index; the driver clips it to 1/mu when a penalty is
    active.  ``epochs`` counts SGD epochs per learning step.
    """

    lr0: float = 0.1
    lr_decay: float = 0.99
    momentum: float = 0.95
    momentum_type: str = "nesterov"  # or "classical"
    batch_size: int = 128
    epochs: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0 or self.lr_decay <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.momentum_type not in ("classical", "nesterov"):
            raise ValueError(f"unknown momentum type: {self.momentum_type!r}")

    def rate(self, t: int) -> float:
        """Base (unclipped) learning rate for global epoch index t."""
        return self.lr0 * self.lr_decay**t


class _LayeredModel:
    """Shared parameter plumbing for models built from (W, b) layers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def n_biases(self) -> int:
        return sum(b.size for b in self.biases)

    def layer_slices(self) -> list[slice]:
        """Per-layer slices into the flat quantizable-weight vector."""
        slices, start = [], 0
        for w in self.weights:
            slices.append(slice(start, start + w.size))
            start += w.size
        return slices

    def weight_vector(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def set_weight_vector(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        if v.size != self.n_weights:
            raise ValueError("weight vector length mismatch")
        for w, s in zip(self.weights, self.layer_slices()):
            w[...] = v[s].reshape(w.shape)

    def param_vector(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_param_vector(self, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=float)
        start = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = v[start : start + w.size].reshape(w.shape)
            start += w.size
            b[...] = v[start : start + b.size]
            start += b.size
        if start != v.size:
            raise ValueError("parameter vector length mismatch")

    def _split_target(self, target: np.ndarray) -> list[np.ndarray]:
        """Reshape a flat quantizable-weight target into per-layer matrices."""
        target = np.asarray(target, dtype=float)
        if target.size != self.n_weights:
            raise ValueError("target length must equal the weight count")
        return [target[s].reshape(w.shape) for w, s in zip(self.weights, self.layer_slices())]


# ---------------------------------------------------------------------------
# Closed-form linear regression
# ---------------------------------------------------------------------------

class LinearRegressionModel(_LayeredModel):
    """Least-squares linear map y ~ W x + b with an exact learning step.

    loss = (1/N) sum_n ||y_n - W x_n - b||^2.  The penalized learning step
    solves the regularized normal equations exactly (bias unregularized,
    eliminated by centering); the data Gram matrices are precomputed once.
    """

    task = "regression"

    def __init__(self, X, Y, X_test=None, Y_test=None):
        self.X = np.asarray(X, dtype=float)
        self.Y = np.asarray(Y, dtype=float)
        if self.X.ndim != 2 or self.Y.ndim != 2 or len(self.X) != len(self.Y):
            raise ValueError("X and Y must be 2-D with matching row counts")
        self.X_test = None if X_test is None else np.asarray(X_test, dtype=float)
        self.Y_test = None if Y_test is None else np.asarray(Y_test, dtype=float)
        d_in, d_out = self.X.shape[1], self.Y.shape[1]
        self.weights = [np.zeros((d_out, d_in))]
        self.biases = [np.zeros(d_out)]
        n = len(self.X)
        self._x_mean = self.X.mean(axis=0)
        self._y_mean = self.Y.mean(axis=0)
        xc = self.X - self._x_mean
        yc = self.Y - self._y_mean
        self._gram = (2.0 / n) * (xc.T @ xc)  # (d_in, d_in)
        self._cross = (2.0 / n) * (xc.T @ yc)  # (d_in, d_out)

    def predict(self, X) -> np.ndarray:
        return X @ self.weights[0].T + self.biases[0]

    def loss_on(self, X, Y) -> float:
        r = Y - self.predict(X)
        return float(np.mean(np.sum(r * r, axis=1)))

    def loss_train(self) -> float:
        return self.loss_on(self.X, self.Y)

    def loss_test(self):
        if self.X_test is None:
            return None
        return self.loss_on(self.X_test, self.Y_test)

    def error_train(self):
        return None

    def error_test(self):
        return None

    def gradient(self, X=None, Y=None) -> np.ndarray:
        """Analytic gradient of the (mini)batch loss over all parameters."""
        X = self.X if X is None else np.asarray(X, dtype=float)
        Y = self.Y if Y is None else np.asarray(Y, dtype=float)
        r = self.predict(X) - Y
        n = len(X)
        g_w = (2.0 / n) * (r.T @ X)
        g_b = (2.0 / n) * r.sum(axis=0)
        return np.concatenate([g_w.ravel(), g_b])

    def l_step(self, target=None, mu=0.0, cfg=None, rng=None, epoch_offset=0):
        """Exact minimizer of loss + (mu/2)||W - target||_F^2 (bias free).

        With mu = 0 this is ordinary least squares.  Raises NumericalError
        on a singular system (degenerate data at mu = 0).
        """
        d_in = self.X.shape[1]
        a = self._gram + mu * np.eye(d_in)
        rhs = self._cross.copy()
        if mu != 0.0:
            if target is None:
                raise ValueError("a penalty target is required when mu > 0")
            rhs += mu * self._split_target(target)[0].T
        try:
            wt = scipy.linalg.solve(a, rhs, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(f"normal equations are singular: {exc}") from exc
        if not np.all(np.isfinite(wt)):
            raise NumericalError("normal equations produced non-finite weights")
        self.weights[0][...] = wt.T
        self.biases[0][...] = self._y_mean - self.weights[0] @ self._x_mean
        return {"epochs": 0, "loss": self.loss_train()}

    def train_reference(self, cfg=None, rng=None):
        return self.l_step(None, 0.0)


# ---------------------------------------------------------------------------
# Dense feedforward classifier
# ---------------------------------------------------------------------------

def _relu(z):
    return np.maximum(z, 0.0)


class MlpModel(_LayeredModel):
    """Fully connected classifier with softmax output and cross-entropy loss.

    ``layer_sizes`` is [d_in, h_1, ..., h_L, n_classes]; hidden activations
    are tanh or relu.  Initial weights are uniform in
    +-sqrt(6/(fan_in+fan_out)), biases zero.
    """

    task = "mlp_classify"

    def __init__(self, layer_sizes, X, y, X_test=None, y_test=None,
                 activation="tanh", seed=0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation: {activation!r}")
        self.activation = activation
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        self.X_test = None if X_test is None else np.asarray(X_test, dtype=float)
        self.y_test = None if y_test is None else np.asarray(y_test, dtype=np.int64)
        if self.X.shape[1] != layer_sizes[0]:
            raise ValueError("input dimension does not match the data")
        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(6.0 / (n_in + n_out))
            self.weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else _relu(z)

    def _act_grad(self, z, a):
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0).astype(float)

    def _forward(self, X):
        """Returns (pre-activations, activations); activations[-1] are probs."""
        zs, acts = [], [X]
        a = X
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            zs.append(z)
            if i < len(self.weights) - 1:
                a = self._act(z)
            else:
                z_shift = z - z.max(axis=1, keepdims=True)
                e = np.exp(z_shift)
                a = e / e.sum(axis=1, keepdims=True)
            acts.append(a)
        return zs, acts

    def predict_proba(self, X) -> np.ndarray:
        return self._forward(np.asarray(X, dtype=float))[1][-1]

    def loss_on(self, X, y) -> float:
        p = self.predict_proba(X)
        # Average cross-entropy; log(0) legitimately reports -inf -> inf loss.
        with np.errstate(divide="ignore"):
            logp = np.log(p[np.arange(len(y)), y])
        return float(-np.mean(logp))

    def error_on(self, X, y) -> float:
        pred = np.argmax(self.predict_proba(X), axis=1)
        return float(np.mean(pred != y))

    def loss_train(self) -> float:
        return self.loss_on(self.X, self.y)

    def loss_test(self):
        if self.X_test is None:
            return None
        return self.loss_on(self.X_test, self.y_test)

    def error_train(self) -> float:
        return self.error_on(self.X, self.y)

    def error_test(self):
        if self.X_test is None:
            return None
        return self.error_on(self.X_test, self.y_test)

    def _backprop(self, X, y):
        """Per-layer gradients of the minibatch cross-entropy."""
        n = len(X)
        zs, acts = self._forward(X)
        delta = acts[-1].copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = delta.T @ acts[layer]
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer]) * self._act_grad(
                    zs[layer - 1], acts[layer]
                )
        return grads_w, grads_b

    def gradient(self, X=None, y=None) -> np.ndarray:
        """Analytic gradient of the (mini)batch loss over all parameters."""
        X = self.X if X is None else np.asarray(X, dtype=float)
        y = self.y if y is None else np.asarray(y, dtype=np.int64)
        grads_w, grads_b = self._backprop(X, y)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def penalized_loss(self, target=None, mu=0.0) -> float:
        loss = self.loss_train()
        if mu > 0.0 and target is not None:
            d = self.weight_vector() - np.asarray(target, dtype=float)
            loss += 0.5 * mu * float(d @ d)
        return loss

    def l_step(self, target=None, mu=0.0, cfg=None, rng=None, epoch_offset=0):
        """Minibatch SGD with momentum on the penalized objective.

        The learning rate for global epoch t is min(cfg.rate(t), 1/mu)
        when mu > 0.  Raises NumericalError if the run diverges to a
        non-finite objective.
        """
        cfg = cfg or SgdConfig()
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
        targets = None if target is None else self._split_target(target)
        if mu > 0.0 and targets is None:
            raise ValueError("a penalty target is required when mu > 0")
        n = len(self.X)
        vel_w = [np.zeros_like(w) for w in self.weights]
        vel_b = [np.zeros_like(b) for b in self.biases]
        nesterov = cfg.momentum_type == "nesterov"
        for epoch in range(cfg.epochs):
            t = epoch_offset + epoch
            lr = clipped_lr(t, cfg.rate, mu) if mu > 0.0 else cfg.rate(t)
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                if nesterov:
                    # Evaluate the gradient at the lookahead point.
                    for w, v in zip(self.weights, vel_w):
                        w += cfg.momentum * v
                    for b, v in zip(self.biases, vel_b):
                        b += cfg.momentum * v
                grads_w, grads_b = self._backprop(self.X[batch], self.y[batch])
                if mu > 0.0:
                    for gw, w, t in zip(grads_w, self.weights, targets):
                        gw += mu * (w - t)
                if nesterov:
                    for w, v in zip(self.weights, vel_w):
                        w -= cfg.momentum * v
                    for b, v in zip(self.biases, vel_b):
                        b -= cfg.momentum * v
                for w, v, g in zip(self.weights, vel_w, grads_w):
                    v *= cfg.momentum
                    v -= lr * g
                    w += v
                for b, v, g in zip(self.biases, vel_b, grads_b):
                    v *= cfg.momentum
                    v -= lr * g
                    b += v
        final = self.penalized_loss(target, mu)
        if not np.isfinite(final):
            raise NumericalError("SGD diverged: non-finite penalized objective")
        return {"epochs": cfg.epochs, "loss": final}

    def train_reference(self, cfg=None, rng=None):
        """Train the unpenalized net with the same SGD machinery (mu = 0)."""
        return self.l_step(None, 0.0, cfg=cfg, rng=rng)
