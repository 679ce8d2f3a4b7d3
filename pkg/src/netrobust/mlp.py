"""Hand-rolled fully connected regressor for performance-efficiency prediction.

Forward/backward passes are explicit numpy; training is shuffled minibatch
SGD with momentum on mean squared error.  A finite-difference gradient
check serves as the correctness oracle for the backward pass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAYER_DIMS = (8, 128, 256, 128, 1)
MODEL_FORMAT_VERSION = 1


class MlpError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the last stable model snapshot."""

    def __init__(self, message: str, snapshot: "MlpModel"):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]      # weights[i]: (dims[i], dims[i+1])
    biases: list[np.ndarray]       # biases[i]: (dims[i+1],)
    train_meta: dict = field(default_factory=dict)

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            train_meta=dict(self.train_meta),
        )


def init_model(layer_dims: tuple[int, ...] = DEFAULT_LAYER_DIMS, seed: int = 0) -> MlpModel:
    """He-style uniform init, U(+-sqrt(6 / fan_in)) per layer."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / d_in)
        weights.append(rng.uniform(-bound, bound, (d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpModel(layer_dims=tuple(layer_dims), weights=weights, biases=biases,
                    train_meta={"seed": seed, "epochs_seen": 0, "final_loss": None})


def _forward_cached(m: MlpModel, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns (output (n,), post-activation values per layer incl. input)."""
    acts = [X]
    h = X
    last = len(m.weights) - 1
    for i, (W, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ W + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return h[:, 0], acts


def forward(m: MlpModel, x: np.ndarray) -> float | np.ndarray:
    """Predict PE for one 8-vector or a batch of rows.

    Inputs may leave [0, 1] (perturbed states are fed unclamped) but must
    be finite.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != m.layer_dims[0]:
        raise MlpError(f"input dim {X.shape[1]} != {m.layer_dims[0]}")
    if not np.all(np.isfinite(X)):
        raise MlpError("non-finite input")
    out, _ = _forward_cached(m, X)
    return float(out[0]) if single else out


def _backward(m: MlpModel, X: np.ndarray, y: np.ndarray
              ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE loss and parameter gradients for one batch.

    The rectifier subgradient at 0 is taken as 0 (strictly positive mask),
    keeping gradients deterministic.
    """
    out, acts = _forward_cached(m, X)
    n = X.shape[0]
    resid = out - y
    loss = float(np.mean(resid**2))
    grad = (2.0 / n) * resid[:, None]          # d loss / d output, (n, 1)
    gW = [np.empty(0)] * len(m.weights)
    gb = [np.empty(0)] * len(m.biases)
    for i in reversed(range(len(m.weights))):
        gW[i] = acts[i].T @ grad
        gb[i] = grad.sum(axis=0)
        if i > 0:
            grad = (grad @ m.weights[i].T) * (acts[i] > 0.0)
    return loss, gW, gb


def train(m: MlpModel, X: np.ndarray, y: np.ndarray, epochs: int = 50,
          lr: float = 1e-3, batch_size: int = 64, seed: int = 0,
          momentum: float = 0.9) -> MlpModel:
    """Shuffled minibatch SGD; deterministic given the seed.

    Returns a new model (the input is untouched) with the per-epoch loss
    trajectory in train_meta["loss_curve"].  Raises TrainingDiverged with
    the last end-of-epoch snapshot attached if the loss goes non-finite.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.size == 0:
        raise MlpError("empty training data")
    model = m.copy()
    rng = np.random.default_rng(seed)
    vel_W = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    curve = list(model.train_meta.get("loss_curve", []))
    stable = model.copy()
    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, gW, gb = _backward(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", snapshot=stable)
            for i in range(len(model.weights)):
                vel_W[i] = momentum * vel_W[i] - lr * gW[i]
                vel_b[i] = momentum * vel_b[i] - lr * gb[i]
                model.weights[i] += vel_W[i]
                model.biases[i] += vel_b[i]
            epoch_losses.append(loss)
        curve.append(float(np.mean(epoch_losses)))
        stable = model.copy()
    model.train_meta["epochs_seen"] = model.train_meta.get("epochs_seen", 0) + epochs
    model.train_meta["final_loss"] = curve[-1] if curve else None
    model.train_meta["loss_curve"] = curve
    model.train_meta["seed"] = seed
    return model


def _pack(m: MlpModel) -> np.ndarray:
    return np.concatenate([w.ravel() for w in m.weights] + [b.ravel() for b in m.biases])


def _unpack_into(m: MlpModel, theta: np.ndarray) -> None:
    pos = 0
    for w in m.weights:
        w[...] = theta[pos:pos + w.size].reshape(w.shape)
        pos += w.size
    for b in m.biases:
        b[...] = theta[pos:pos + b.size]
        pos += b.size


def gradient_check(m: MlpModel, x: np.ndarray, target: float,
                   h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference
    gradients of the squared error at (x, target), over all parameters.

    Inputs sitting near a rectifier kink are nudged off it first so the
    finite difference does not straddle the nondifferentiable point.
    """
    x = np.asarray(x, dtype=float).copy()
    probe = m.copy()
    # Nudge the input until every hidden pre-activation clears the kink.
    for attempt in range(50):
        _, acts = _forward_cached(probe, x[None, :])
        near_kink = any(np.any(np.abs(a) < 1e3 * h) for a in acts[1:-1])
        if not near_kink:
            break
        x = x + 10.0 * h * (1.0 + attempt)

    X = x[None, :]
    y = np.array([target])
    _, gW, gb = _backward(probe, X, y)
    analytic = np.concatenate([g.ravel() for g in gW] + [g.ravel() for g in gb])

    theta = _pack(probe)
    numeric = np.empty_like(theta)
    work = probe.copy()
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        _unpack_into(work, theta)
        lp, _, _ = _backward(work, X, y)
        theta[i] = orig - h
        _unpack_into(work, theta)
        lm, _, _ = _backward(work, X, y)
        theta[i] = orig
        numeric[i] = (lp - lm) / (2.0 * h)
    _unpack_into(work, theta)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def spectral_norm_bound(m: MlpModel) -> float:
    """Product of layer spectral norms; a Lipschitz bound on forward()."""
    bound = 1.0
    for w in m.weights:
        bound *= float(np.linalg.norm(w, ord=2))
    return bound


def save_model(m: MlpModel, path: str) -> None:
    arrays = {"format_version": np.array([MODEL_FORMAT_VERSION]),
              "layer_dims": np.array(m.layer_dims),
              "train_meta": np.frombuffer(
                  json.dumps(m.train_meta).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_model(path: str) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"][0])
        if version != MODEL_FORMAT_VERSION:
            raise MlpError(f"model format version {version} != {MODEL_FORMAT_VERSION}")
        dims = tuple(int(d) for d in data["layer_dims"])
        weights = [data[f"W{i}"].copy() for i in range(len(dims) - 1)]
        biases = [data[f"b{i}"].copy() for i in range(len(dims) - 1)]
        meta = json.loads(bytes(data["train_meta"]).decode())
    return MlpModel(layer_dims=dims, weights=weights, biases=biases, train_meta=meta)
