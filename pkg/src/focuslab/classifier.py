"""Multi-label clip classifier with hand-written gradients.

The default model is linear (``z = W x + b``); an optional hidden ReLU layer
turns it into a one-hidden-layer MLP. Scores are ``sigmoid(z)`` with the
logits clamped to ``[-LOGIT_CLAMP, LOGIT_CLAMP]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from focuslab.errors import InputError
from focuslab.serialization import dumps, sig_list

LOGIT_CLAMP = 30.0


@dataclass
class Model:
    params: dict[str, np.ndarray]
    feature_dim: int
    num_classes: int
    hidden: int | None = None
    seed: int = 0

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "Model":
        return Model({k: v.copy() for k, v in self.params.items()},
                     self.feature_dim, self.num_classes, self.hidden, self.seed)


def init_model(feature_dim: int, num_classes: int, hidden: int | None = None, seed: int = 0) -> Model:
    """Gaussian weights with std ``1/sqrt(fan_in)``, zero biases."""
    if feature_dim < 1 or num_classes < 1 or (hidden is not None and hidden < 1):
        raise InputError("model dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    params = {}
    if hidden is None:
        params["W"] = rng.standard_normal((num_classes, feature_dim)) / np.sqrt(feature_dim)
        params["b"] = np.zeros(num_classes)
    else:
        params["W1"] = rng.standard_normal((hidden, feature_dim)) / np.sqrt(feature_dim)
        params["b1"] = np.zeros(hidden)
        params["W"] = rng.standard_normal((num_classes, hidden)) / np.sqrt(hidden)
        params["b"] = np.zeros(num_classes)
    return Model(params, feature_dim, num_classes, hidden, seed)


def sigmoid(z):
    z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def _check_features(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim or x.ndim > 2:
        raise InputError(f"expected features with {model.feature_dim} entries, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("features contain non-finite values")
    return x


def _hidden(model: Model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = x @ model.params["W1"].T + model.params["b1"]
    return pre, np.maximum(pre, 0.0)


def logits(model: Model, features) -> np.ndarray:
    """Unclamped logits for one clip ``(D,)`` or a batch ``(N, D)``."""
    x = _check_features(model, features)
    if model.hidden is not None:
        _, x = _hidden(model, x)
    return x @ model.params["W"].T + model.params["b"]


def forward(model: Model, features) -> np.ndarray:
    return sigmoid(logits(model, features))


def backward(model: Model, features, grad_coeffs) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum_k c_k * z_k``.

    ``grad_coeffs`` holds ``dL/dz``; batched inputs ``(N, D)`` with ``(N, K)``
    coefficients return the gradient summed over the batch.
    """
    x = _check_features(model, features)
    c = np.asarray(grad_coeffs, dtype=np.float64)
    if c.shape[-1] != model.num_classes or c.ndim != x.ndim:
        raise InputError(f"grad_coeffs shape {c.shape} does not match {model.num_classes} classes")
    if not np.all(np.isfinite(c)):
        raise InputError("grad_coeffs contain non-finite values")
    x2, c2 = np.atleast_2d(x), np.atleast_2d(c)
    if x2.shape[0] != c2.shape[0]:
        raise InputError("batch sizes of features and grad_coeffs differ")

    if model.hidden is None:
        return {"W": c2.T @ x2, "b": c2.sum(axis=0)}
    pre, h = _hidden(model, x2)
    dh = (c2 @ model.params["W"]) * (pre > 0)
    return {
        "W1": dh.T @ x2,
        "b1": dh.sum(axis=0),
        "W": c2.T @ h,
        "b": c2.sum(axis=0),
    }


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def grad_check(model: Model, features, loss: LossFn, h: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss`` maps logits to ``(value, dvalue/dlogits)``; it must not depend on
    anything but the logits it receives.
    """
    x = np.asarray(features, dtype=np.float64)
    _, coeffs = loss(logits(model, x))
    analytic = backward(model, x, coeffs)

    worst = 0.0
    probe = model.copy()
    for name, param in probe.params.items():
        flat = param.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss(logits(probe, x))
            flat[i] = orig - h
            down, _ = loss(logits(probe, x))
            flat[i] = orig
            f = (up - down) / (2 * h)
            a = a_flat[i]
            worst = max(worst, abs(a - f) / max(1e-8, abs(a) + abs(f)))
    return worst


def save_model(model: Model, path: str | Path) -> None:
    record = {
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "seed": model.seed,
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "params": {k: sig_list(v) for k, v in model.params.items()},
    }
    Path(path).write_text(dumps(record) + "\n")


def load_model(path: str | Path) -> Model:
    try:
        record = json.loads(Path(path).read_text())
        params = {
            k: np.asarray(v, dtype=np.float64).reshape(record["shapes"][k])
            for k, v in record["params"].items()
        }
        return Model(params, record["feature_dim"], record["num_classes"],
                     record["hidden"], record["seed"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot load checkpoint {path}: {exc}") from exc
