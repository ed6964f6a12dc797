"""Two-hidden-layer ReLU MLP with sigmoid output, exact backprop and Adam."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

CHECKPOINT_FORMAT = "fairmatch-checkpoint"
CHECKPOINT_VERSION = 1
PROB_CLAMP = 1e-7

__all__ = [
    "ModelParams",
    "AdamState",
    "init_params",
    "forward",
    "backward",
    "cross_entropy",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]


def _design(X, s, include_sensitive):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if not include_sensitive:
        return X
    s_col = np.broadcast_to(np.asarray(s, dtype=float).reshape(-1), (len(X),))
    return np.column_stack([X, s_col])


@dataclass
class ModelParams:
    """Weights ``W`` of shape ``(fan_in, fan_out)`` and biases per layer."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    include_sensitive: bool = True

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0] - int(self.include_sensitive)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.include_sensitive)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def with_flat(self, theta) -> "ModelParams":
        out = self.copy()
        pos = 0
        for arr in [p for pair in zip(out.weights, out.biases) for p in pair]:
            arr[...] = np.asarray(theta[pos:pos + arr.size]).reshape(arr.shape)
            pos += arr.size
        return out

    def __call__(self, X, s):
        return forward(self, X, s)


def init_params(n_features: int, include_sensitive: bool = True, n_hidden: int = 2, width=None, seed=None) -> ModelParams:
    """He-style uniform init ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases.

    Hidden width defaults to the network input dimension.
    """
    rng = np.random.default_rng(seed)
    d_in = n_features + int(include_sensitive)
    width = d_in if width is None else int(width)
    sizes = [d_in] + [width] * n_hidden + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, include_sensitive)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_cache(params: ModelParams, X, s):
    """Forward pass keeping pre-activations; returns ``(scores, cache)``."""
    a = _design(X, s, params.include_sensitive)
    if a.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input has {a.shape[1]} columns, model expects {params.weights[0].shape[0]}")
    acts = [a]
    pre = []
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W + b
        pre.append(z)
        a = _sigmoid(z) if k == last else np.maximum(z, 0.0)
        acts.append(a)
    return a[:, 0], (acts, pre)


def forward(params: ModelParams, X, s) -> np.ndarray:
    """Scores in ``[0, 1]`` for rows of ``X`` with sensitive value(s) ``s``."""
    return forward_cache(params, X, s)[0]


def backward(params: ModelParams, cache, grad_scores) -> List[tuple]:
    """Gradients ``[(dW, db), ...]`` of ``sum_i grad_scores[i] * score_i``.

    ReLU'(0) is taken as 0.
    """
    acts, pre = cache
    p = acts[-1][:, 0]
    delta = (np.asarray(grad_scores, dtype=float) * p * (1.0 - p))[:, None]
    grads = []
    for k in range(len(params.weights) - 1, -1, -1):
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ params.weights[k].T) * (pre[k - 1] > 0)
    return grads[::-1]


def cross_entropy(scores, labels):
    """Per-row binary cross-entropy and its derivative w.r.t. the score.

    Scores are clamped to ``[1e-7, 1 - 1e-7]``; the derivative is evaluated
    at the clamped value.
    """
    p = np.clip(np.asarray(scores, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(labels, dtype=float)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


@dataclass
class AdamState:
    """First/second moments per parameter, step count and a decaying learning rate."""

    m: list
    v: list
    lr: float = 1e-3
    decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 1e-3, decay: float = 0.95, **kw) -> "AdamState":
        shapes = [p.shape for pair in zip(params.weights, params.biases) for p in pair]
        return cls(m=[np.zeros(s) for s in shapes], v=[np.zeros(s) for s in shapes], lr=lr, decay=decay, **kw)

    def end_epoch(self) -> None:
        self.lr *= self.decay


def adam_step(params: ModelParams, grads, state: AdamState):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    state.step += 1
    t = state.step
    flat_params = [p for pair in zip(params.weights, params.biases) for p in pair]
    flat_grads = [g for pair in grads for g in pair]
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for k, (p, g) in enumerate(zip(flat_params, flat_grads)):
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        p -= state.lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_dict(params: ModelParams, meta: Optional[dict] = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "mlp",
        "include_sensitive": bool(params.include_sensitive),
        "layers": [
            {"shape": list(W.shape), "weight": W.ravel().tolist(), "bias": b.tolist()}
            for W, b in zip(params.weights, params.biases)
        ],
        "meta": meta or {},
    }


def save_checkpoint(path, params: ModelParams, meta: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(params, meta), sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Load a scoring model.

    Besides JSON files this accepts ``uniform-pair:hat`` and
    ``uniform-pair:tilde`` for the two analytic one-dimensional models.
    """
    spec = str(path)
    if spec.startswith("uniform-pair:"):
        doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": "uniform_pair",
               "variant": spec.split(":", 1)[1]}
    else:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{spec}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{spec}: unsupported checkpoint version {doc.get('version')}")
    kind = doc.get("kind")
    if kind == "uniform_pair":
        from .synthetic import uniform_pair_models

        models = uniform_pair_models()
        if doc["variant"] not in ("hat", "tilde"):
            raise ValueError(f"unknown uniform-pair variant {doc['variant']!r}")
        return models[f"f_{doc['variant']}"]
    if kind != "mlp":
        raise ValueError(f"{spec}: unknown checkpoint kind {kind!r}")
    weights, biases = [], []
    for layer in doc["layers"]:
        weights.append(np.asarray(layer["weight"], dtype=float).reshape(layer["shape"]))
        biases.append(np.asarray(layer["bias"], dtype=float))
    return ModelParams(weights, biases, bool(doc["include_sensitive"]))
