"""Two-layer ReLU MLP with a softmax output, analytic gradients and Adam.

The network computes ``F = softmax(relu(X W1 + b1) W2 + b2)`` row-wise. Every
loss in this package has the form ``-sum_{ik} c_ik log F_ik`` for a
nonnegative coefficient matrix ``c`` supplied by the caller, so
:func:`backward` only needs ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax

__all__ = [
    "MLPConfig",
    "PredictorState",
    "ForwardCache",
    "Gradients",
    "init_params",
    "forward",
    "forward_cached",
    "backward",
    "adam_step",
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class MLPConfig:
    in_dim: int
    out_dim: int
    hidden: int = 64
    dropout: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class PredictorState:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    adam_m: dict
    adam_v: dict
    step: int = 0
    dropout: float = 0.0

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "PredictorState":
        return PredictorState(
            *(getattr(self, name).copy() for name in PARAM_NAMES),
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
            step=self.step,
            dropout=self.dropout,
        )


class Gradients(NamedTuple):
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


class ForwardCache(NamedTuple):
    F: np.ndarray
    log_F: np.ndarray
    X_in: np.ndarray | sp.csr_matrix  # input after dropout
    hidden_pre: np.ndarray
    hidden_out: np.ndarray  # after relu and dropout
    hidden_mask: np.ndarray | None


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(cfg: MLPConfig) -> PredictorState:
    """Glorot-uniform weights, zero biases, zeroed Adam moments."""
    rng = np.random.default_rng(cfg.init_seed)
    W1 = _glorot(rng, cfg.in_dim, cfg.hidden)
    W2 = _glorot(rng, cfg.hidden, cfg.out_dim)
    b1 = np.zeros(cfg.hidden)
    b2 = np.zeros(cfg.out_dim)
    params = dict(W1=W1, b1=b1, W2=W2, b2=b2)
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    return PredictorState(
        **params,
        adam_m=zeros,
        adam_v={k: v.copy() for k, v in zeros.items()},
        dropout=cfg.dropout,
    )


def _dropout_input(X, rate: float, rng: np.random.Generator):
    keep = 1.0 - rate
    if sp.issparse(X):
        mask = rng.random(X.nnz) < keep
        out = X.copy()
        out.data = out.data * mask / keep
        return out
    return X * ((rng.random(X.shape) < keep) / keep)


def forward_cached(state: PredictorState, X, mode: str = "eval", dropout_seed: int = 0) -> ForwardCache:
    """Forward pass keeping the intermediates :func:`backward` needs."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if X.shape[1] != state.W1.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns, predictor expects {state.W1.shape[0]}")
    data = X.data if sp.issparse(X) else X
    if not np.all(np.isfinite(data)):
        raise ValueError("X contains non-finite values")

    drop = mode == "train" and state.dropout > 0.0
    rng = np.random.default_rng(dropout_seed) if drop else None
    X_in = _dropout_input(X, state.dropout, rng) if drop else X
    pre = X_in @ state.W1 + state.b1
    hidden = np.maximum(pre, 0.0)
    mask = None
    if drop:
        keep = 1.0 - state.dropout
        mask = (rng.random(hidden.shape) < keep) / keep
        hidden = hidden * mask
    logits = hidden @ state.W2 + state.b2
    log_F = log_softmax(logits, axis=1)
    return ForwardCache(np.exp(log_F), log_F, X_in, pre, hidden, mask)


def forward(state: PredictorState, X, mode: str = "eval", dropout_seed: int = 0) -> np.ndarray:
    """Row-wise class probabilities ``F`` of shape ``(n, C)``.

    In ``train`` mode inverted dropout is applied to the input and to the
    hidden activations, with masks drawn from ``dropout_seed``.
    """
    return forward_cached(state, X, mode, dropout_seed).F


def backward(state: PredictorState, X, coef: np.ndarray, cache: ForwardCache | None = None) -> Gradients:
    """Gradients of ``-sum(coef * log F)`` w.r.t. all four parameter tensors.

    ``coef`` is treated as a constant. Pass the ``cache`` of the forward pass
    that produced ``F`` to replay its dropout masks; without one an eval-mode
    forward pass is recomputed.
    """
    if cache is None:
        cache = forward_cached(state, X, "eval")
    coef = np.asarray(coef, dtype=np.float64)
    if coef.shape != cache.F.shape:
        raise ValueError(f"coefficient shape {coef.shape} != output shape {cache.F.shape}")
    # d/dz of -sum_k c_k log softmax(z)_k = F * sum_k c_k - c
    d_logits = cache.F * coef.sum(axis=1, keepdims=True) - coef
    gW2 = cache.hidden_out.T @ d_logits
    gb2 = d_logits.sum(axis=0)
    d_hidden = d_logits @ state.W2.T
    if cache.hidden_mask is not None:
        d_hidden = d_hidden * cache.hidden_mask
    d_pre = d_hidden * (cache.hidden_pre > 0.0)
    gW1 = np.asarray(cache.X_in.T @ d_pre)
    gb1 = d_pre.sum(axis=0)
    return Gradients(gW1, gb1, gW2, gb2)


def adam_step(state: PredictorState, grads: Gradients, lr: float = 0.1, weight_decay_w1: float = 0.0) -> PredictorState:
    """One Adam update; returns a new state and leaves ``state`` untouched.

    The penalty ``weight_decay_w1 * ||W1||^2`` enters as ``2 * wd * W1`` in the
    gradient of ``W1``.

    Raises
    ------
    FloatingPointError
        If any gradient is non-finite.
    """
    grads = grads._asdict()
    for name, g in grads.items():
        if g.shape != getattr(state, name).shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    if weight_decay_w1:
        grads["W1"] = grads["W1"] + 2.0 * weight_decay_w1 * state.W1

    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    new_params, new_m, new_v = {}, {}, {}
    with np.errstate(over="ignore", invalid="ignore"):
        for name in PARAM_NAMES:
            g = grads[name]
            m = ADAM_BETA1 * state.adam_m[name] + (1.0 - ADAM_BETA1) * g
            v = ADAM_BETA2 * state.adam_v[name] + (1.0 - ADAM_BETA2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            new_params[name] = getattr(state, name) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if not np.all(np.isfinite(new_params[name])):
                raise FloatingPointError(f"update of {name} overflowed")
            new_m[name], new_v[name] = m, v
    return replace(state, **new_params, adam_m=new_m, adam_v=new_v, step=t)
