"""Personalized-PageRank propagation of node signals and labels.

Every routine runs the recurrence

    H(k) = (1 - alpha) * A_hat @ H(k-1) + alpha * H(0)

for ``K`` steps with sparse products only. The result equals ``A_bar @ H(0)``
where ``A_bar = (1-alpha)^K A_hat^K + alpha * sum_{k<K} (1-alpha)^k A_hat^k``;
:func:`closed_form_abar` builds that dense matrix for small verification
graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph_core import LabelSet

__all__ = [
    "PropagationConfig",
    "ppr_propagate",
    "ppr_adjoint",
    "label_propagate",
    "closed_form_abar",
]


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float = 0.1
    K: int = 10
    clamp_labeled: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.K < 0:
            raise ValueError(f"K must be >= 0, got {self.K}")

    @property
    def coefficients(self) -> np.ndarray:
        """Weights beta_k of A_hat^k in A_bar, k = 0..K. They sum to one."""
        k = np.arange(self.K + 1)
        beta = self.alpha * (1.0 - self.alpha) ** k
        beta[-1] = (1.0 - self.alpha) ** self.K
        return beta


def _check_dims(a_hat, h0: np.ndarray):
    n = a_hat.shape[0]
    if a_hat.shape != (n, n):
        raise ValueError(f"propagation matrix must be square, got {a_hat.shape}")
    if h0.shape[0] != n:
        raise ValueError(f"signal has {h0.shape[0]} rows, graph has {n} nodes")


def ppr_propagate(a_hat, h0: np.ndarray, cfg: PropagationConfig) -> np.ndarray:
    """Propagate a node-signal matrix ``h0`` for ``cfg.K`` PPR steps.

    No clamping is applied. ``K == 0`` or ``alpha == 1`` returns a copy of
    ``h0``.
    """
    h0 = np.asarray(h0, dtype=np.float64)
    _check_dims(a_hat, h0)
    h = h0.copy()
    if cfg.alpha == 1.0:
        return h
    restart = cfg.alpha * h0
    for _ in range(cfg.K):
        h = a_hat @ h
        h *= 1.0 - cfg.alpha
        h += restart
    return h


def ppr_adjoint(a_hat, grad_out: np.ndarray, cfg: PropagationConfig) -> np.ndarray:
    """Pull a gradient back through :func:`ppr_propagate`.

    Since the propagation is ``A_bar @ H0``, the gradient w.r.t. ``H0`` is
    ``A_bar.T @ grad_out``: the same recurrence run with ``A_hat.T``.
    """
    return ppr_propagate(a_hat.T.tocsr() if sp.issparse(a_hat) else a_hat.T, grad_out, cfg)


def label_propagate(a_hat, labels: LabelSet, cfg: PropagationConfig) -> np.ndarray:
    """Soft labels by PPR label propagation from the observed one-hot rows.

    With ``cfg.clamp_labeled`` the labeled rows are reset to their one-hot
    vectors after every step, so they come out exactly one-hot.
    """
    # The restart term carries alpha. Dropping it makes the coefficients
    # sum to more than one; see PropagationConfig.coefficients.
    y0 = np.asarray(labels.onehot, dtype=np.float64)
    _check_dims(a_hat, y0)
    if not cfg.clamp_labeled:
        return ppr_propagate(a_hat, y0, cfg)
    nodes = labels.labeled_nodes
    clamp = y0[nodes]
    y = y0.copy()
    restart = cfg.alpha * y0
    for _ in range(cfg.K):
        y = a_hat @ y
        y *= 1.0 - cfg.alpha
        y += restart
        y[nodes] = clamp
    return y


def closed_form_abar(a_hat, cfg: PropagationConfig, max_n: int = 2000) -> np.ndarray:
    """Dense ``A_bar`` from explicit matrix powers (verification only).

    Raises
    ------
    ValueError
        If the graph has more than ``max_n`` nodes.
    """
    n = a_hat.shape[0]
    if n > max_n:
        raise ValueError(f"closed-form A_bar is dense; refusing n={n} > max_n={max_n}")
    a = a_hat.toarray() if sp.issparse(a_hat) else np.asarray(a_hat, dtype=np.float64)
    beta = cfg.coefficients
    power = np.eye(n)
    abar = beta[0] * power
    for k in range(1, cfg.K + 1):
        power = power @ a
        abar += beta[k] * power
    return abar
