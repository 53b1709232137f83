"""Numerical checks of the identities linking decoupled GCNs and PT training.

Each ``verify_*`` function draws random small instances, evaluates both sides
of one identity by independent routes, and returns a
:class:`VerificationReport`. Failures are reported, never raised.

Checks
------
lemma1
    DGCN gradients (adjoint propagation) equal the gradients of PT with the
    normalized dynamic weights computed from a dense ``A_bar``. Also records
    how far each weight column is from summing to one.
appnp_unroll
    ``K`` PPR steps applied to the identity equal the closed-form ``A_bar``.
softmax_decomposition
    The unnormalized DGCN loss of a labeled node splits into the cross entropy
    of the row-normalized prediction plus ``-log(sum_j a_bar_ij)``.
matrix_loss
    The matrix form ``-sum(Y_soft * F^gamma * log F)`` equals the pairwise
    double sum over (node, labeled node) pairs, for gamma in {0, 1, ln 2}.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph_core import LabelSet, Normalization, labelset_from_labels, normalize_adjacency
from .predictor import MLPConfig, PredictorState, backward, forward_cached, init_params
from .propagation import PropagationConfig, closed_form_abar, label_propagate, ppr_propagate
from .training import coefficients_from_pair_weights, dgcn_coefficients, dgcn_loss, dgcn_pt_weights, pta_loss

__all__ = [
    "VerificationReport",
    "random_connected_graph",
    "verify_lemma1",
    "verify_appnp_unroll",
    "verify_softmax_decomposition",
    "verify_matrix_loss",
    "CHECKS",
]

WEIGHT_SUM_TOL = 1e-12


@dataclass
class VerificationReport:
    check_name: str
    instances: int
    max_abs_error: float
    max_rel_error: float
    tolerance: float
    passed: bool
    seed: int
    metric: str = "max_rel_error"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _report(name, trials, abs_err, rel_err, tol, seed, metric, extra=None, ok=True) -> VerificationReport:
    measured = rel_err if metric == "max_rel_error" else abs_err
    return VerificationReport(
        check_name=name,
        instances=trials,
        max_abs_error=float(abs_err),
        max_rel_error=float(rel_err),
        tolerance=float(tol),
        passed=bool(measured <= tol and ok),
        seed=seed,
        metric=metric,
        extra=extra or {},
    )


def random_connected_graph(rng: np.random.Generator, n: int) -> sp.csr_matrix:
    """Symmetric Erdos-Renyi graph with p = 2 ln(n) / n, resampled until connected."""
    if n == 1:
        return sp.csr_matrix((1, 1))
    p = min(1.0, 2.0 * math.log(n) / n)
    while True:
        upper = np.triu(rng.random((n, n)) < p, k=1)
        adj = sp.csr_matrix((upper | upper.T).astype(np.float64))
        if connected_components(adj, directed=False)[0] == 1:
            return adj


def _random_labels(rng, n: int, C: int, labeled_fraction: float = 0.5) -> tuple[np.ndarray, LabelSet]:
    """Full labels with every class present, and a labeled subset covering every class."""
    truth = rng.integers(0, C, size=n)
    truth[rng.permutation(n)[:C]] = np.arange(C)
    nodes = [int(rng.choice(np.flatnonzero(truth == c))) for c in range(C)]
    extra = [i for i in range(n) if i not in nodes and rng.random() < labeled_fraction]
    nodes = np.array(sorted(nodes + extra))
    return truth, labelset_from_labels(n, C, nodes, truth[nodes])


def _random_predictor(rng, f: int, C: int, hidden: int) -> PredictorState:
    state = init_params(MLPConfig(f, C, hidden=hidden, init_seed=int(rng.integers(2**31))))
    # spread the biases so F is far from uniform and ReLUs are mixed
    state.b1 = rng.normal(scale=0.5, size=hidden)
    state.b2 = rng.normal(scale=0.5, size=C)
    return state


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    nz = scale > 0
    return float(np.max(diff[nz] / scale[nz])) if nz.any() else 0.0


def verify_lemma1(trials: int = 50, seed: int = 0, tol: float = 1e-8) -> VerificationReport:
    """DGCN backward path vs PT with ``dgcn_pt_weights`` on random instances."""
    rng = np.random.default_rng(seed)
    max_abs = max_rel = max_wsum = 0.0
    for _ in range(trials):
        n = int(rng.integers(5, 31))
        C = int(rng.integers(2, 5))
        f = int(rng.integers(2, 9))
        hidden = int(rng.integers(2, 9))
        cfg = PropagationConfig(alpha=float(rng.uniform(0.05, 0.95)), K=int(rng.integers(1, 11)), clamp_labeled=False)
        a_hat = normalize_adjacency(random_connected_graph(rng, n), Normalization.SYM_SELFLOOP)
        X = rng.normal(size=(n, f))
        _, labels = _random_labels(rng, n, C)
        state = _random_predictor(rng, f, C, hidden)
        cache = forward_cached(state, X, "eval")

        # route 1: sparse propagation and its adjoint
        _, coef_dgcn, _ = dgcn_coefficients(a_hat, cache.F, labels, cfg)
        g_dgcn = backward(state, X, coef_dgcn, cache)
        # route 2: explicit pairwise weights from the dense closed form
        w = dgcn_pt_weights(closed_form_abar(a_hat, cfg), cache.F, labels)
        max_wsum = max(max_wsum, float(np.max(np.abs(w.sum(axis=0) - 1.0))))
        g_pt = backward(state, X, coefficients_from_pair_weights(w, labels, C), cache)

        for a, b in zip(g_dgcn, g_pt):
            max_abs = max(max_abs, float(np.max(np.abs(a - b))))
            max_rel = max(max_rel, _rel_err(a, b))
    return _report(
        "lemma1",
        trials,
        max_abs,
        max_rel,
        tol,
        seed,
        "max_rel_error",
        extra={"max_weight_sum_error": max_wsum, "weight_sum_tolerance": WEIGHT_SUM_TOL},
        ok=max_wsum <= WEIGHT_SUM_TOL,
    )


def verify_appnp_unroll(trials: int = 50, seed: int = 0, tol: float = 1e-10) -> VerificationReport:
    """Iterated PPR of the identity vs the closed-form ``A_bar`` (matrix inf-norm)."""
    rng = np.random.default_rng(seed)
    max_abs = max_rel = 0.0
    for _ in range(trials):
        n = int(rng.integers(5, 51))
        cfg = PropagationConfig(alpha=float(rng.uniform(0.01, 0.99)), K=int(rng.integers(1, 11)), clamp_labeled=False)
        a_hat = normalize_adjacency(random_connected_graph(rng, n), Normalization.SYM_SELFLOOP)
        iterative = ppr_propagate(a_hat, np.eye(n), cfg)
        closed = closed_form_abar(a_hat, cfg)
        err = float(np.max(np.sum(np.abs(iterative - closed), axis=1)))
        max_abs = max(max_abs, err)
        max_rel = max(max_rel, err / float(np.max(np.sum(np.abs(closed), axis=1))))
    return _report("appnp_unroll", trials, max_abs, max_rel, tol, seed, "max_abs_error")


def verify_softmax_decomposition(trials: int = 50, seed: int = 0, tol: float = 1e-10) -> VerificationReport:
    """Per-labeled-node DGCN loss vs normalized CE plus ``-log`` row mass."""
    rng = np.random.default_rng(seed)
    max_abs = max_rel = 0.0
    strategies = (Normalization.SYM_SELFLOOP, Normalization.ROW)
    for t in range(trials):
        n = int(rng.integers(5, 31))
        C = int(rng.integers(2, 5))
        cfg = PropagationConfig(alpha=float(rng.uniform(0.05, 0.95)), K=int(rng.integers(1, 11)), clamp_labeled=False)
        a_hat = normalize_adjacency(random_connected_graph(rng, n), strategies[t % 2])
        logits = rng.normal(scale=2.0, size=(n, C))
        F = np.exp(logits - logits.max(axis=1, keepdims=True))
        F /= F.sum(axis=1, keepdims=True)
        _, labels = _random_labels(rng, n, C)
        nodes, classes = labels.labeled_nodes, labels.classes

        # left side: sparse propagation, unnormalized scores
        _, y_hat_rows = dgcn_loss(a_hat, F, labels, cfg)
        lhs = -np.log(y_hat_rows[np.arange(len(nodes)), classes])
        # right side: dense A_bar split into row-stochastic part and row mass
        abar = closed_form_abar(a_hat, cfg)
        mass = abar.sum(axis=1)
        g = abar / mass[:, None]
        rhs = -np.log((g @ F)[nodes, classes]) - np.log(mass[nodes])

        diff = np.abs(lhs - rhs)
        max_abs = max(max_abs, float(diff.max()))
        max_rel = max(max_rel, _rel_err(lhs, rhs))
    return _report("softmax_decomposition", trials, max_abs, max_rel, tol, seed, "max_abs_error")


def _pairwise_pt_loss(abar: np.ndarray, F: np.ndarray, labels: LabelSet, gamma: float) -> float:
    """Explicit double loop over (node i, labeled node j)."""
    total = 0.0
    log_F = np.log(F)
    for j, hj in zip(labels.labeled_nodes, labels.classes):
        for i in range(F.shape[0]):
            weight = abar[j, i] * F[i, hj] ** gamma
            total += weight * -log_F[i, hj]  # CE against a one-hot target
    return total


def verify_matrix_loss(trials: int = 50, seed: int = 0, tol: float = 1e-10) -> VerificationReport:
    """Matrix-form PT loss vs the pairwise sum, gamma in {0, 1, ln 2}."""
    rng = np.random.default_rng(seed)
    max_abs = max_rel = 0.0
    instances = 0
    for _ in range(trials):
        n = int(rng.integers(5, 31))
        C = int(rng.integers(2, 5))
        cfg = PropagationConfig(alpha=float(rng.uniform(0.05, 0.95)), K=int(rng.integers(1, 11)), clamp_labeled=False)
        a_hat = normalize_adjacency(random_connected_graph(rng, n), Normalization.SYM_SELFLOOP)
        logits = rng.normal(scale=2.0, size=(n, C))
        F = np.exp(logits - logits.max(axis=1, keepdims=True))
        F /= F.sum(axis=1, keepdims=True)
        _, labels = _random_labels(rng, n, C)
        y_soft = label_propagate(a_hat, labels, cfg)
        abar = closed_form_abar(a_hat, cfg)
        for gamma in (0.0, 1.0, math.log(2.0)):
            matrix, _ = pta_loss(y_soft, F, gamma)
            pairwise = _pairwise_pt_loss(abar, F, labels, gamma)
            err = abs(matrix - pairwise)
            max_abs = max(max_abs, err)
            max_rel = max(max_rel, err / max(abs(pairwise), 1e-300) if err else 0.0)
        instances += 1
    return _report("matrix_loss", instances, max_abs, max_rel, tol, seed, "max_rel_error")


CHECKS = {
    "lemma1": (verify_lemma1, 1e-8),
    "appnp_unroll": (verify_appnp_unroll, 1e-10),
    "softmax_decomposition": (verify_softmax_decomposition, 1e-10),
    "matrix_loss": (verify_matrix_loss, 1e-10),
}
