"""Losses and full-batch trainers for the propagation-then-training family.

Modes
-----
PTS, PTD, PTA
    Train the MLP on soft labels ``Y_soft`` from label propagation, weighting
    every entry by ``F ** gamma`` with gamma fixed at 0 (PTS), 1 (PTD) or
    growing as ``log(1 + epoch / epsilon)`` (PTA). Predictions are ensembled
    by propagating ``F``.
PTA_FAST
    PTA, but early stopping looks at the raw ``F`` instead of the ensemble.
DGCN
    Decoupled GCN in the APPNP form: propagate ``F`` and fit the propagated
    scores to the labeled nodes. Gradients flow back through the propagation.
DGCN_NOE
    DGCN training, raw ``F`` at test time.
DGCN_UNIFORM
    Each labeled node spreads its label with equal weight over its K-hop
    neighbourhood (the support of its ``A_bar`` row). No model weighting.
MLP
    Plain cross-entropy on the labeled nodes only.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graph_core import Dataset, LabelSet, Normalization, Split, labelset_from_split, normalize_adjacency
from .predictor import MLPConfig, PredictorState, adam_step, backward, forward, forward_cached, init_params
from .propagation import PropagationConfig, label_propagate, ppr_adjoint, ppr_propagate

__all__ = [
    "Mode",
    "TrainConfig",
    "TrainedModel",
    "TrainingDiverged",
    "compute_gamma",
    "pta_loss",
    "dgcn_loss",
    "dgcn_coefficients",
    "dgcn_pt_weights",
    "coefficients_from_pair_weights",
    "uniform_pseudo_labels",
    "ensemble_predict",
    "predict",
    "train",
]

TINY = np.finfo(np.float64).tiny


class Mode(str, enum.Enum):
    PTS = "pts"
    PTD = "ptd"
    PTA = "pta"
    PTA_FAST = "pta-fast"
    DGCN = "dgcn"
    DGCN_NOE = "dgcn-noe"
    DGCN_UNIFORM = "dgcn-uniform"
    MLP = "mlp"

    @property
    def propagates_gradients(self) -> bool:
        return self in (Mode.DGCN, Mode.DGCN_NOE)

    @property
    def ensembles(self) -> bool:
        return self not in (Mode.MLP, Mode.DGCN_NOE)

    @property
    def uses_graph(self) -> bool:
        return self is not Mode.MLP


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode = Mode.PTA
    lambda1: float = 0.05
    lambda2: float = 0.005
    lr: float = 0.1
    epsilon: float = 100.0
    max_epochs: int = 1000
    patience: int = 100
    prop: PropagationConfig = field(default_factory=PropagationConfig)
    normalization: Normalization = Normalization.SYM_SELFLOOP
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError("need 0 < patience <= max_epochs")


@dataclass
class TrainedModel:
    predictor: PredictorState
    mode: Mode
    prop: PropagationConfig
    history: list = field(default_factory=list)  # (train loss, early-stop accuracy) per epoch
    best_epoch: int = 0
    epochs_run: int = 0
    wall_time_total: float = 0.0
    wall_time_per_epoch: float = 0.0
    preprocess_time: float = 0.0


def compute_gamma(epoch: float, epsilon: float) -> float:
    """Adaptive exponent ``log(1 + epoch / epsilon)`` (natural log)."""
    if epoch < 0 or epsilon <= 0:
        raise ValueError("need epoch >= 0 and epsilon > 0")
    return math.log1p(epoch / epsilon)


def pta_loss(y_soft: np.ndarray, F: np.ndarray, gamma: float, log_F: np.ndarray | None = None):
    """Soft-label cross entropy weighted by the detached ``F ** gamma``.

    Returns ``(loss, coef)`` with ``loss = -sum(coef * log F)`` and
    ``coef = y_soft * F ** gamma``. ``coef`` is a constant for backward.
    """
    y_soft = np.asarray(y_soft, dtype=np.float64)
    if y_soft.shape != F.shape:
        raise ValueError(f"soft labels {y_soft.shape} and predictions {F.shape} differ in shape")
    if log_F is None:
        log_F = np.log(np.maximum(F, TINY))
    coef = y_soft if gamma == 0 else y_soft * F**gamma
    loss = -float(np.sum(coef * log_F))
    if not (math.isfinite(loss) and np.all(np.isfinite(coef))):
        raise FloatingPointError("non-finite loss or weights")
    return loss, coef


def _label_targets(labels: LabelSet):
    return labels.labeled_nodes, labels.classes


def dgcn_loss(a_hat, F: np.ndarray, labels: LabelSet, prop: PropagationConfig):
    """Cross entropy of the propagated scores ``A_bar F`` on labeled rows.

    Returns ``(loss, Y_hat[labeled_nodes])``. The propagated rows are not
    renormalized.
    """
    prop = replace(prop, clamp_labeled=False)
    y_hat = ppr_propagate(a_hat, F, prop)
    nodes, classes = _label_targets(labels)
    picked = y_hat[nodes, classes]
    if np.any(picked <= 0):
        raise FloatingPointError("propagated score <= 0 at a labeled node")
    return -float(np.sum(np.log(picked))), y_hat[nodes]


def dgcn_coefficients(a_hat, F: np.ndarray, labels: LabelSet, prop: PropagationConfig):
    """Loss, backward coefficients and full ``Y_hat`` for DGCN training.

    The coefficients ``c`` satisfy ``dL/dF = -c / F``, so ``backward(c)`` gives
    the exact parameter gradient. They are obtained with the adjoint
    propagation, never materializing ``A_bar``.
    """
    prop = replace(prop, clamp_labeled=False)
    y_hat = ppr_propagate(a_hat, F, prop)
    nodes, classes = _label_targets(labels)
    picked = y_hat[nodes, classes]
    if np.any(picked <= 0):
        raise FloatingPointError("propagated score <= 0 at a labeled node")
    g = np.zeros_like(F)
    g[nodes, classes] = 1.0 / picked
    coef = F * ppr_adjoint(a_hat, g, prop)
    return -float(np.sum(np.log(picked))), coef, y_hat


def dgcn_pt_weights(a_bar: np.ndarray, F: np.ndarray, labels: LabelSet) -> np.ndarray:
    """Pseudo-label weights under which PT reproduces DGCN gradients.

    ``w[i, t] = a_bar[j, i] * F[i, h(j)] / sum_q a_bar[j, q] * F[q, h(j)]`` for
    the ``t``-th labeled node ``j``. Each column sums to one.
    """
    nodes, classes = _label_targets(labels)
    numer = a_bar[nodes, :].T * F[:, classes]  # (n, L)
    denom = numer.sum(axis=0)
    if np.any(denom <= 0):
        raise ZeroDivisionError("labeled node with zero total weight")
    return numer / denom


def coefficients_from_pair_weights(w: np.ndarray, labels: LabelSet, num_classes: int) -> np.ndarray:
    """``c[i, k] = sum_j w[i, j] * y[j, k]``: pairwise weights as backward coefficients."""
    y_l = np.zeros((len(labels.labeled_nodes), num_classes))
    y_l[np.arange(len(labels.labeled_nodes)), labels.classes] = 1.0
    return w @ y_l


def uniform_pseudo_labels(a_hat, labels: LabelSet, prop: PropagationConfig) -> np.ndarray:
    """Soft labels where labeled node ``j`` gives weight ``1/|S_j|`` to each node of S_j.

    ``S_j`` is the support of row ``j`` of ``A_bar``: every node within K hops
    (only ``j`` itself when alpha is 1).
    """
    n = a_hat.shape[0]
    nodes, classes = _label_targets(labels)
    hops = 0 if prop.alpha == 1.0 else prop.K
    pattern = sp.csr_matrix((np.ones(a_hat.nnz), a_hat.indices, a_hat.indptr), shape=a_hat.shape)
    pattern = (pattern + sp.identity(n, format="csr")).tocsr()
    reach = np.zeros((n, len(nodes)))
    reach[nodes, np.arange(len(nodes))] = 1.0
    for _ in range(hops):
        reach = ((pattern @ reach) > 0).astype(np.float64)
    reach /= reach.sum(axis=0)
    y_l = np.zeros((len(nodes), labels.onehot.shape[1]))
    y_l[np.arange(len(nodes)), classes] = 1.0
    return reach @ y_l


def ensemble_predict(model: PredictorState, ds: Dataset, prop: PropagationConfig, a_hat=None) -> np.ndarray:
    """Class per node from the propagated predictions ``A_bar F``.

    Ties go to the lowest class index.
    """
    if a_hat is None:
        a_hat = normalize_adjacency(ds.adjacency)
    F = forward(model, ds.features, "eval")
    return _ensemble_from_F(a_hat, F, prop)


def _ensemble_from_F(a_hat, F: np.ndarray, prop: PropagationConfig) -> np.ndarray:
    return np.argmax(ppr_propagate(a_hat, F, replace(prop, clamp_labeled=False)), axis=1)


def predict(model: TrainedModel, ds: Dataset, a_hat=None) -> np.ndarray:
    """Test-time prediction following the model's mode (ensemble or raw F)."""
    if not model.mode.ensembles:
        return np.argmax(forward(model.predictor, ds.features, "eval"), axis=1)
    return ensemble_predict(model.predictor, ds, model.prop, a_hat=a_hat)


def _soft_labels(mode: Mode, a_hat, labels: LabelSet, prop: PropagationConfig):
    if mode is Mode.MLP:
        return labels.onehot
    if mode is Mode.DGCN_UNIFORM:
        return uniform_pseudo_labels(a_hat, labels, prop)
    if mode.propagates_gradients:
        return None
    return label_propagate(a_hat, labels, prop)


def _gamma(cfg: TrainConfig, epoch: int) -> float:
    if cfg.mode is Mode.PTD:
        return 1.0
    if cfg.mode in (Mode.PTA, Mode.PTA_FAST):
        return compute_gamma(epoch, cfg.epsilon)
    return 0.0


def train(
    ds: Dataset,
    split: Split,
    mlp_cfg: MLPConfig,
    cfg: TrainConfig,
    labels: LabelSet | None = None,
    a_hat=None,
) -> TrainedModel:
    """Full-batch training with early stopping on ``split.early_stop``.

    Parameters
    ----------
    labels : LabelSet, optional
        Observed training labels. Defaults to the true labels of
        ``split.train``; pass a corrupted set for label-noise experiments.
    a_hat : sparse matrix, optional
        Pre-normalized adjacency. Defaults to ``cfg.normalization`` of
        ``ds.adjacency``.

    The parameters with the best early-stopping accuracy (ties: lower
    training loss) are restored at the end.
    """
    mode = cfg.mode
    t_start = time.perf_counter()
    if labels is None:
        labels = labelset_from_split(ds, split)
    if a_hat is None and mode.uses_graph:
        a_hat = normalize_adjacency(ds.adjacency, cfg.normalization)
    signal_prop = replace(cfg.prop, clamp_labeled=False)

    y_soft = _soft_labels(mode, a_hat, labels, cfg.prop)
    preprocess_time = time.perf_counter() - t_start

    X = ds.features
    state = init_params(mlp_cfg)
    es_nodes = split.early_stop
    es_true = ds.labels[es_nodes]
    use_train_F = state.dropout == 0.0

    best_state, best_acc, best_loss, best_epoch = state, -1.0, math.inf, 0
    history, step_times = [], []
    waited = 0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t_step = time.perf_counter()
        cache = forward_cached(state, X, "train", dropout_seed=[cfg.seed, epoch])
        y_hat = None
        try:
            if mode.propagates_gradients:
                loss1, coef, y_hat = dgcn_coefficients(a_hat, cache.F, labels, signal_prop)
            else:
                loss1, coef = pta_loss(y_soft, cache.F, _gamma(cfg, epoch), cache.log_F)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"{mode.value}: {exc} at epoch {epoch}") from None
        loss = cfg.lambda1 * loss1 + cfg.lambda2 * float(np.sum(state.W1 * state.W1))
        if not math.isfinite(loss):
            raise TrainingDiverged(f"{mode.value}: loss became {loss} at epoch {epoch}")
        grads = backward(state, X, cfg.lambda1 * coef, cache)
        try:
            new_state = adam_step(state, grads, cfg.lr, cfg.lambda2)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"{mode.value}: {exc} at epoch {epoch}") from None
        step_times.append(time.perf_counter() - t_step)

        # early-stopping accuracy of the parameters the loss was computed with
        if mode.propagates_gradients:
            if not use_train_F:
                y_hat = ppr_propagate(a_hat, forward(state, X, "eval"), signal_prop)
            pred = np.argmax(y_hat[es_nodes], axis=1)
        else:
            F = cache.F if use_train_F else forward(state, X, "eval")
            if mode in (Mode.PTA_FAST, Mode.MLP):
                pred = np.argmax(F[es_nodes], axis=1)
            else:
                pred = _ensemble_from_F(a_hat, F, signal_prop)[es_nodes]
        acc = float(np.mean(pred == es_true)) if len(es_nodes) else 0.0
        history.append((loss, acc))

        if acc > best_acc or (acc == best_acc and loss < best_loss):
            best_state, best_acc, best_loss, best_epoch = state, acc, loss, epoch
            waited = 0
        else:
            waited += 1
        state = new_state
        if waited >= cfg.patience:
            break

    # adam_step never mutates, so best_state still holds the recorded arrays
    timed = step_times[5:] if len(step_times) > 5 else step_times
    return TrainedModel(
        predictor=best_state.copy(),
        mode=mode,
        prop=signal_prop,
        history=history,
        best_epoch=best_epoch,
        epochs_run=epoch,
        wall_time_total=time.perf_counter() - t_start,
        wall_time_per_epoch=float(np.median(timed)) if timed else 0.0,
        preprocess_time=preprocess_time,
    )
