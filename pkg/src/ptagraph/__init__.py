"""Propagation-then-training for semi-supervised node classification."""

from .graph_core import (
    Dataset,
    DatasetFormatError,
    LabelSet,
    Normalization,
    Split,
    as_csr,
    labelset_from_labels,
    labelset_from_split,
    load_dataset,
    make_dataset,
    make_split,
    normalize_adjacency,
    save_dataset,
)
from .propagation import PropagationConfig, closed_form_abar, label_propagate, ppr_propagate
from .predictor import MLPConfig, PredictorState, adam_step, backward, forward, init_params
from .training import (
    Mode,
    TrainConfig,
    TrainedModel,
    compute_gamma,
    dgcn_loss,
    dgcn_pt_weights,
    ensemble_predict,
    pta_loss,
    train,
)

__version__ = "0.1.0"
