"""Inspect the pseudo-label weights that make DGCN training a PT objective.

Builds a small random graph, trains nothing, and shows for one labeled node
how its propagated weight spreads across the graph, then confirms that the
DGCN gradient equals the gradient of the weighted PT loss.
"""

import numpy as np

from ptagraph import MLPConfig, PropagationConfig, closed_form_abar, init_params, labelset_from_labels, normalize_adjacency
from ptagraph.equivalence import random_connected_graph
from ptagraph.predictor import backward, forward_cached
from ptagraph.training import coefficients_from_pair_weights, dgcn_coefficients, dgcn_pt_weights

rng = np.random.default_rng(7)
n, C = 12, 3
a_hat = normalize_adjacency(random_connected_graph(rng, n))
prop = PropagationConfig(alpha=0.1, K=10, clamp_labeled=False)
labels = labelset_from_labels(n, C, [0, 5, 9], [0, 1, 2])
X = rng.normal(size=(n, 4))
state = init_params(MLPConfig(4, C, hidden=8, init_seed=1))
cache = forward_cached(state, X, "eval")

w = dgcn_pt_weights(closed_form_abar(a_hat, prop), cache.F, labels)
print("weights of labeled node 0 over all nodes:")
print(np.round(w[:, 0], 3), "sum =", w[:, 0].sum())

_, coef, _ = dgcn_coefficients(a_hat, cache.F, labels, prop)
g_dgcn = backward(state, X, coef, cache)
g_pt = backward(state, X, coefficients_from_pair_weights(w, labels, C), cache)
worst = max(float(np.max(np.abs(a - b))) for a, b in zip(g_dgcn, g_pt))
print(f"largest gradient difference: {worst:.2e}")
