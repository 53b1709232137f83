"""Soft labels from propagation on a path graph, with and without clamping."""

import numpy as np
import scipy.sparse as sp

from ptagraph import PropagationConfig, label_propagate, labelset_from_labels, normalize_adjacency

n = 7
rows = np.arange(n - 1)
adj = sp.csr_matrix((np.ones(2 * (n - 1)), (np.r_[rows, rows + 1], np.r_[rows + 1, rows])), shape=(n, n))
a_hat = normalize_adjacency(adj)
labels = labelset_from_labels(n, 2, [0, n - 1], [0, 1])

for clamp in (True, False):
    y = label_propagate(a_hat, labels, PropagationConfig(alpha=0.1, K=10, clamp_labeled=clamp))
    print(f"clamp={clamp}")
    print(np.round(y, 3))
