import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ptagraph import PropagationConfig, closed_form_abar, label_propagate, labelset_from_labels, ppr_propagate
from ptagraph.equivalence import random_connected_graph
from ptagraph.graph_core import normalize_adjacency

HALF = sp.csr_matrix(np.full((2, 2), 0.5))


def random_a_hat(seed, n):
    return normalize_adjacency(random_connected_graph(np.random.default_rng(seed), n))


def test_coefficients_sum_to_one():
    for alpha in (0.05, 0.1, 0.2, 0.5, 0.9, 1.0):
        for K in range(0, 15):
            beta = PropagationConfig(alpha, K).coefficients
            assert len(beta) == K + 1
            assert abs(beta.sum() - 1.0) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        PropagationConfig(alpha=0.0)
    with pytest.raises(ValueError):
        PropagationConfig(K=-1)


class TestPPR:
    def test_alpha_one_is_identity(self):
        h0 = np.random.default_rng(0).normal(size=(2, 3))
        np.testing.assert_array_equal(ppr_propagate(HALF, h0, PropagationConfig(1.0, 7)), h0)

    def test_k_zero(self):
        h0 = np.random.default_rng(0).normal(size=(2, 3))
        np.testing.assert_array_equal(ppr_propagate(HALF, h0, PropagationConfig(0.1, 0)), h0)

    def test_one_step(self):
        out = ppr_propagate(HALF, np.eye(2), PropagationConfig(0.1, 1))
        np.testing.assert_allclose(out, [[0.55, 0.45], [0.45, 0.55]], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ppr_propagate(HALF, np.eye(3), PropagationConfig())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 50), st.floats(0.01, 1.0), st.integers(0, 10))
    def test_matches_closed_form(self, seed, n, alpha, K):
        a_hat = random_a_hat(seed, n)
        cfg = PropagationConfig(alpha, K)
        diff = ppr_propagate(a_hat, np.eye(n), cfg) - closed_form_abar(a_hat, cfg)
        assert np.max(np.sum(np.abs(diff), axis=1)) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        a_hat = random_a_hat(seed, 15)
        M, N = rng.normal(size=(15, 3)), rng.normal(size=(15, 3))
        cfg = PropagationConfig(0.15, 6)
        lhs = ppr_propagate(a_hat, a * M + b * N, cfg)
        rhs = a * ppr_propagate(a_hat, M, cfg) + b * ppr_propagate(a_hat, N, cfg)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


class TestClosedForm:
    def test_k1_base_case(self):
        a_hat = random_a_hat(2, 8)
        cfg = PropagationConfig(0.3, 1)
        expected = 0.7 * a_hat.toarray() + 0.3 * np.eye(8)
        np.testing.assert_allclose(closed_form_abar(a_hat, cfg), expected, rtol=0, atol=1e-15)

    def test_alpha_one(self):
        np.testing.assert_array_equal(closed_form_abar(random_a_hat(1, 6), PropagationConfig(1.0, 5)), np.eye(6))

    def test_symmetric(self):
        abar = closed_form_abar(random_a_hat(5, 30), PropagationConfig(0.1, 10))
        assert np.max(np.abs(abar - abar.T)) < 1e-12

    def test_refuses_large(self):
        with pytest.raises(ValueError, match="max_n"):
            closed_form_abar(sp.identity(11, format="csr"), PropagationConfig(), max_n=10)

    def test_diffusion_kernel_limit(self):
        # large K approaches alpha (I - (1-alpha) A_hat)^-1
        a_hat = random_a_hat(9, 12)
        alpha = 0.3
        kernel = alpha * np.linalg.inv(np.eye(12) - (1 - alpha) * a_hat.toarray())
        approx = closed_form_abar(a_hat, PropagationConfig(alpha, 200))
        np.testing.assert_allclose(approx, kernel, atol=1e-12)


class TestLabelPropagation:
    def test_two_node_example(self):
        labels = labelset_from_labels(2, 2, [0], [0])
        y = label_propagate(HALF, labels, PropagationConfig(0.1, 1, clamp_labeled=False))
        np.testing.assert_allclose(y[1], [0.45, 0.0], atol=1e-15)

    def test_no_labels_gives_zero(self):
        labels = labelset_from_labels(6, 3, [], [])
        y = label_propagate(random_a_hat(0, 6), labels, PropagationConfig())
        assert not y.any()

    def test_clamped_rows_exact(self):
        rng = np.random.default_rng(0)
        a_hat = random_a_hat(4, 25)
        nodes = rng.choice(25, 8, replace=False)
        labels = labelset_from_labels(25, 3, nodes, rng.integers(0, 3, 8))
        for K in range(0, 12):
            y = label_propagate(a_hat, labels, PropagationConfig(0.1, K))
            np.testing.assert_array_equal(y[nodes], labels.onehot[nodes])

    def test_unclamped_is_abar_y(self):
        rng = np.random.default_rng(1)
        a_hat = random_a_hat(8, 20)
        labels = labelset_from_labels(20, 4, [0, 5, 9, 13], [0, 1, 2, 3])
        cfg = PropagationConfig(0.2, 7, clamp_labeled=False)
        np.testing.assert_allclose(
            label_propagate(a_hat, labels, cfg), closed_form_abar(a_hat, cfg) @ labels.onehot, atol=1e-12
        )
