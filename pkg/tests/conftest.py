import numpy as np
import pytest
import scipy.sparse as sp

from ptagraph import make_dataset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail=""):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {number} [{status}] {title}" + (f" :: {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dense_graph(edges, n):
    rows = [u for u, v in edges] + [v for u, v in edges]
    cols = [v for u, v in edges] + [u for u, v in edges]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


@pytest.fixture
def path3():
    return dense_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def tiny_dataset():
    """Six nodes, two classes, two triangles joined by one edge."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    rng = np.random.default_rng(0)
    labels = np.array([0, 0, 0, 1, 1, 1])
    return make_dataset(dense_graph(edges, 6), rng.normal(size=(6, 4)), labels, 2, name="tiny")
