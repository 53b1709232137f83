"""End-to-end acceptance criteria; each test prints one status line."""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from ptagraph.bench import run_benchmark, run_noise_sweep, strip_timing
from ptagraph.cli import main
from ptagraph.equivalence import verify_appnp_unroll, verify_lemma1, verify_matrix_loss, verify_softmax_decomposition
from ptagraph.graph_core import load_dataset
from ptagraph.noise import SbmSpec
from ptagraph.propagation import PropagationConfig

from test_predictor import finite_difference, make_state, max_rel_error
from ptagraph.predictor import backward

pytestmark = pytest.mark.slow

SBM = SbmSpec(n=1000, C=5, p_intra=0.05, p_inter=0.002, feature_dim=32, class_separation=2.2)
NOISE_RATES = [0.6, 0.7, 0.8]
TABLE5 = {"citeseer": 75.98, "cora_ml": 85.90, "pubmed": 79.89, "ms_academic": 93.64}


@pytest.fixture(scope="module")
def gradient_report():
    t0 = time.perf_counter()
    report = verify_lemma1(trials=50, seed=0, tol=1e-8)
    return report, time.perf_counter() - t0


def test_criterion_1_gradient_equivalence(record_criterion, gradient_report):
    report, elapsed = gradient_report
    ok = report.passed and report.max_rel_error < 1e-8 and report.instances >= 50 and elapsed < 10
    detail = f"max rel error {report.max_rel_error:.2e} over {report.instances} instances in {elapsed:.2f}s"
    assert record_criterion(1, "DGCN and weighted PT gradients agree", ok, detail)


def test_criterion_2_unroll(record_criterion):
    t0 = time.perf_counter()
    report = verify_appnp_unroll(trials=50, seed=0, tol=1e-10)
    elapsed = time.perf_counter() - t0
    ok = report.passed and report.max_abs_error <= 1e-10 and elapsed < 5
    detail = f"max inf-norm error {report.max_abs_error:.2e} in {elapsed:.2f}s"
    assert record_criterion(2, "PPR unrolling equals closed form", ok, detail)


def test_criterion_3_decomposition_and_matrix_loss(record_criterion):
    t0 = time.perf_counter()
    dec = verify_softmax_decomposition(trials=50, seed=0, tol=1e-10)
    mat = verify_matrix_loss(trials=50, seed=0, tol=1e-10)
    elapsed = time.perf_counter() - t0
    ok = dec.passed and mat.passed and elapsed < 5
    detail = f"decomposition abs {dec.max_abs_error:.2e}, matrix loss rel {mat.max_rel_error:.2e} in {elapsed:.2f}s"
    assert record_criterion(3, "loss decomposition and matrix-form identity", ok, detail)


def test_criterion_4_weight_normalization(record_criterion, gradient_report):
    report, _ = gradient_report
    err = report.extra["max_weight_sum_error"]
    assert record_criterion(4, "pseudo-label weights sum to one", err <= 1e-12, f"max |sum - 1| = {err:.2e}")


def test_criterion_5_finite_differences(record_criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        state = make_state(seed)
        X = rng.normal(size=(6, 5))
        coef = rng.random((6, 3))
        worst = max(worst, max_rel_error(backward(state, X, coef), finite_difference(state, X, coef)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 5
    assert record_criterion(5, "backward matches finite differences", ok, f"max rel error {worst:.2e} in {elapsed:.2f}s")


def _bundle_dir():
    root = os.environ.get("PTAGRAPH_DATA_DIR")
    return Path(root) if root else None


def test_criterion_6_benchmark_reproduction(record_criterion):
    root = _bundle_dir()
    if root is None or not all((root / name).is_dir() for name in TABLE5):
        record_criterion(6, "benchmark reproduction", None, "dataset bundles not provided (set PTAGRAPH_DATA_DIR); criterion 7 substitutes")
        pytest.skip("dataset bundles not available")
    details, ok = [], True
    for name, target in TABLE5.items():
        ds = load_dataset(root / name, sparse_features=True)
        prop = PropagationConfig(alpha=0.2 if name == "ms_academic" else 0.1, K=10)
        res = run_benchmark(ds, ["mlp", "pts", "pta"], n_runs=20, train_overrides={"prop": prop}, mlp_overrides={"dropout": 0.0})
        acc = {m: 100 * a.mean_accuracy for m, a in res.aggregates.items()}
        good = abs(acc["pta"] - target) <= 1.5 and acc["pta"] >= acc["pts"] >= acc["mlp"]
        ok &= good
        details.append(f"{name} pta {acc['pta']:.2f} (target {target}) pts {acc['pts']:.2f} mlp {acc['mlp']:.2f}")
    assert record_criterion(6, "benchmark reproduction", ok, "; ".join(details))


def test_criterion_7_sbm_substitute(record_criterion):
    t0 = time.perf_counter()
    clean = run_benchmark(SBM, ["mlp", "pts", "pta"], n_runs=10)
    acc = {m: a.mean_accuracy for m, a in clean.aggregates.items()}
    sweep = run_noise_sweep(SBM, "structure", NOISE_RATES, modes=["mlp", "pts", "pta"], n_runs=10, structure_k=2)
    elapsed = time.perf_counter() - t0

    mlp_in_band = 0.60 <= acc["mlp"] <= 0.75
    gain = acc["pts"] - acc["mlp"] >= 0.05 and acc["pta"] - acc["mlp"] >= 0.05
    inverted = []
    parts = [f"clean mlp {acc['mlp']:.3f} pts {acc['pts']:.3f} pta {acc['pta']:.3f}"]
    for rate, res in sweep.items():
        a = {m: r.mean_accuracy for m, r in res.aggregates.items()}
        inverted.append(a["mlp"] >= a["pts"] and a["mlp"] >= a["pta"])
        parts.append(f"noise {rate}: mlp {a['mlp']:.3f} pts {a['pts']:.3f} pta {a['pta']:.3f}")
    ok = mlp_in_band and gain and all(inverted) and elapsed < 300
    parts.append(f"{elapsed:.0f}s")
    assert record_criterion(7, "SBM gain and inversion under structure noise", ok, "; ".join(parts))


def test_criterion_8_timing(record_criterion):
    big = SbmSpec(n=12000, C=5, p_intra=0.006, p_inter=0.0003, feature_dim=32, class_separation=2.2)
    res = run_benchmark(big, ["pta", "pta-fast", "dgcn"], n_runs=1, early_stop_size=500)
    agg = res.aggregates
    ratio = agg["pta"].mean_per_epoch_ms / agg["dgcn"].mean_per_epoch_ms
    ok = ratio < 0.5 and agg["pta-fast"].mean_total_s < agg["pta"].mean_total_s
    detail = (
        f"per epoch pta {agg['pta'].mean_per_epoch_ms:.1f}ms dgcn {agg['dgcn'].mean_per_epoch_ms:.1f}ms (ratio {ratio:.2f}); "
        f"total pta-fast {agg['pta-fast'].mean_total_s:.1f}s pta {agg['pta'].mean_total_s:.1f}s"
    )
    assert record_criterion(8, "PT training cheaper than decoupled GCN", ok, detail)


def test_criterion_9_determinism(record_criterion, tmp_path, capsys):
    args = ["bench", "--sbm", "--mode", "mlp,pta,dgcn", "--runs", "2", "--deterministic"]
    blobs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main([*args, "--out", str(out)]) == 0
        runs = [strip_timing(json.loads(line)) for line in (out / "runs.jsonl").read_text().splitlines()]
        summary = strip_timing(json.loads((out / "summary.json").read_text()))
        blobs.append(json.dumps({"runs": runs, "summary": summary}, sort_keys=True).encode())
    capsys.readouterr()
    ok = blobs[0] == blobs[1]
    assert record_criterion(9, "deterministic invocations agree byte for byte", ok, f"{len(blobs[0])} bytes compared")
