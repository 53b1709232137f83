"""Accuracy as inter-class edges replace intra-class ones.

Graph methods lean on neighbours sharing labels; once most edges cross
classes they fall below a feature-only MLP.
"""

from ptagraph.bench import run_noise_sweep
from ptagraph.noise import SbmSpec

spec = SbmSpec(n=1000, C=5, p_intra=0.05, p_inter=0.002, feature_dim=32, class_separation=2.2)
rates = [0.1, 0.3, 0.5, 0.7]
sweep = run_noise_sweep(spec, "structure", rates, modes=["mlp", "pts", "pta"], n_runs=3)

print("rate   " + "  ".join(f"{m:>5s}" for m in ("mlp", "pts", "pta")))
for rate, res in sweep.items():
    print(f"{rate:.1f}    " + "  ".join(f"{res.aggregates[m].mean_accuracy:5.3f}" for m in ("mlp", "pts", "pta")))
