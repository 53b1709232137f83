"""Compare MLP, PTS, PTA and DGCN on stochastic block model graphs."""

from ptagraph.bench import run_benchmark
from ptagraph.noise import SbmSpec

spec = SbmSpec(n=1000, C=5, p_intra=0.05, p_inter=0.002, feature_dim=32, class_separation=2.2)
result = run_benchmark(spec, ["mlp", "pts", "pta", "dgcn"], n_runs=5)

for mode, agg in result.aggregates.items():
    print(f"{mode:6s} {agg.mean_accuracy:.3f}  [{agg.ci95_low:.3f}, {agg.ci95_high:.3f}]  {agg.mean_per_epoch_ms:.1f} ms/epoch")
for name, test in result.t_tests.items():
    print(name, f"t={test['statistic']:.2f} p={test['p_value']:.3g}")
