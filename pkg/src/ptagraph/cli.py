"""Command-line entry point: ``ptagraph {verify,train,bench,noise,sbm}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import run_benchmark, run_noise_sweep, write_results
from .equivalence import CHECKS
from .graph_core import Normalization, load_dataset, save_dataset
from .noise import SbmSpec, generate_sbm, measure_structure_noise
from .propagation import PropagationConfig
from .training import Mode

MODE_CHOICES = [m.value for m in Mode]


def _add_source(p: argparse.ArgumentParser):
    g = p.add_argument_group("graph source (a bundle directory or a generated SBM)")
    g.add_argument("--dataset", type=Path, help="dataset bundle directory")
    g.add_argument("--sparse-features", action="store_true", help="keep bundle features in CSR form")
    g.add_argument("--sbm", action="store_true", help="use a stochastic block model, resampled per run")
    g.add_argument("--sbm-n", type=int, default=1000)
    g.add_argument("--sbm-classes", type=int, default=5)
    g.add_argument("--p-intra", type=float, default=0.05)
    g.add_argument("--p-inter", type=float, default=0.002)
    g.add_argument("--feature-dim", type=int, default=32)
    g.add_argument("--separation", type=float, default=2.2)


def _add_training(p: argparse.ArgumentParser, multi_mode: bool):
    g = p.add_argument_group("training")
    if multi_mode:
        g.add_argument("--mode", action="append", help=f"repeatable or comma separated; one of {MODE_CHOICES}")
    else:
        g.add_argument("--mode", default="pta", choices=MODE_CHOICES)
    g.add_argument("--alpha", type=float, default=0.1)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--no-clamp", action="store_true", help="do not clamp labeled rows during label propagation")
    g.add_argument("--normalization", default="sym_selfloop", choices=[s.value for s in Normalization])
    g.add_argument("--epsilon", type=float, default=100.0)
    g.add_argument("--lambda1", type=float, default=0.05)
    g.add_argument("--lambda2", type=float, default=0.005)
    g.add_argument("--lr", type=float, default=0.1)
    g.add_argument("--hidden", type=int, default=64)
    g.add_argument("--dropout", type=float, default=None, help="default: 0.5 for dgcn modes, 0.0 otherwise")
    g.add_argument("--max-epochs", type=int, default=1000)
    g.add_argument("--patience", type=int, default=100)
    g.add_argument("--per-class", type=int, default=20)
    g.add_argument("--early-stop-size", type=int, default=500)
    g.add_argument("--runs", type=int, default=1 if not multi_mode else 20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--deterministic", action="store_true", help="serial, single-threaded execution")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--csv", action="store_true", help="also write runs.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptagraph", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="numerically verify the equivalence identities")
    p.add_argument("checks", nargs="*", help="subset of: lemma1 appnp_unroll softmax_decomposition matrix_loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=None, help="override every tolerance")
    p.add_argument("--out", type=Path, help="write reports as JSON lines to this file")

    p = sub.add_parser("train", help="train one mode once and print its run record")
    _add_source(p)
    _add_training(p, multi_mode=False)

    p = sub.add_parser("bench", help="multi-seed benchmark of several modes")
    _add_source(p)
    _add_training(p, multi_mode=True)

    p = sub.add_parser("noise", help="accuracy under injected structure or label noise")
    _add_source(p)
    _add_training(p, multi_mode=True)
    p.add_argument("--kind", choices=["structure", "label"], required=True)
    p.add_argument("--rates", required=True, help="comma separated, ascending")
    p.add_argument("--structure-k", type=int, default=2, help="propagation steps during structure sweeps")

    p = sub.add_parser("sbm", help="write a stochastic block model graph as a dataset bundle")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--p-intra", type=float, default=0.05)
    p.add_argument("--p-inter", type=float, default=0.002)
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--separation", type=float, default=2.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _source(args):
    if args.sbm == (args.dataset is not None):
        raise SystemExit("give exactly one of --dataset or --sbm")
    if args.sbm:
        return SbmSpec(
            n=args.sbm_n,
            C=args.sbm_classes,
            p_intra=args.p_intra,
            p_inter=args.p_inter,
            feature_dim=args.feature_dim,
            class_separation=args.separation,
            seed=args.seed,
        )
    return load_dataset(args.dataset, sparse_features=args.sparse_features)


def _modes(args) -> list[str]:
    if isinstance(args.mode, str):
        return [args.mode]
    raw = args.mode or ["mlp,pts,pta,dgcn"]
    modes = [m.strip() for chunk in raw for m in chunk.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODE_CHOICES]
    if bad:
        raise SystemExit(f"unknown mode(s) {bad}; choose from {MODE_CHOICES}")
    return modes


def _bench_kwargs(args) -> dict:
    return dict(
        train_overrides=dict(
            lambda1=args.lambda1,
            lambda2=args.lambda2,
            lr=args.lr,
            epsilon=args.epsilon,
            max_epochs=args.max_epochs,
            patience=args.patience,
            normalization=args.normalization,
            prop=PropagationConfig(alpha=args.alpha, K=args.k, clamp_labeled=not args.no_clamp),
        ),
        mlp_overrides=dict(hidden=args.hidden, dropout=args.dropout),
        per_class=args.per_class,
        early_stop_size=args.early_stop_size,
        workers=args.workers,
        deterministic=args.deterministic,
        base_seed=args.seed,
    )


def _emit(result, args, extra=None):
    if args.out:
        write_results(result, args.out, csv_export=args.csv, extra=extra)
    summary = result.summary() | (extra or {})
    print(json.dumps(summary["aggregates"], sort_keys=True, indent=2))


def cmd_verify(args) -> int:
    unknown = set(args.checks) - set(CHECKS)
    if unknown:
        raise SystemExit(f"unknown check(s): {sorted(unknown)}; choose from {sorted(CHECKS)}")
    names = args.checks or list(CHECKS)
    reports = []
    for name in names:
        fn, default_tol = CHECKS[name]
        reports.append(fn(args.trials, args.seed, default_tol if args.tol is None else args.tol))
    lines = [r.to_json() for r in reports]
    if args.out:
        args.out.write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if all(r.passed for r in reports) else 1


def cmd_train(args) -> int:
    result = run_benchmark(_source(args), _modes(args), n_runs=args.runs, **_bench_kwargs(args))
    if args.out:
        write_results(result, args.out, csv_export=args.csv)
    for run in result.runs:
        print(json.dumps(asdict(run), sort_keys=True))
    return 1 if result.failures else 0


def cmd_bench(args) -> int:
    result = run_benchmark(_source(args), _modes(args), n_runs=args.runs, **_bench_kwargs(args))
    _emit(result, args)
    return 0


def cmd_noise(args) -> int:
    rates = [float(r) for r in args.rates.split(",")]
    source = _source(args)
    sweep = run_noise_sweep(
        source,
        args.kind,
        rates,
        modes=_modes(args),
        n_runs=args.runs,
        structure_k=args.structure_k,
        **_bench_kwargs(args),
    )
    table = {}
    for rate, result in sweep.items():
        table[str(rate)] = {m: a.mean_accuracy for m, a in result.aggregates.items()}
        if args.out:
            write_results(result, args.out / f"{args.kind}_{rate:g}", csv_export=args.csv)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "sweep.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    print(json.dumps(table, sort_keys=True, indent=2))
    return 0


def cmd_sbm(args) -> int:
    ds = generate_sbm(
        SbmSpec(
            n=args.n,
            C=args.classes,
            p_intra=args.p_intra,
            p_inter=args.p_inter,
            feature_dim=args.feature_dim,
            class_separation=args.separation,
            seed=args.seed,
        )
    )
    save_dataset(ds, args.out)
    info = {"nodes": ds.n, "edges": ds.num_edges, "classes": ds.C, "structure_noise": measure_structure_noise(ds)}
    print(json.dumps(info, sort_keys=True))
    return 0


COMMANDS = {"verify": cmd_verify, "train": cmd_train, "bench": cmd_bench, "noise": cmd_noise, "sbm": cmd_sbm}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
