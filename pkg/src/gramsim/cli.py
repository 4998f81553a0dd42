"""Command-line entry point.

Subcommands:

* ``sim``       -- joint similarity of the vectors in a text file
* ``checkgrad`` -- finite-difference verification of all analytic gradients
* ``noise``     -- noise-robustness experiment, writes report CSV + summary JSON
* ``align``     -- multimodal alignment simulation, writes embeddings/history
* ``bench``     -- runtime comparison of the joint loss vs the pairwise baseline

Exit codes: 0 success, 1 computation or tolerance failure, 2 usage error,
3 degenerate input (a zero vector where a similarity is required). All
outputs are deterministic for a given seed except benchmark timings.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .encoders import TrainConfig, save_checkpoint
from .experiments import (
    run_alignment_experiment,
    run_noise_experiment,
    run_runtime_benchmark,
    write_benchmark_csv,
    write_embedding_dump,
    write_history_csv,
    write_noise_report,
    write_noise_summary,
)
from .gradcheck import (
    check_loss_gradients,
    check_pipeline_gradient,
    check_similarity_gradient,
    check_two_vector_gradient,
)
from .losses import NEG_SCHEMES, LossConfig
from .similarity import DegenerateVectorError, cos_sq_from_pairwise, similarity

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DEGENERATE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramsim",
        description="Joint similarity of n vectors from the Gram-determinant "
                    "hypervolume angle, with losses and simulation experiments.",
    )
    parser.add_argument("--version", action="version", version=f"gramsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="joint similarity of vectors read from a file")
    p_sim.add_argument("--input", required=True,
                       help="UTF-8 text file, one vector per line, comma or "
                            "whitespace separated decimals")
    p_sim.add_argument("--format", choices=("json", "csv"), default="json")

    p_grad = sub.add_parser("checkgrad", help="finite-difference gradient verification")
    p_grad.add_argument("--modalities", type=int, default=3)
    p_grad.add_argument("--dim", type=int, default=8)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tau", type=float, default=0.05,
                        help="temperature for the loss checks (a mild value "
                             "keeps finite differences well conditioned)")
    p_grad.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p_grad.add_argument("--negatives", type=int, default=2)
    p_grad.add_argument("--batch", type=int, default=4)

    p_noise = sub.add_parser("noise", help="noise-robustness experiment")
    p_noise.add_argument("--seed", type=int, default=0)
    p_noise.add_argument("--count", type=int, default=100, help="number of tuples")
    p_noise.add_argument("--modalities", type=int, default=3)
    p_noise.add_argument("--dim", type=int, default=256)
    p_noise.add_argument("--out", default=".")

    p_align = sub.add_parser("align", help="multimodal alignment simulation")
    p_align.add_argument("--seed", type=int, default=0)
    p_align.add_argument("--count", type=int, default=4000, help="dataset size")
    p_align.add_argument("--modalities", type=int, default=3)
    p_align.add_argument("--dim", type=int, default=256)
    p_align.add_argument("--epochs", type=int, default=200)
    p_align.add_argument("--batch", type=int, default=100)
    p_align.add_argument("--lr", type=float, default=1e-3)
    p_align.add_argument("--tau", type=float, default=0.2,
                         help="softmax temperature; the alignment run needs a "
                              "milder value than the loss default, see TrainConfig")
    p_align.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p_align.add_argument("--negatives", type=int, default=7)
    p_align.add_argument("--neg-scheme", choices=NEG_SCHEMES, default="anchor-fixed")
    p_align.add_argument("--dump-count", type=int, default=7,
                         help="samples whose embeddings are dumped")
    p_align.add_argument("--out", default=".")

    p_bench = sub.add_parser("bench", help="runtime comparison of the two losses")
    p_bench.add_argument("--mode", choices=("by_negatives", "by_modalities"),
                         default="by_negatives")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--batch", type=int, default=256)
    p_bench.add_argument("--dim", type=int, default=256)
    p_bench.add_argument("--negatives", type=int, default=7,
                         help="negative count for the by_modalities sweep")
    p_bench.add_argument("--repetitions", type=int, default=10)
    p_bench.add_argument("--tau", type=float, default=0.005)
    p_bench.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p_bench.add_argument("--out", default=".")
    return parser


def _validate_common(args) -> str | None:
    if getattr(args, "tau", 1.0) <= 0:
        return "--tau must be > 0"
    if getattr(args, "lam", 0.0) < 0:
        return "--lambda must be >= 0"
    if getattr(args, "negatives", 1) < 1:
        return "--negatives must be >= 1"
    if getattr(args, "batch", 2) < 2:
        return "--batch must be >= 2"
    if getattr(args, "count", 1) < 1:
        return "--count must be >= 1"
    if getattr(args, "modalities", 2) < 2:
        return "--modalities must be >= 2"
    if getattr(args, "dim", 1) < 1:
        return "--dim must be >= 1"
    if getattr(args, "epochs", 1) < 1:
        return "--epochs must be >= 1"
    if getattr(args, "lr", 0.0) < 0:
        return "--lr must be >= 0"
    if getattr(args, "repetitions", 1) < 1:
        return "--repetitions must be >= 1"
    return None


def _parse_vector_file(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if len(rows) < 2:
        raise ValueError("need at least 2 vectors")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValueError(f"line {i}: expected {width} values, got {len(row)}")
    return np.asarray(rows, dtype=np.float64)


def _f(x: float) -> str:
    return format(float(x), ".17g")


def cmd_sim(args) -> int:
    try:
        m = _parse_vector_file(args.input)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read vectors from {args.input}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        res = similarity(m)
        phi3 = cos_sq_from_pairwise(m[0], m[1], m[2]) if m.shape[0] == 3 else None
    except DegenerateVectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    if args.format == "csv":
        header = ["det_gram", "hypervolume", "sin_sq", "cos_theta", "theta"]
        values = [res.det_gram, res.hypervolume, res.sin_sq, res.cos_theta, res.theta]
        header += [f"pairwise_cos_{i}" for i in range(len(res.pairwise_cos))]
        values += list(res.pairwise_cos)
        if phi3 is not None:
            header.append("phi3")
            values.append(phi3)
        print(",".join(header))
        print(",".join(_f(v) for v in values))
    else:
        fields = [
            f'  "det_gram": {_f(res.det_gram)}',
            f'  "hypervolume": {_f(res.hypervolume)}',
            f'  "sin_sq": {_f(res.sin_sq)}',
            f'  "cos_theta": {_f(res.cos_theta)}',
            f'  "theta": {_f(res.theta)}',
            f'  "norms": [{", ".join(_f(v) for v in res.norms)}]',
            f'  "pairwise_cos": [{", ".join(_f(v) for v in res.pairwise_cos)}]',
        ]
        if phi3 is not None:
            fields.append(f'  "phi3": {_f(phi3)}')
        print("{\n" + ",\n".join(fields) + "\n}")
    return EXIT_OK


def cmd_checkgrad(args) -> int:
    tol_component = 1e-4
    tol_pipeline = 1e-3
    results = {
        "similarity": check_similarity_gradient(args.modalities, max(args.dim, 2),
                                                args.seed),
        "two_vector_oracle": check_two_vector_gradient(max(args.dim, 2), args.seed),
    }
    results.update(check_loss_gradients(
        batch=args.batch, n=args.modalities, dim=max(args.dim, 2),
        negatives=args.negatives, seed=args.seed, tau=args.tau, lam=args.lam))
    pipeline = check_pipeline_gradient(
        dim=max(args.dim, 2), batch=args.batch, n=args.modalities,
        negatives=args.negatives, seed=args.seed, tau=args.tau, lam=args.lam)
    ok = True
    for name, err in results.items():
        passed = err < tol_component
        ok &= passed
        print(f"{name:18s} max rel error {err:.3e}  "
              f"[{'ok' if passed else 'FAIL'} < {tol_component:g}]")
    passed = pipeline < tol_pipeline
    ok &= passed
    print(f"{'pipeline':18s} max rel error {pipeline:.3e}  "
          f"[{'ok' if passed else 'FAIL'} < {tol_pipeline:g}]")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_noise(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_noise_experiment(args.seed, n_triplets=args.count,
                                  n_modalities=args.modalities, dim=args.dim)
    write_noise_report(out / "noise_report.csv", report)
    write_noise_summary(out / "noise_summary.json", report)
    slope, intercept, r2 = report.fit()
    for sigma, mean, std in zip(report.sigmas, report.means, report.stds):
        print(f"sigma={sigma:g}: mean abs error {mean:.6f} (std {std:.6f})")
    print(f"linear fit: slope={slope:.6f} intercept={intercept:.6f} r2={r2:.4f}")
    print(f"wrote {out / 'noise_report.csv'} and {out / 'noise_summary.json'}")
    return EXIT_OK


def cmd_align(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        loss=LossConfig(tau=args.tau, lam=args.lam, negatives=args.negatives,
                        neg_scheme=args.neg_scheme),
        seed=args.seed,
    )
    try:
        result = run_alignment_experiment(cfg, n_samples=args.count,
                                          n_modalities=args.modalities,
                                          dim=args.dim, dump_count=args.dump_count)
    except RuntimeError as exc:
        print(f"error: alignment run aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    meta = {"count": args.count, "modalities": args.modalities, "dim": args.dim,
            "epochs": args.epochs, "batch": args.batch, "lr": args.lr,
            "tau": args.tau, "lambda": args.lam, "negatives": args.negatives,
            "neg_scheme": args.neg_scheme, "dump_count": args.dump_count}
    write_embedding_dump(out / "embeddings_before.csv", result.before, args.seed, meta)
    write_embedding_dump(out / "embeddings_after.csv", result.after, args.seed, meta)
    write_history_csv(out / "history.csv", result.history, args.seed, meta)
    save_checkpoint(out / "checkpoint.npz", result.encoders, args.seed)
    print(f"epochs run: {len(result.history)}")
    print(f"mean positive joint cosine before: {result.mean_cos_before:.6f}")
    print(f"mean positive joint cosine after:  {result.mean_cos_after:.6f}")
    print(f"wrote embeddings_before.csv, embeddings_after.csv, history.csv, "
          f"checkpoint.npz in {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_runtime_benchmark(
        args.mode, args.seed, batch=args.batch, dim=args.dim,
        negatives=args.negatives, repetitions=args.repetitions,
        tau=args.tau, lam=args.lam)
    write_benchmark_csv(out / "bench.csv", records, args.seed, args.mode)
    print("loss  n   K    mean_ms   std_ms  median_ms")
    for r in records:
        print(f"{r.loss_kind:4s} {r.n_modalities:3d} {r.negatives:3d} "
              f"{r.mean_ms:9.3f} {r.std_ms:8.3f} {r.median_ms:10.3f}")
    print(f"wrote {out / 'bench.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    problem = _validate_common(args)
    if problem is not None:
        parser.error(problem)  # exits 2
    handlers = {
        "sim": cmd_sim,
        "checkgrad": cmd_checkgrad,
        "noise": cmd_noise,
        "align": cmd_align,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except DegenerateVectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
