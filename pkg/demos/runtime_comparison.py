"""Wall-clock cost: one joint loss versus a pairwise loss per modality pair.

The joint contrastive loss scores each sample with a single n-vector
similarity per positive/negative tuple; the pairwise baseline runs a full
InfoNCE per modality pair and sums the C(n, 2) losses. Both are timed on
identical data, interleaved repetition by repetition, with BLAS pinned to
one thread. Timings land in bench.csv; sampling time has its own column.
"""

from pathlib import Path

from gramsim.experiments import run_runtime_benchmark, write_benchmark_csv

out = Path("out/bench")
out.mkdir(parents=True, exist_ok=True)

print("sweep 1: negative count at n=3 modalities (B=256, D=256)")
records = run_runtime_benchmark("by_negatives", seed=0)
write_benchmark_csv(out / "bench_by_negatives.csv", records, 0, "by_negatives")
gha = {r.negatives: r for r in records if r.loss_kind == "gha"}
dual = {r.negatives: r for r in records if r.loss_kind == "dual"}
print("  K    joint ms   pairwise ms   joint/pairwise")
for k in sorted(gha):
    print(f"  {k:3d}  {gha[k].mean_ms:9.2f}  {dual[k].mean_ms:12.2f}"
          f"   {gha[k].mean_ms / dual[k].mean_ms:14.2f}")

print("\nsweep 2: modality count at K=7 negatives (B=256, D=256)")
records = run_runtime_benchmark("by_modalities", seed=1)
write_benchmark_csv(out / "bench_by_modalities.csv", records, 1, "by_modalities")
gha = {r.n_modalities: r for r in records if r.loss_kind == "gha"}
dual = {r.n_modalities: r for r in records if r.loss_kind == "dual"}
print("  n    joint ms   pairwise ms   pairwise/joint")
for n in sorted(gha):
    print(f"  {n:3d}  {gha[n].mean_ms:9.2f}  {dual[n].mean_ms:12.2f}"
          f"   {dual[n].mean_ms / gha[n].mean_ms:14.2f}")

print(f"\nwrote CSVs to {out}/ (mean/std/median over 10 repetitions, "
      "2 warmups, single BLAS thread)")
