"""Acceptance suite: one test per release criterion, at stated tolerances.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion. Budgets are asserted alongside the numeric tolerances. The
heavy criteria (full-scale alignment, runtime comparison) run exactly as
shipped; nothing is scaled down except where a criterion explicitly
permits it.
"""

import time

import numpy as np
import pytest

from gramsim.cli import main as cli_main
from gramsim.encoders import TrainConfig
from gramsim.experiments import (
    linear_fit,
    quadratic_gain,
    run_alignment_experiment,
    run_noise_experiment,
    run_runtime_benchmark,
    write_noise_report,
    write_noise_summary,
)
from gramsim.gradcheck import (
    check_loss_gradients,
    check_pipeline_gradient,
    check_similarity_gradient,
)
from gramsim.linalg import random_orthogonal
from gramsim.losses import LossConfig, angular_equilibrium, contrastive_from_scores
from gramsim.similarity import cos_sq_from_pairwise, joint_cosine, similarity

REPORTED_NOISE_MEANS = {0.01: 0.0006, 0.03: 0.0022, 0.05: 0.0035,
                        0.07: 0.0048, 0.1: 0.0064}


def _announce(number: int, name: str, started: float, budget: float):
    elapsed = time.perf_counter() - started
    assert elapsed < budget, f"criterion {number} exceeded {budget}s ({elapsed:.1f}s)"
    print(f"\nACCEPTANCE {number} ({name}): PASS  [{elapsed:.1f}s < {budget:.0f}s]")


def test_criterion_1_noise_robustness():
    started = time.perf_counter()
    report = run_noise_experiment(seed=42)
    assert report.errors.shape == (5, 100)
    for sigma, mean in zip(report.sigmas, report.means):
        reported = REPORTED_NOISE_MEANS[sigma]
        assert reported / 2 <= mean <= reported * 2, \
            f"sigma={sigma}: mean {mean:.5f} outside factor 2 of {reported}"
    assert (np.diff(report.means) > 0).all(), "means not strictly increasing"
    _, _, r2 = report.fit()
    assert r2 >= 0.95
    _announce(1, "noise robustness", started, 10.0)


def test_criterion_2_identity_and_invariance_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)

    # determinant path vs the pairwise closed form, 1000 triplets
    for _ in range(1000):
        m = rng.standard_normal((3, int(rng.integers(4, 65))))
        res = similarity(m)
        assert abs(res.cos_theta**2 - cos_sq_from_pairwise(m[0], m[1], m[2])) < 1e-9

    # range over 10^4 random tuples
    dims = np.array([4, 16, 64, 128, 256, 512])
    for _ in range(10_000):
        m = rng.standard_normal((int(rng.integers(2, 9)),
                                 int(rng.choice(dims[:4]))))
        assert 0.0 <= joint_cosine(m) <= 1.0

    # invariances over >= 1000 tuples spanning n in 2..8 and D up to 512
    rotations = {int(d): random_orthogonal(int(d), 7 + d) for d in dims}
    for i in range(1000):
        n = int(rng.integers(2, 9))
        dim = int(rng.choice(dims))
        m = rng.standard_normal((n, dim))
        base = joint_cosine(m)
        assert abs(base - joint_cosine(m @ rotations[dim].T)) < 1e-8
        assert abs(base - joint_cosine(m[rng.permutation(n)])) < 1e-12
        flipped = m.copy()
        flipped[int(rng.integers(n))] *= -1.0
        assert abs(base - joint_cosine(flipped)) < 1e-12
        scaled = m.copy()
        scaled[int(rng.integers(n))] *= float(rng.uniform(0.2, 5.0))
        assert abs(base - joint_cosine(scaled)) < 1e-10

    # n = 2 downward compatibility on nonnegative vectors
    for _ in range(1000):
        m = np.abs(rng.standard_normal((2, int(rng.integers(2, 65)))))
        classical = float(m[0] @ m[1] / (np.linalg.norm(m[0]) * np.linalg.norm(m[1])))
        assert abs(joint_cosine(m) - classical) < 1e-12

    # extremal cases
    for _ in range(200):
        base = rng.standard_normal((2, 48))
        dependent = np.vstack([base, rng.standard_normal(2) @ base])
        assert abs(joint_cosine(dependent) - 1.0) < 1e-6
        n = int(rng.integers(2, 7))
        q, _ = np.linalg.qr(rng.standard_normal((48, n)))
        orthogonal = q.T * rng.uniform(0.5, 2.0, size=(n, 1))
        assert abs(joint_cosine(orthogonal)) < 1e-9
    _announce(2, "identity/oracle suite", started, 30.0)


def test_criterion_3_gradient_correctness():
    started = time.perf_counter()
    err = check_similarity_gradient(n=3, dim=16, seed=0)
    assert err < 1e-4, f"joint cosine gradient: {err}"
    errs = check_loss_gradients(batch=4, n=3, dim=8, negatives=2, seed=0)
    for name in ("contrastive", "angular", "combined", "dual"):
        assert errs[name] < 1e-4, f"{name} gradient: {errs[name]}"
    pipeline = check_pipeline_gradient(dim=8, batch=4, n=3, negatives=2, seed=0)
    assert pipeline < 1e-3, f"pipeline gradient: {pipeline}"
    _announce(3, "gradient correctness", started, 60.0)


def test_criterion_4_alignment_simulation():
    started = time.perf_counter()
    result = run_alignment_experiment(TrainConfig(seed=0))
    assert result.mean_cos_after >= 0.9, result.mean_cos_after
    assert result.mean_cos_after >= result.mean_cos_before + 0.2
    assert result.history[-1].l_total < result.history[0].l_total
    print(f"\n  alignment: cos {result.mean_cos_before:.4f} -> "
          f"{result.mean_cos_after:.4f} over {len(result.history)} epochs "
          f"(dead samples after: {result.dead_after})")
    _announce(4, "alignment simulation", started, 900.0)


def test_criterion_5_runtime_comparison():
    started = time.perf_counter()
    # more repetitions than the shipped default of 10: same means, tighter
    # estimates against scheduler noise on a shared box
    by_k = run_runtime_benchmark("by_negatives", seed=5, repetitions=40, warmup=3)
    gha = {r.negatives: r.mean_ms for r in by_k if r.loss_kind == "gha"}
    dual = {r.negatives: r.mean_ms for r in by_k if r.loss_kind == "dual"}
    print("\n  K sweep (gha_ms / dual_ms):")
    for k in sorted(gha):
        print(f"    K={k:2d}: {gha[k]:7.2f} / {dual[k]:7.2f}")
    for k in sorted(gha):
        assert gha[k] < dual[k], f"joint loss not faster at K={k}"

    by_n = run_runtime_benchmark("by_modalities", seed=6, repetitions=25, warmup=3)
    gham = {r.n_modalities: r.mean_ms for r in by_n if r.loss_kind == "gha"}
    dualm = {r.n_modalities: r.mean_ms for r in by_n if r.loss_kind == "dual"}
    ns = sorted(gham)
    print("  n sweep (gha_ms / dual_ms):")
    for n in ns:
        print(f"    n={n:2d}: {gham[n]:7.2f} / {dualm[n]:7.2f}")
    ratio3 = dualm[3] / gham[3]
    ratio12 = dualm[12] / gham[12]
    assert ratio12 > ratio3, f"ratio at n=12 ({ratio12:.2f}) <= n=3 ({ratio3:.2f})"
    _, _, r2 = linear_fit(ns, [gham[n] for n in ns])
    assert r2 >= 0.9, f"joint-loss runtime not linear enough in n: R^2={r2:.3f}"
    gain = quadratic_gain(ns, [dualm[n] for n in ns])
    assert gain >= 2.0, f"pairwise baseline not superlinear: gain={gain:.2f}"
    _announce(5, "runtime comparison", started, 300.0)


def test_criterion_6_loss_closed_forms():
    started = time.perf_counter()
    # uniform logits
    for k in (1, 7):
        value = contrastive_from_scores([0.3, 0.3], 0.3 * np.ones((2, k)), tau=0.005)
        assert abs(value - np.log(k + 1)) < 1e-12
    # single positive at 1 against single negative at 0 with tau = 1
    value = contrastive_from_scores([1.0], [[0.0]], tau=1.0)
    assert abs(value - np.log1p(np.exp(-1.0))) < 1e-12
    # pairwise cosines (1, 0, 0) give equilibrium value 2/9
    feats = np.array([[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    ang, _ = angular_equilibrium(feats)
    assert abs(ang - 2.0 / 9.0) < 1e-12
    _announce(6, "loss closed forms", started, 30.0)


def test_criterion_7_determinism(tmp_path):
    started = time.perf_counter()

    # noise experiment at full scale, twice
    dirs = []
    for tag in ("first", "second"):
        out = tmp_path / f"noise_{tag}"
        out.mkdir()
        report = run_noise_experiment(seed=123)
        write_noise_report(out / "noise_report.csv", report)
        write_noise_summary(out / "noise_summary.json", report)
        dirs.append(out)
    for name in ("noise_report.csv", "noise_summary.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    # alignment experiment through the CLI, twice (reduced size; the
    # determinism contract is about reruns, not about scale)
    align_dirs = []
    for tag in ("first", "second"):
        out = tmp_path / f"align_{tag}"
        code = cli_main(["align", "--seed", "9", "--count", "60", "--dim", "16",
                         "--epochs", "3", "--batch", "20", "--negatives", "3",
                         "--out", str(out)])
        assert code == 0
        align_dirs.append(out)
    for name in ("embeddings_before.csv", "embeddings_after.csv", "history.csv"):
        assert (align_dirs[0] / name).read_bytes() == (align_dirs[1] / name).read_bytes()

    # benchmark reruns agree on everything except the timing columns
    bench_dirs = []
    for tag in ("first", "second"):
        out = tmp_path / f"bench_{tag}"
        code = cli_main(["bench", "--mode", "by_negatives", "--seed", "4",
                         "--batch", "8", "--dim", "8", "--repetitions", "2",
                         "--out", str(out)])
        assert code == 0
        bench_dirs.append(out)
    timing_cols = slice(0, 6)
    for a, b in zip((bench_dirs[0] / "bench.csv").read_text().splitlines(),
                    (bench_dirs[1] / "bench.csv").read_text().splitlines()):
        assert a.split(",")[timing_cols] == b.split(",")[timing_cols]
    _announce(7, "determinism", started, 120.0)
