"""Experiment harness: data generation, noise, PCA, writers, benchmark."""

import json

import numpy as np
import pytest

from gramsim.encoders import TrainConfig
from gramsim.experiments import (
    BenchmarkRecord,
    NoiseReport,
    gen_gaussian_tuples,
    linear_fit,
    pca_project,
    quadratic_gain,
    run_alignment_experiment,
    run_noise_experiment,
    run_runtime_benchmark,
    write_benchmark_csv,
    write_embedding_dump,
    write_history_csv,
    write_noise_report,
    write_noise_summary,
)
from gramsim.losses import LossConfig, batch_joint_cosine


class TestGenGaussianTuples:
    def test_moments(self):
        data = gen_gaussian_tuples(2000, 2, 256, seed=0)  # ~1e6 values
        assert abs(data.mean()) < 0.01
        assert abs(data.var() - 1.0) < 0.01

    def test_shape_and_determinism(self):
        a = gen_gaussian_tuples(10, 3, 16, seed=5)
        b = gen_gaussian_tuples(10, 3, 16, seed=5)
        assert a.shape == (10, 3, 16)
        assert np.array_equal(a, b)

    def test_rejects_zero_count(self):
        with pytest.raises(ValueError):
            gen_gaussian_tuples(0, 3, 16, seed=0)


class TestFits:
    def test_linear_fit_recovers_exact_line(self):
        x = np.arange(10.0)
        slope, intercept, r2 = linear_fit(x, 3.0 * x + 1.0)
        assert slope == pytest.approx(3.0)
        assert intercept == pytest.approx(1.0)
        assert r2 == pytest.approx(1.0)

    def test_quadratic_gain_on_quadratic_data(self):
        x = np.arange(3.0, 13.0)
        assert quadratic_gain(x, x**2) > 100.0

    def test_quadratic_gain_near_one_on_linear_data(self):
        rng = np.random.default_rng(0)
        x = np.arange(3.0, 13.0)
        y = 2.0 * x + rng.normal(0, 0.01, x.size)
        assert quadratic_gain(x, y) < 2.0


class TestNoiseExperiment:
    def test_zero_sigma_gives_zero_error(self):
        report = run_noise_experiment(seed=1, sigmas=(0.0,), n_triplets=20, dim=64)
        np.testing.assert_array_equal(report.errors, 0.0)

    def test_report_structure(self):
        report = run_noise_experiment(seed=2, n_triplets=25, dim=64)
        assert report.errors.shape == (5, 25)
        assert (report.errors >= 0).all()
        assert report.means.shape == (5,)

    def test_deterministic(self):
        a = run_noise_experiment(seed=3, n_triplets=10, dim=32)
        b = run_noise_experiment(seed=3, n_triplets=10, dim=32)
        assert np.array_equal(a.errors, b.errors)

    def test_errors_grow_with_sigma_at_scale(self):
        report = run_noise_experiment(seed=4)
        assert (np.diff(report.means) > 0).all()
        assert report.fit()[2] >= 0.95


class TestPcaProject:
    def test_planar_points_keep_distances(self):
        rng = np.random.default_rng(5)
        basis, _ = np.linalg.qr(rng.standard_normal((64, 2)))
        flat = rng.standard_normal((30, 2)) * [4.0, 1.5]
        emb = flat @ basis.T + 3.0
        proj = pca_project(emb)
        d_in = np.linalg.norm(flat[:, None] - flat[None, :], axis=2)
        d_out = np.linalg.norm(proj[:, None] - proj[None, :], axis=2)
        assert np.abs(d_in - d_out).max() < 1e-6 * d_in.max()

    def test_duplicates_map_identically(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((10, 16))
        emb = np.vstack([pts, pts[3], pts[7]])
        proj = pca_project(emb)
        np.testing.assert_allclose(proj[10], proj[3], atol=1e-12)
        np.testing.assert_allclose(proj[11], proj[7], atol=1e-12)

    def test_matches_dense_eigensolver_reconstruction(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((40, 24)) * np.linspace(3, 0.1, 24)
        centered = x - x.mean(axis=0)
        proj = pca_project(x)
        cov = centered.T @ centered / centered.shape[0]
        eigvals, eigvecs = np.linalg.eigh(cov)
        top2 = eigvecs[:, ::-1][:, :2]
        ref = centered @ top2
        err_power = np.linalg.norm(centered - proj @ np.linalg.pinv(proj.T @ proj)
                                   @ proj.T @ centered)
        err_eigh = np.linalg.norm(centered - ref @ np.linalg.pinv(ref.T @ ref)
                                  @ ref.T @ centered)
        assert err_power == pytest.approx(err_eigh, rel=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((12, 8))
        assert np.array_equal(pca_project(x), pca_project(x))

    def test_rejects_fewer_than_three_points(self):
        with pytest.raises(ValueError):
            pca_project(np.ones((2, 5)))


class TestBenchmark:
    def test_record_structure_small(self):
        records = run_runtime_benchmark("by_negatives", seed=0, batch=16, dim=8,
                                        repetitions=2, warmup=1)
        kinds = {(r.loss_kind, r.negatives) for r in records}
        assert len(records) == 20
        assert all(r.repetitions == 2 for r in records)
        assert all(r.mean_ms > 0 for r in records)
        for k in range(5, 55, 5):
            assert ("gha", k) in kinds and ("dual", k) in kinds

    def test_by_modalities_covers_range(self):
        records = run_runtime_benchmark("by_modalities", seed=0, batch=8, dim=8,
                                        negatives=2, repetitions=1, warmup=0)
        ns = sorted({r.n_modalities for r in records if r.loss_kind == "gha"})
        assert ns == list(range(3, 13))

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            run_runtime_benchmark("sideways", seed=0)


class TestAlignmentExperiment:
    def test_small_run_outputs(self):
        cfg = TrainConfig(epochs=2, batch_size=10, learning_rate=1e-3,
                          loss=LossConfig(tau=0.2, negatives=2), seed=3)
        res = run_alignment_experiment(cfg, n_samples=30, n_modalities=3,
                                       dim=16, dump_count=7)
        assert res.before.raw.shape == (21, 16)
        assert res.after.raw.shape == (21, 16)
        assert res.before.coords.shape == (21, 2)
        assert list(res.before.sample_ids[:3]) == [0, 0, 0]
        assert list(res.before.modalities[:3]) == [0, 1, 2]
        assert len(res.history) == 2
        assert 0.0 <= res.mean_cos_before <= 1.0
        assert 0.0 <= res.mean_cos_after <= 1.0

    def test_deterministic_given_seed(self):
        cfg = TrainConfig(epochs=2, batch_size=10, learning_rate=1e-3,
                          loss=LossConfig(tau=0.2, negatives=2), seed=4)
        a = run_alignment_experiment(cfg, n_samples=24, dim=8)
        b = run_alignment_experiment(cfg, n_samples=24, dim=8)
        assert np.array_equal(a.before.raw, b.before.raw)
        assert np.array_equal(a.after.raw, b.after.raw)
        assert a.history == b.history

    def test_before_embeddings_match_training_start(self):
        # the dumped "before" encoders must be the ones training starts from:
        # an lr = 0 run must end with embeddings equal to its "before" dump
        cfg = TrainConfig(epochs=1, batch_size=10, learning_rate=0.0,
                          loss=LossConfig(tau=0.2, negatives=2), seed=5)
        res = run_alignment_experiment(cfg, n_samples=20, dim=8)
        np.testing.assert_array_equal(res.before.raw, res.after.raw)


class TestWriters:
    def test_noise_files_bytes_deterministic(self, tmp_path):
        report = run_noise_experiment(seed=6, n_triplets=5, dim=16)
        for name, writer in (("noise_report.csv", write_noise_report),
                             ("noise_summary.json", write_noise_summary)):
            p1 = tmp_path / f"a_{name}"
            p2 = tmp_path / f"b_{name}"
            writer(p1, report)
            writer(p2, report)
            assert p1.read_bytes() == p2.read_bytes()

    def test_noise_report_layout(self, tmp_path):
        report = run_noise_experiment(seed=7, n_triplets=4, dim=16)
        path = tmp_path / "noise_report.csv"
        write_noise_report(path, report)
        lines = path.read_text().splitlines()
        meta = [l for l in lines if l.startswith("#")]
        assert any("seed: 7" in l for l in meta)
        assert any("artifact_version" in l for l in meta)
        header = [l for l in lines if not l.startswith("#")][0]
        assert header == "sigma,triplet_id,abs_error"
        rows = [l for l in lines if not l.startswith("#")][1:]
        assert len(rows) == 5 * 4

    def test_noise_summary_is_valid_json_with_17_digits(self, tmp_path):
        report = run_noise_experiment(seed=8, n_triplets=4, dim=16)
        path = tmp_path / "noise_summary.json"
        write_noise_summary(path, report)
        payload = json.loads(path.read_text())
        assert payload["metadata"]["seed"] == 8
        assert len(payload["levels"]) == 5
        assert "r_squared" in payload["fit"]
        # round-trip of a mean through the file must be exact
        assert payload["levels"][0]["mean_abs_error"] == report.means[0]

    def test_embedding_dump_layout(self, tmp_path):
        cfg = TrainConfig(epochs=1, batch_size=10, learning_rate=1e-3,
                          loss=LossConfig(tau=0.2, negatives=2), seed=9)
        res = run_alignment_experiment(cfg, n_samples=20, dim=8)
        path = tmp_path / "embeddings_before.csv"
        write_embedding_dump(path, res.before, 9, {"dim": 8})
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0].split(",")[:4] == ["sample_id", "modality", "x", "y"]
        assert len(lines[0].split(",")) == 4 + 8
        assert len(lines) == 1 + 21

    def test_history_csv_layout(self, tmp_path):
        cfg = TrainConfig(epochs=3, batch_size=10, learning_rate=1e-3,
                          loss=LossConfig(tau=0.2, negatives=2), seed=10)
        res = run_alignment_experiment(cfg, n_samples=20, dim=8)
        path = tmp_path / "history.csv"
        write_history_csv(path, res.history, 10, {})
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "epoch,l_contrastive,l_angular,l_total,mean_cos_pos"
        assert len(lines) == 1 + 3

    def test_benchmark_csv_layout(self, tmp_path):
        records = [BenchmarkRecord("gha", 3, 5, 16, 8, 2, 1.5, 0.1, 1.4, 0.2),
                   BenchmarkRecord("dual", 3, 5, 16, 8, 2, 2.5, 0.2, 2.4, 0.3)]
        path = tmp_path / "bench.csv"
        write_benchmark_csv(path, records, 0, "by_negatives")
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == ("loss,n_modalities,negatives,batch,dim,repetitions,"
                            "mean_ms,std_ms,median_ms,sampling_ms")
        assert lines[1].startswith("gha,3,5,16,8,2,")
        # non-timing columns are byte-stable across reruns with other timings
        other = [BenchmarkRecord("gha", 3, 5, 16, 8, 2, 9.9, 0.5, 9.8, 0.1),
                 BenchmarkRecord("dual", 3, 5, 16, 8, 2, 8.8, 0.4, 8.7, 0.2)]
        path2 = tmp_path / "bench2.csv"
        write_benchmark_csv(path2, other, 0, "by_negatives")
        fixed = [",".join(l.split(",")[:6]) for l in path.read_text().splitlines()]
        fixed2 = [",".join(l.split(",")[:6]) for l in path2.read_text().splitlines()]
        assert fixed == fixed2
