"""Simulation experiments and their machine-readable outputs.

Three desk-scale experiments exercise the joint cosine and its losses:

* noise robustness -- how much white Gaussian noise of increasing standard
  deviation perturbs the joint cosine of random triplets;
* alignment -- trains the three MLP encoders on 4000 synthetic samples and
  dumps 2-D projections of selected embeddings before and after;
* runtime -- wall-clock comparison of the joint-tuple loss against the
  pairwise baseline while sweeping the negative count or the number of
  modalities.

Every experiment is deterministic given its seed; all CSV/JSON outputs
carry a metadata header (seed, config, artifact version) and serialize
floats with 17 significant digits so reruns are byte-identical. Benchmark
timings are the only non-reproducible fields.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .encoders import (
    Encoder,
    EpochStats,
    TrainConfig,
    encode_batch,
    init_alignment_encoders,
    train_alignment,
)
from .losses import (
    batch_joint_cosine,
    dual_loss,
    gha_loss,
    sample_negatives,
    sample_pair_negatives,
)
from .similarity import EPS_NORM

NOISE_SIGMAS = (0.01, 0.03, 0.05, 0.07, 0.1)
BENCH_NEGATIVE_COUNTS = tuple(range(5, 55, 5))
BENCH_MODALITY_COUNTS = tuple(range(3, 13))


def gen_gaussian_tuples(count: int, n_modalities: int, dim: int, seed) -> np.ndarray:
    """(count, n, D) array of independent standard normal draws."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.standard_normal((count, n_modalities, dim))


# ---------------------------------------------------------------------------
# fits


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through (x, y); returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def quadratic_gain(x, y) -> float:
    """How much a quadratic fit beats a linear one: SS_res(lin) / SS_res(quad)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lin = np.polyval(np.polyfit(x, y, 1), x)
    quad = np.polyval(np.polyfit(x, y, 2), x)
    ss_lin = float(((y - lin) ** 2).sum())
    ss_quad = float(((y - quad) ** 2).sum())
    return ss_lin / max(ss_quad, 1e-30)


# ---------------------------------------------------------------------------
# noise robustness


@dataclass(frozen=True)
class NoiseReport:
    """Absolute joint-cosine errors of noisy triplets, per noise level."""

    seed: int
    n_triplets: int
    n_modalities: int
    dim: int
    sigmas: tuple[float, ...]
    errors: np.ndarray          # (len(sigmas), n_triplets)

    @property
    def means(self) -> np.ndarray:
        return self.errors.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.errors.std(axis=1)

    def fit(self) -> tuple[float, float, float]:
        """(slope, intercept, R^2) of mean error versus sigma."""
        return linear_fit(self.sigmas, self.means)


def run_noise_experiment(seed: int, sigmas=NOISE_SIGMAS, n_triplets: int = 100,
                         n_modalities: int = 3, dim: int = 256) -> NoiseReport:
    """Perturb random Gaussian tuples with white noise and record the
    absolute change of the joint cosine.

    For each noise level, fresh noise scaled by sigma is added to every
    entry of the same clean tuples and the per-tuple absolute error
    |cos_noisy - cos_clean| is recorded.
    """
    rng = np.random.default_rng(seed)
    data = gen_gaussian_tuples(n_triplets, n_modalities, dim, rng)
    clean = batch_joint_cosine(data)
    errors = np.empty((len(sigmas), n_triplets))
    for row, sigma in enumerate(sigmas):
        noisy = data + sigma * rng.standard_normal(data.shape)
        errors[row] = np.abs(batch_joint_cosine(noisy) - clean)
    return NoiseReport(seed=seed, n_triplets=n_triplets, n_modalities=n_modalities,
                       dim=dim, sigmas=tuple(float(s) for s in sigmas), errors=errors)


# ---------------------------------------------------------------------------
# runtime comparison


@dataclass(frozen=True)
class BenchmarkRecord:
    """One timing row: a loss kind at one (n, K, B, D) configuration."""

    loss_kind: str              # "gha" | "dual"
    n_modalities: int
    negatives: int
    batch: int
    dim: int
    repetitions: int
    mean_ms: float
    std_ms: float
    median_ms: float
    sampling_ms: float          # negative-sampler time, kept out of the kernel timing


def _time_interleaved(fns: list, repetitions: int, warmup: int) -> list[np.ndarray]:
    """Per-call wall-clock times in ms, alternating between the callables
    each repetition so slow system drift hits all of them alike."""
    for _ in range(warmup):
        for fn in fns:
            fn()
    times = [np.empty(repetitions) for _ in fns]
    for i in range(repetitions):
        for fn, out in zip(fns, times):
            t0 = time.perf_counter()
            fn()
            out[i] = (time.perf_counter() - t0) * 1e3
    return times


def run_runtime_benchmark(mode: str, seed: int, batch: int = 256, dim: int = 256,
                          negatives: int = 7, repetitions: int = 10,
                          warmup: int = 2, tau: float = 0.005,
                          lam: float = 1.0) -> list[BenchmarkRecord]:
    """Time the forward joint-tuple loss against the pairwise baseline.

    ``mode`` selects the sweep: "by_negatives" fixes n = 3 and sweeps the
    negative count, "by_modalities" fixes the negative count and sweeps
    n over 3..12. Both loss kinds consume the same freshly generated data
    per configuration; each is timed over ``repetitions`` runs after
    ``warmup`` untimed runs, with BLAS pinned to one thread so the
    comparison measures algorithmic work. Negative sampling is timed
    separately and reported in its own column.
    """
    from .losses import LossConfig  # local import keeps module load light

    if mode == "by_negatives":
        configs = [(3, k) for k in BENCH_NEGATIVE_COUNTS]
    elif mode == "by_modalities":
        configs = [(n, negatives) for n in BENCH_MODALITY_COUNTS]
    else:
        raise ValueError(f"mode must be 'by_negatives' or 'by_modalities', got {mode!r}")
    rng = np.random.default_rng(seed)
    records: list[BenchmarkRecord] = []
    with threadpool_limits(limits=1):
        for n_mod, n_neg in configs:
            cfg = LossConfig(tau=tau, lam=lam, negatives=n_neg)
            features = gen_gaussian_tuples(batch, n_mod, dim, rng)

            t0 = time.perf_counter()
            neg = sample_negatives(batch, n_mod, n_neg, rng)
            gha_sampling_ms = (time.perf_counter() - t0) * 1e3
            t0 = time.perf_counter()
            pair_neg = sample_pair_negatives(batch, n_mod, n_neg, rng)
            dual_sampling_ms = (time.perf_counter() - t0) * 1e3

            def gha_forward():
                return gha_loss(features, neg, cfg, with_grad=False).l_total

            def dual_forward():
                value, _ = dual_loss(features, pair_neg, cfg, with_grad=False)
                return value

            gha_times, dual_times = _time_interleaved(
                [gha_forward, dual_forward], repetitions, warmup)
            for kind, times, sampling in (("gha", gha_times, gha_sampling_ms),
                                          ("dual", dual_times, dual_sampling_ms)):
                records.append(BenchmarkRecord(
                    kind, n_mod, n_neg, batch, dim, repetitions,
                    float(times.mean()), float(times.std()),
                    float(np.median(times)), sampling))
    return records


# ---------------------------------------------------------------------------
# PCA projection


def pca_project(embeddings) -> np.ndarray:
    """2-D projection onto the top two principal directions.

    Centers the data and finds each direction by power iteration on the
    covariance (tolerance 1e-9 on the iterate change, at most 1000
    iterations), deflating the first component before extracting the
    second. The starting vector is fixed, so the output is deterministic.

    Args:
        embeddings: (m, D) array with m >= 3.

    Returns:
        (m, 2) coordinates.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ValueError(f"need at least 3 vectors to project, got shape {x.shape}")
    centered = x - x.mean(axis=0)
    m, dim = centered.shape
    start_rng = np.random.default_rng(0x5EED)
    components: list[np.ndarray] = []
    for _ in range(2):
        v = start_rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        for comp in components:
            v -= (comp @ v) * comp
        for _ in range(1000):
            w = centered.T @ (centered @ v) / m
            for comp in components:
                w -= (comp @ w) * comp
            nrm = np.linalg.norm(w)
            if nrm < 1e-30:
                # zero variance left; any orthonormal direction projects to 0
                w = v
                break
            w /= nrm
            if np.linalg.norm(w - v) < 1e-9:
                v = w
                break
            v = w
        # deterministic sign: largest-magnitude entry positive
        peak = np.argmax(np.abs(v))
        if v[peak] < 0:
            v = -v
        components.append(v)
    return centered @ np.stack(components, axis=1)


# ---------------------------------------------------------------------------
# alignment experiment


@dataclass(frozen=True)
class EmbeddingDump:
    """Raw embeddings and their 2-D projection for selected samples."""

    sample_ids: np.ndarray      # (m,)
    modalities: np.ndarray      # (m,)
    coords: np.ndarray          # (m, 2) from pca_project over the pooled set
    raw: np.ndarray             # (m, D)


@dataclass(frozen=True)
class AlignmentResult:
    before: EmbeddingDump
    after: EmbeddingDump
    history: list[EpochStats]
    mean_cos_before: float
    mean_cos_after: float
    #: samples whose embedding collapsed to zero in some modality; they are
    #: excluded from the means (same policy as the training-step guard)
    dead_before: int = 0
    dead_after: int = 0
    encoders: list[Encoder] = field(repr=False, default=None)


def _mean_joint_cosine(feats: np.ndarray) -> tuple[float, int]:
    """Mean positive joint cosine over samples with all-nonzero embeddings."""
    norms = np.sqrt(np.einsum("bnd,bnd->bn", feats, feats))
    alive = (norms > EPS_NORM).all(axis=1)
    dead = int((~alive).sum())
    if not alive.any():
        raise RuntimeError("every sample has a zero embedding in some modality")
    return float(batch_joint_cosine(feats[alive]).mean()), dead


def _dump_embeddings(encoders: list[Encoder], data: np.ndarray,
                     sample_ids: np.ndarray) -> EmbeddingDump:
    feats = encode_batch(encoders, data[sample_ids])        # (m, n, D)
    m, n_mod, dim = feats.shape
    raw = feats.reshape(m * n_mod, dim)
    ids = np.repeat(sample_ids, n_mod)
    mods = np.tile(np.arange(n_mod), m)
    return EmbeddingDump(sample_ids=ids, modalities=mods,
                         coords=pca_project(raw), raw=raw)


def run_alignment_experiment(cfg: TrainConfig, n_samples: int = 4000,
                             n_modalities: int = 3, dim: int = 256,
                             dump_count: int = 7) -> AlignmentResult:
    """Train the per-modality encoders on synthetic tuples and dump
    embeddings of ``dump_count`` samples before and after training.

    The dataset is standard normal, generated from ``cfg.seed``; training
    consumes its own generator seeded identically, so the whole experiment
    is reproducible from the single seed. Mean positive joint cosines are
    evaluated over the full dataset with the initial and final encoders.
    """
    data = gen_gaussian_tuples(n_samples, n_modalities, dim, cfg.seed)
    # same stream position as inside train_alignment, so the "before"
    # encoders are bit-identical to the ones training starts from
    init_rng = np.random.default_rng(cfg.seed)
    encoders_before = init_alignment_encoders(n_modalities, dim, init_rng)
    dump_ids = np.arange(min(dump_count, n_samples))
    before = _dump_embeddings(encoders_before, data, dump_ids)
    mean_before, dead_before = _mean_joint_cosine(encode_batch(encoders_before, data))
    encoders, history = train_alignment(data, cfg)
    after = _dump_embeddings(encoders, data, dump_ids)
    mean_after, dead_after = _mean_joint_cosine(encode_batch(encoders, data))
    return AlignmentResult(before=before, after=after, history=history,
                           mean_cos_before=mean_before, mean_cos_after=mean_after,
                           dead_before=dead_before, dead_after=dead_after,
                           encoders=encoders)


# ---------------------------------------------------------------------------
# serialization: CSV/JSON with metadata headers and 17-digit floats


def _f17(x) -> str:
    return format(float(x), ".17g")


def _meta_lines(seed, config: dict) -> list[str]:
    cfg = " ".join(f"{k}={v}" for k, v in config.items())
    return [
        f"# seed: {seed}",
        f"# config: {cfg}",
        f"# artifact_version: {__version__}",
    ]


def _write_csv(path, seed, config: dict, header: list[str],
               rows: list[list[str]]) -> None:
    lines = _meta_lines(seed, config) + [",".join(header)]
    lines += [",".join(row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _json_text(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  "{k}": {_json_text(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _f17(obj)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(obj)}")


def write_noise_report(path, report: NoiseReport) -> None:
    """Per-triplet absolute errors: columns sigma, triplet_id, abs_error."""
    rows = []
    for row, sigma in enumerate(report.sigmas):
        for t in range(report.n_triplets):
            rows.append([_f17(sigma), str(t), _f17(report.errors[row, t])])
    _write_csv(path, report.seed,
               {"n_triplets": report.n_triplets, "n_modalities": report.n_modalities,
                "dim": report.dim, "sigmas": ";".join(map(_f17, report.sigmas))},
               ["sigma", "triplet_id", "abs_error"], rows)


def write_noise_summary(path, report: NoiseReport) -> None:
    """Per-sigma mean/std plus the linear fit of mean error vs sigma."""
    slope, intercept, r2 = report.fit()
    means = report.means
    obj = {
        "metadata": {
            "seed": report.seed,
            "config": {"n_triplets": report.n_triplets,
                       "n_modalities": report.n_modalities, "dim": report.dim},
            "artifact_version": __version__,
        },
        "levels": [
            {"sigma": s, "mean_abs_error": float(means[i]),
             "std_abs_error": float(report.stds[i])}
            for i, s in enumerate(report.sigmas)
        ],
        "fit": {"slope": slope, "intercept": intercept, "r_squared": r2},
        "strictly_increasing": bool(np.all(np.diff(means) > 0)),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text(obj) + "\n")


def write_benchmark_csv(path, records: list[BenchmarkRecord], seed, mode: str) -> None:
    rows = [
        [r.loss_kind, str(r.n_modalities), str(r.negatives), str(r.batch),
         str(r.dim), str(r.repetitions), _f17(r.mean_ms), _f17(r.std_ms),
         _f17(r.median_ms), _f17(r.sampling_ms)]
        for r in records
    ]
    _write_csv(path, seed, {"mode": mode, "threads": 1},
               ["loss", "n_modalities", "negatives", "batch", "dim", "repetitions",
                "mean_ms", "std_ms", "median_ms", "sampling_ms"], rows)


def write_embedding_dump(path, dump: EmbeddingDump, seed, config: dict) -> None:
    dim = dump.raw.shape[1]
    header = ["sample_id", "modality", "x", "y"] + [f"e{j}" for j in range(dim)]
    rows = []
    for i in range(dump.raw.shape[0]):
        rows.append([str(int(dump.sample_ids[i])), str(int(dump.modalities[i])),
                     _f17(dump.coords[i, 0]), _f17(dump.coords[i, 1])]
                    + [_f17(v) for v in dump.raw[i]])
    _write_csv(path, seed, config, header, rows)


def write_history_csv(path, history: list[EpochStats], seed, config: dict) -> None:
    rows = [[str(s.epoch), _f17(s.l_contrastive), _f17(s.l_angular),
             _f17(s.l_total), _f17(s.mean_cos_pos)] for s in history]
    _write_csv(path, seed, config,
               ["epoch", "l_contrastive", "l_angular", "l_total", "mean_cos_pos"],
               rows)
