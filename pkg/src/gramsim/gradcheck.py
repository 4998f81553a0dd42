"""Finite-difference verification of every analytic gradient in the package.

Central differences with a fixed step are compared entry-wise against the
analytic gradients; the reported figure is the worst relative error, with
tiny entries compared against a floor proportional to the largest gradient
so that near-zero entries cannot dominate the ratio.
"""

from __future__ import annotations

import numpy as np

from .encoders import encoder_backward, encoder_forward, init_alignment_encoders
from .losses import (
    LossConfig,
    angular_equilibrium,
    dual_loss,
    gha_contrastive,
    gha_loss,
    sample_negatives,
    sample_pair_negatives,
)
from .similarity import similarity, similarity_gradient

FD_STEP = 1e-6


def central_difference(fn, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Gradient of the scalar function ``fn`` at ``x`` by central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst entry-wise relative deviation between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float((np.abs(analytic - numeric) / denom).max())


def check_similarity_gradient(n: int = 3, dim: int = 16, seed: int = 0) -> float:
    """Max relative FD error of the joint-cosine gradient on a random tuple."""
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, dim))
    _, grad = similarity_gradient(m)
    numeric = central_difference(lambda x: similarity(x).cos_theta, m.copy())
    return max_rel_error(grad, numeric)


def check_loss_gradients(batch: int = 4, n: int = 3, dim: int = 8,
                         negatives: int = 2, seed: int = 0,
                         tau: float = 0.05, lam: float = 1.0) -> dict[str, float]:
    """Max relative FD errors of the contrastive, equilibrium, combined,
    and pairwise-baseline loss gradients on one small random batch."""
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((batch, n, dim))
    cfg = LossConfig(tau=tau, lam=lam, negatives=negatives)
    neg = sample_negatives(batch, n, negatives, rng)
    pneg = sample_pair_negatives(batch, n, negatives, rng)
    out = {}
    _, g_c = gha_contrastive(feats, neg, cfg)
    numeric = central_difference(
        lambda x: gha_contrastive(x, neg, cfg, with_grad=False)[0], feats.copy())
    out["contrastive"] = max_rel_error(g_c, numeric)
    _, g_a = angular_equilibrium(feats)
    numeric = central_difference(
        lambda x: angular_equilibrium(x, with_grad=False)[0], feats.copy())
    out["angular"] = max_rel_error(g_a, numeric)
    breakdown = gha_loss(feats, neg, cfg)
    numeric = central_difference(
        lambda x: gha_loss(x, neg, cfg, with_grad=False).l_total, feats.copy())
    out["combined"] = max_rel_error(breakdown.grads, numeric)
    _, g_d = dual_loss(feats, pneg, cfg)
    numeric = central_difference(
        lambda x: dual_loss(x, pneg, cfg, with_grad=False)[0], feats.copy())
    out["dual"] = max_rel_error(g_d, numeric)
    return out


def check_pipeline_gradient(dim: int = 8, batch: int = 4, n: int = 3,
                            negatives: int = 2, seed: int = 0,
                            tau: float = 0.05, lam: float = 1.0) -> float:
    """Max relative FD error of the combined loss gradient with respect to
    every encoder parameter, through forward, loss, and backward."""
    rng = np.random.default_rng(seed)
    encoders = init_alignment_encoders(n, dim, rng)
    x = rng.standard_normal((batch, n, dim))
    cfg = LossConfig(tau=tau, lam=lam, negatives=negatives)
    neg = sample_negatives(batch, n, negatives, rng)

    def loss_value() -> float:
        feats = np.stack(
            [encoder_forward(enc, x[:, a, :])[0] for a, enc in enumerate(encoders)],
            axis=1)
        return gha_loss(feats, neg, cfg, with_grad=False).l_total

    outs, caches = [], []
    for a, enc in enumerate(encoders):
        z, cache = encoder_forward(enc, x[:, a, :])
        outs.append(z)
        caches.append(cache)
    breakdown = gha_loss(np.stack(outs, axis=1), neg, cfg)
    worst = 0.0
    for a, enc in enumerate(encoders):
        dw, db, _ = encoder_backward(enc, caches[a], breakdown.grads[:, a, :])
        analytic = dw + db
        for param, grad in zip(enc.params, analytic):
            numeric = np.empty_like(param)
            flat = param.ravel()
            nflat = numeric.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + FD_STEP
                hi = loss_value()
                flat[i] = orig - FD_STEP
                lo = loss_value()
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * FD_STEP)
            worst = max(worst, max_rel_error(grad, numeric))
    return worst


def check_two_vector_gradient(dim: int = 8, seed: int = 0) -> float:
    """Compare the n = 2 joint-cosine gradient against the hand-derived
    gradient of the absolute classical cosine."""
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((2, dim))
    _, grad = similarity_gradient(m)
    f, g = m[0], m[1]
    nf, ng = np.linalg.norm(f), np.linalg.norm(g)
    c = float(f @ g / (nf * ng))
    sign = 1.0 if c >= 0 else -1.0
    oracle = np.stack([
        sign * (g / (nf * ng) - c * f / nf**2),
        sign * (f / (nf * ng) - c * g / ng**2),
    ])
    return max_rel_error(grad, oracle)
