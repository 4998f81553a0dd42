"""Contrastive losses built on the joint (Gram hypervolume angle) cosine.

Three losses are provided, each returning its value together with analytic
gradients with respect to every feature entry of the batch:

* ``gha_contrastive`` -- InfoNCE-style softmax cross-entropy where each
  "score" is the joint cosine of an n-tuple: one positive tuple per sample
  (its own n modality features) against K mixed negative tuples.
* ``angular_equilibrium`` -- variance of the pairwise cosines within each
  positive tuple; keeps all modality pairs equally aligned so no pair can
  collapse while another lags.
* ``gha_loss`` -- the combination: contrastive + lambda * equilibrium.

``dual_loss`` is the baseline it is benchmarked against: standard pairwise
InfoNCE with the classical cosine, summed without weights over all
C(n, 2) modality pairs.

Batches are (B, n, D) float arrays; negative assignments are integer index
arrays selecting which sample contributes each modality of each negative
tuple. All functions are deterministic and single-threaded; results are
identical to a per-sample sequential evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .similarity import EPS_COS, EPS_NORM, EPS_SIN, DegenerateVectorError

NEG_SCHEMES = ("anchor-fixed", "resample-all")


@dataclass(frozen=True)
class LossConfig:
    """Knobs shared by the joint and pairwise contrastive losses.

    Attributes:
        tau: softmax temperature, > 0.
        lam: weight of the angular-equilibrium term, >= 0.
        negatives: number K of negative tuples per sample, >= 1.
        neg_scheme: "anchor-fixed" keeps modality 0 of every negative tuple
            pinned to the sample itself and resamples the other modalities
            from the rest of the batch; "resample-all" redraws every
            modality index and only excludes the exact positive tuple.
    """

    tau: float = 0.005
    lam: float = 1.0
    negatives: int = 7
    neg_scheme: str = "anchor-fixed"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.negatives < 1:
            raise ValueError(f"negatives must be >= 1, got {self.negatives}")
        if self.neg_scheme not in NEG_SCHEMES:
            raise ValueError(f"neg_scheme must be one of {NEG_SCHEMES}")


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss terms and the per-feature gradient of the total."""

    l_contrastive: float
    l_angular: float
    l_total: float
    grads: np.ndarray


def modality_pairs(n: int) -> list[tuple[int, int]]:
    """Unordered modality pairs (m, k) with m < k, in row-major order."""
    return [(m, k) for m in range(n) for k in range(m + 1, n)]


# ---------------------------------------------------------------------------
# negative sampling


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _draw_excluding_self(rng, batch_size: int, shape) -> np.ndarray:
    """Uniform draws from [0, B) \\ {row index}, one row per sample."""
    own = np.arange(batch_size).reshape((batch_size,) + (1,) * (len(shape) - 1))
    draws = rng.integers(0, batch_size - 1, size=shape)
    return draws + (draws >= own)


def sample_negatives(batch_size: int, n_modalities: int, n_negatives: int,
                     rng, scheme: str = "anchor-fixed") -> np.ndarray:
    """Negative n-tuple assignment for a batch.

    Returns an int array of shape (B, K, n): entry [i, j, a] is the sample
    whose modality-a feature fills slot a of the j-th negative tuple of
    sample i. Under "anchor-fixed", modality 0 stays i and every other
    modality is drawn uniformly from the remaining B-1 samples, so no
    negative can equal the positive tuple. Under "resample-all" every
    modality is redrawn from the full batch and only the exact positive
    tuple is rejected. Draws are with replacement across the K slots.
    Deterministic for a given seed.
    """
    if batch_size < 2:
        raise ValueError(f"need batch_size >= 2 to form negatives, got {batch_size}")
    if n_modalities < 2:
        raise ValueError(f"need n_modalities >= 2, got {n_modalities}")
    if n_negatives < 1:
        raise ValueError(f"need n_negatives >= 1, got {n_negatives}")
    if scheme not in NEG_SCHEMES:
        raise ValueError(f"scheme must be one of {NEG_SCHEMES}")
    rng = _as_rng(rng)
    idx = np.empty((batch_size, n_negatives, n_modalities), dtype=np.int64)
    own = np.arange(batch_size)
    if scheme == "anchor-fixed":
        idx[:, :, 0] = own[:, None]
        for a in range(1, n_modalities):
            idx[:, :, a] = _draw_excluding_self(rng, batch_size, (batch_size, n_negatives))
    else:
        idx[:] = rng.integers(0, batch_size, size=idx.shape)
        collide = (idx == own[:, None, None]).all(axis=2)
        while collide.any():
            idx[collide] = rng.integers(0, batch_size, size=(int(collide.sum()), n_modalities))
            collide = (idx == own[:, None, None]).all(axis=2)
    return idx


def sample_pair_negatives(batch_size: int, n_modalities: int, n_negatives: int,
                          rng) -> np.ndarray:
    """Per-pair negative indices for the pairwise baseline.

    Returns an int array of shape (C(n, 2), B, K): for modality pair p and
    sample i, the K samples whose second-modality feature replaces sample
    i's own. Each draw is uniform over [0, B) \\ {i}. Deterministic for a
    given seed.
    """
    if batch_size < 2:
        raise ValueError(f"need batch_size >= 2 to form negatives, got {batch_size}")
    rng = _as_rng(rng)
    n_pairs = len(modality_pairs(n_modalities))
    out = np.empty((n_pairs, batch_size, n_negatives), dtype=np.int64)
    for p in range(n_pairs):
        out[p] = _draw_excluding_self(rng, batch_size, (batch_size, n_negatives))
    return out


# ---------------------------------------------------------------------------
# batch plumbing


def _validate_batch(features, min_batch: int = 1) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3:
        raise ValueError(f"expected a (B, n, D) batch, got shape {f.shape}")
    if f.shape[0] < min_batch:
        raise ValueError(f"need at least {min_batch} samples, got {f.shape[0]}")
    if f.shape[1] < 2:
        raise ValueError(f"need at least 2 modalities, got {f.shape[1]}")
    if not np.isfinite(f).all():
        raise ValueError("feature batch contains non-finite entries")
    norms = np.sqrt(np.einsum("bnd,bnd->bn", f, f))
    bad = np.argwhere(norms <= EPS_NORM)
    if bad.size:
        i, a = bad[0]
        raise DegenerateVectorError(int(a), float(norms[i, a]), sample=int(i))
    return f, norms


def _validate_assignment(idx, batch_size: int, n_modalities: int) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.ndim != 3 or idx.shape[0] != batch_size or idx.shape[2] != n_modalities:
        raise ValueError(
            f"expected a (B, K, n) = ({batch_size}, K, {n_modalities}) "
            f"negative assignment, got shape {idx.shape}"
        )
    if idx.shape[1] < 1:
        raise ValueError("need at least one negative tuple per sample")
    if idx.min() < 0 or idx.max() >= batch_size:
        raise ValueError("negative assignment indices out of range")
    own = np.arange(batch_size)
    if (idx == own[:, None, None]).all(axis=2).any():
        raise ValueError("a negative tuple equals its sample's positive tuple")
    return idx.astype(np.int64, copy=False)


def _softmax_ce(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cross-entropy of column 0 under a max-stabilized softmax.

    Returns per-row losses and the softmax probabilities.
    """
    m = logits.max(axis=-1, keepdims=True)
    z = np.exp(logits - m)
    denom = z.sum(axis=-1)
    loss = np.log(denom) + m[..., 0] - logits[..., 0]
    return loss, z / denom[..., None]


def contrastive_from_scores(cos_pos, cos_neg, tau: float) -> float:
    """Contrastive loss value from precomputed similarity scores.

    ``cos_pos`` has shape (B,) and ``cos_neg`` shape (B, K); the result is
    the batch mean of -log softmax(pos | pos, negs) at temperature tau.
    Exposed so closed-form cases can be checked without building a batch.
    """
    cos_pos = np.atleast_1d(np.asarray(cos_pos, dtype=np.float64))
    cos_neg = np.asarray(cos_neg, dtype=np.float64).reshape(cos_pos.shape[0], -1)
    logits = np.concatenate([cos_pos[:, None], cos_neg], axis=1) / tau
    loss, _ = _softmax_ce(logits)
    return float(loss.mean())


# ---------------------------------------------------------------------------
# batched joint cosine

# A tuple set is described by an index array (B, T, n): T tuples per
# sample, entry [b, t, a] naming the sample whose modality-a feature
# fills row a of tuple t.
#
# Three strategies for the Gram entries, chosen by tuple-set shape, each
# the measured-fastest in its regime:
#
# * few modalities, few tuples: gather each modality's selected rows and
#   take pairwise row dots with einsum; dets in closed form for n <= 3.
# * few modalities, many tuples: the gathered blocks outgrow the cache
#   and every pair rereads them from memory, so instead compute each
#   pair's full (B, B) dot table with one cache-blocked GEMM and pick
#   out the T needed entries per sample.
# * many modalities: materialize the (B, T, n, D) tuple tensor once and
#   run a stacked (n, D) x (D, n) Gram matmul plus a stacked determinant;
#   with fat slices the per-slice BLAS/LAPACK overhead amortizes and no
#   per-pair Python work remains.

_TABLE_MIN_T = 12
_TABLE_MAX_BATCH = 1024
_MATMUL_MIN_N = 6


def _index_columns(idx: np.ndarray) -> list[np.ndarray | None]:
    """Per-modality index columns; None marks an identity column
    (tuple row always taken from the sample itself)."""
    own = np.arange(idx.shape[0])[:, None]
    cols = []
    for a in range(idx.shape[2]):
        col = idx[:, :, a]
        identical = np.array_equal(col, np.broadcast_to(own, col.shape))
        cols.append(None if identical else col)
    return cols


def _pair_dots(f: np.ndarray, norms: np.ndarray, idx: np.ndarray):
    """Dot products between the selected rows of every modality pair.

    Returns (dots, nsq): ``dots[a, b]`` of shape (B, T) for a < b, and the
    squared norms of each modality's selected rows, broadcast to (B, T).
    """
    batch, t, n = idx.shape
    cols = _index_columns(idx)
    nsq = [
        np.broadcast_to(norms[:, a, None] ** 2, (batch, t)) if cols[a] is None
        else norms[cols[a], a] ** 2
        for a in range(n)
    ]
    dots = {}
    if t >= _TABLE_MIN_T and batch <= _TABLE_MAX_BATCH:
        mats = [np.ascontiguousarray(f[:, a, :]) for a in range(n)]
        own = np.arange(batch)
        for a in range(n):
            for b in range(a + 1, n):
                table = mats[a] @ mats[b].T
                ia, ib = cols[a], cols[b]
                if ia is None and ib is None:
                    d = table[own, own][:, None]
                elif ia is None:
                    d = np.take_along_axis(table, ib, axis=1)
                elif ib is None:
                    d = np.take_along_axis(table.T, ia, axis=1)
                else:
                    d = table[ia, ib]
                dots[a, b] = np.broadcast_to(d, (batch, t))
    else:
        rows = [f[:, None, a, :] if cols[a] is None else f[cols[a], a, :]
                for a in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                dots[a, b] = np.broadcast_to(
                    np.einsum("...d,...d->...", rows[a], rows[b]), (batch, t)
                )
    return dots, nsq


def _joint_cos_values(f: np.ndarray, norms: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Joint cosine of every tuple in the set; shape (B, T)."""
    batch, t, n = idx.shape
    if n >= _MATMUL_MIN_N:
        mods = np.arange(n)[None, None, :]
        rows = f[idx, mods, :]                                   # (B, T, n, D)
        g = rows @ rows.swapaxes(-1, -2)
        det = np.linalg.det(g)
        prod_nsq = np.prod(norms[idx, mods] ** 2, axis=-1)
        sin_sq = np.clip(det / prod_nsq, 0.0, 1.0)
        return np.sqrt(1.0 - sin_sq)
    dots, nsq = _pair_dots(f, norms, idx)
    if n == 2:
        det = nsq[0] * nsq[1] - dots[0, 1] ** 2
    elif n == 3:
        det = (
            nsq[0] * nsq[1] * nsq[2]
            + 2.0 * dots[0, 1] * dots[0, 2] * dots[1, 2]
            - nsq[0] * dots[1, 2] ** 2
            - nsq[1] * dots[0, 2] ** 2
            - nsq[2] * dots[0, 1] ** 2
        )
    else:
        g = np.empty((batch, t, n, n))
        for a in range(n):
            g[:, :, a, a] = nsq[a]
            for b in range(a + 1, n):
                g[:, :, a, b] = dots[a, b]
                g[:, :, b, a] = dots[a, b]
        det = np.linalg.det(g)
    prod_nsq = nsq[0].copy()
    for a in range(1, n):
        prod_nsq *= nsq[a]
    sin_sq = np.clip(det / prod_nsq, 0.0, 1.0)
    return np.sqrt(1.0 - sin_sq)


class _JointCosGrad:
    """Joint cosines of a tuple set plus everything needed to push an
    upstream weight per tuple back onto the batch features.

    Materializes the tuple rows and uses an eigendecomposition of each
    Gram matrix so the adjugate (and hence the gradient) stays defined for
    singular tuples, where a plain inverse would fail.
    """

    def __init__(self, f: np.ndarray, norms: np.ndarray, idx: np.ndarray):
        batch, t, n = idx.shape
        self.f_shape = f.shape
        self.idx = idx
        self.rows = f[idx, np.arange(n)[None, None, :], :]      # (B, T, n, D)
        self.norms = norms[idx, np.arange(n)[None, None, :]]    # (B, T, n)
        g = self.rows @ self.rows.swapaxes(-1, -2)
        eigvals, eigvecs = np.linalg.eigh(g)
        det = np.prod(eigvals, axis=-1)
        # adj(G) = sum_i (prod_{k != i} lambda_k) v_i v_i^T
        exprod = np.empty_like(eigvals)
        for i in range(n):
            keep = [k for k in range(n) if k != i]
            exprod[..., i] = np.prod(eigvals[..., keep], axis=-1)
        self.adj = (eigvecs * exprod[..., None, :]) @ eigvecs.swapaxes(-1, -2)
        self.prod_nsq = np.prod(self.norms**2, axis=-1)          # (B, T)
        self.sin_sq_raw = det / self.prod_nsq
        self.cos = np.sqrt(1.0 - np.clip(self.sin_sq_raw, 0.0, 1.0))

    def scatter(self, weights: np.ndarray) -> np.ndarray:
        """Accumulate weights[b, t] * dcos/drow into (B, n, D) feature grads."""
        s = np.clip(self.sin_sq_raw, 0.0, 1.0 - EPS_SIN)
        ddet = 2.0 * self.adj @ self.rows                        # (B, T, n, D)
        ds = ddet / self.prod_nsq[..., None, None] \
            - 2.0 * s[..., None, None] * self.rows / self.norms[..., None] ** 2
        denom = np.maximum(np.sqrt(1.0 - s), EPS_COS)
        dcos = ds / (-2.0 * denom[..., None, None])
        contrib = weights[..., None, None] * dcos
        grads = np.zeros(self.f_shape)
        for a in range(self.f_shape[1]):
            np.add.at(grads[:, a, :], self.idx[:, :, a].ravel(),
                      contrib[:, :, a, :].reshape(-1, self.f_shape[2]))
        return grads


def _full_tuple_index(batch_size: int, negatives: np.ndarray) -> np.ndarray:
    """Positive tuple (column 0) followed by the K negatives; (B, 1+K, n)."""
    n = negatives.shape[2]
    pos = np.broadcast_to(
        np.arange(batch_size)[:, None, None], (batch_size, 1, n)
    )
    return np.concatenate([pos, negatives], axis=1)


def batch_joint_cosine(features) -> np.ndarray:
    """Joint cosine of each sample's own n-tuple; shape (B,).

    Vectorized equivalent of calling ``similarity`` on every sample's
    (n, D) feature matrix and collecting ``cos_theta``.
    """
    f, norms = _validate_batch(features, min_batch=1)
    batch, n, _ = f.shape
    idx = np.broadcast_to(np.arange(batch)[:, None, None], (batch, 1, n))
    return _joint_cos_values(f, norms, np.ascontiguousarray(idx))[:, 0]


# ---------------------------------------------------------------------------
# losses


def gha_contrastive(features, negatives, cfg: LossConfig,
                    with_grad: bool = True) -> tuple[float, np.ndarray | None]:
    """Joint-tuple contrastive loss and its feature gradients.

    Each sample contributes -log softmax of its positive tuple's joint
    cosine against the K negative tuples' cosines, all divided by tau;
    the value is the batch mean. Logits are max-stabilized, so small
    temperatures (default 0.005) cannot overflow.

    Args:
        features: (B, n, D) batch, B >= 2.
        negatives: (B, K, n) assignment from ``sample_negatives``.
        cfg: loss configuration (tau is used here).
        with_grad: when False, skip gradients and return (value, None).

    Returns:
        (value, grads) with grads of shape (B, n, D).
    """
    f, norms = _validate_batch(features, min_batch=2)
    idx = _validate_assignment(negatives, f.shape[0], f.shape[1])
    return _contrastive_core(f, norms, idx, cfg, with_grad)


def _contrastive_core(f, norms, idx, cfg: LossConfig, with_grad: bool):
    full = _full_tuple_index(f.shape[0], idx)
    if not with_grad:
        cos = _joint_cos_values(f, norms, full)
        loss, _ = _softmax_ce(cos / cfg.tau)
        return float(loss.mean()), None
    ctx = _JointCosGrad(f, norms, full)
    loss, prob = _softmax_ce(ctx.cos / cfg.tau)
    weights = prob.copy()
    weights[:, 0] -= 1.0
    weights /= f.shape[0] * cfg.tau
    return float(loss.mean()), ctx.scatter(weights)


def angular_equilibrium(features, with_grad: bool = True) -> tuple[float, np.ndarray | None]:
    """Variance of the pairwise cosines within each sample's tuple.

    For sample i with pairwise cosines c_p over the C(n, 2) modality
    pairs and their mean c_bar, the per-sample term is the mean of
    (c_p - c_bar)^2; the loss is the batch mean. Zero exactly when all
    pairs of a tuple are equally aligned.
    """
    f, norms = _validate_batch(features, min_batch=1)
    return _angular_core(f, norms, with_grad)


def _angular_core(f, norms, with_grad: bool):
    batch, n, _ = f.shape
    pairs = modality_pairs(n)
    iu, ju = np.triu_indices(n, k=1)
    if n >= _MATMUL_MIN_N:
        g = f @ f.swapaxes(1, 2)
        c = g[:, iu, ju]
    else:
        c = np.empty((batch, len(pairs)))
        for p, (a, b) in enumerate(pairs):
            c[:, p] = np.einsum("bd,bd->b", f[:, a, :], f[:, b, :])
    c /= norms[:, iu] * norms[:, ju]                             # (B, P)
    dev = c - c.mean(axis=1, keepdims=True)
    value = float(np.mean(dev**2))
    if not with_grad:
        return value, None
    # d/dc_p of the per-sample mean-square deviation is 2 dev_p / P
    # (the mean-term contributions cancel because the deviations sum to 0).
    dldc = 2.0 * dev / (batch * len(pairs))
    grads = np.zeros_like(f)
    for p, (a, b) in enumerate(pairs):
        w = dldc[:, p, None]
        fa, fb = f[:, a, :], f[:, b, :]
        na, nb = norms[:, a, None], norms[:, b, None]
        cab = c[:, p, None]
        grads[:, a, :] += w * (fb / (na * nb) - cab * fa / na**2)
        grads[:, b, :] += w * (fa / (na * nb) - cab * fb / nb**2)
    return value, grads


def gha_loss(features, negatives, cfg: LossConfig,
             with_grad: bool = True) -> LossBreakdown:
    """Combined loss: contrastive term plus lambda times the equilibrium term.

    With lam == 0 the result (value and gradients) equals
    ``gha_contrastive`` exactly. The equilibrium term is evaluated on the
    positive tuples only. With ``with_grad=False`` the breakdown carries
    ``grads=None``.
    """
    f, norms = _validate_batch(features, min_batch=2)
    idx = _validate_assignment(negatives, f.shape[0], f.shape[1])
    l_c, g_c = _contrastive_core(f, norms, idx, cfg, with_grad)
    l_a, g_a = _angular_core(f, norms, with_grad)
    return LossBreakdown(
        l_contrastive=l_c,
        l_angular=l_a,
        l_total=l_c + cfg.lam * l_a,
        grads=g_c + cfg.lam * g_a if with_grad else None,
    )


def dual_loss(features, pair_negatives, cfg: LossConfig,
              with_grad: bool = True) -> tuple[float, np.ndarray | None]:
    """Pairwise InfoNCE baseline summed over all modality pairs.

    For each pair (m, k) of modalities, standard InfoNCE with the classical
    cosine: sample i's positive is cos(f_m^i, f_k^i) and its j-th negative
    is cos(f_m^i, f_k^q) with q = pair_negatives[p, i, j]. Pair losses are
    summed without weights.

    Args:
        features: (B, n, D) batch, B >= 2.
        pair_negatives: (C(n, 2), B, K) indices from ``sample_pair_negatives``.
        cfg: loss configuration (tau is used here).
        with_grad: when False, skip gradients and return (value, None).
    """
    f, norms = _validate_batch(features, min_batch=2)
    batch, n, dim = f.shape
    pairs = modality_pairs(n)
    neg = np.asarray(pair_negatives)
    if neg.shape[0] != len(pairs) or neg.ndim != 3 or neg.shape[1] != batch:
        raise ValueError(
            f"expected a ({len(pairs)}, {batch}, K) pair-negative index array, "
            f"got shape {neg.shape}"
        )
    if neg.min() < 0 or neg.max() >= batch:
        raise ValueError("pair-negative indices out of range")
    unit = f / norms[..., None]
    umats = [np.ascontiguousarray(unit[:, a, :]) for a in range(n)]
    value = 0.0
    grads = np.zeros_like(f) if with_grad else None
    for p, (m, k) in enumerate(pairs):
        um, uk = umats[m], umats[k]
        nidx = neg[p]
        pos = np.einsum("bd,bd->b", um, uk)
        neg_rows = uk[nidx]                                      # (B, K, D)
        negc = np.einsum("bd,bkd->bk", um, neg_rows)
        logits = np.concatenate([pos[:, None], negc], axis=1) / cfg.tau
        loss, prob = _softmax_ce(logits)
        value += float(loss.mean())
        if not with_grad:
            continue
        w = prob.copy()
        w[:, 0] -= 1.0
        w /= batch * cfg.tau
        # classical cosine chain rule: dc/df = (other_unit - c * own_unit) / ||f||
        w0 = w[:, 0, None]
        grads[:, m, :] += w0 * (uk - pos[:, None] * um) / norms[:, m, None]
        grads[:, k, :] += w0 * (um - pos[:, None] * uk) / norms[:, k, None]
        wn = w[:, 1:]
        grads[:, m, :] += (
            np.einsum("bk,bkd->bd", wn, neg_rows) - (wn * negc).sum(axis=1)[:, None] * um
        ) / norms[:, m, None]
        neg_side = wn[..., None] * (um[:, None, :] - negc[..., None] * neg_rows) \
            / norms[nidx, k][..., None]
        np.add.at(grads[:, k, :], nidx.ravel(), neg_side.reshape(-1, dim))
    return value, grads
