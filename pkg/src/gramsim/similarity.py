"""Joint cosine similarity of n vectors from the Gram-determinant angle.

For an (n, D) matrix whose rows are feature vectors, the squared volume of
the parallelotope they span equals the determinant of their Gram matrix.
Normalizing by the product of squared row norms turns that volume into the
sine of a generalized angle:

    sin^2 = det(G) / prod_i ||f_i||^2,    cos = sqrt(1 - sin^2)

The cosine is 1 exactly when the rows are linearly dependent and 0 when
they are pairwise orthogonal (n <= D), so it generalizes the absolute
planar cosine (the n = 2 case) to any number of vectors. Because the
construction squares before taking roots, negating any single row leaves
the score unchanged; callers that need sign sensitivity must constrain
features to be nonnegative (e.g. a final ReLU).

``similarity_gradient`` returns the analytic gradient of the cosine with
respect to every row, computed through the adjugate so that singular Gram
matrices (collinear rows) need no matrix solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import adjugate, det_psd, gram

#: Rows with Euclidean norm at or below this are rejected: the angle is
#: undefined when the normalizing product vanishes.
EPS_NORM = 1e-12

#: Gradient-path clamp: sin^2 is kept at or below 1 - EPS_SIN before the
#: square root so the cosine in the denominator stays positive.
EPS_SIN = 1e-12

#: Floor on the cosine appearing in the gradient denominator; bounds the
#: gradient near orthogonal configurations.
EPS_COS = 1e-6


class DegenerateVectorError(ValueError):
    """A feature vector has (numerically) zero norm, so the angle is undefined.

    ``index`` is the offending row (modality); ``sample`` is set when the
    vector came from a batch.
    """

    def __init__(self, index: int, norm: float, sample: int | None = None):
        self.index = index
        self.norm = norm
        self.sample = sample
        where = f"feature vector {index}" if sample is None \
            else f"sample {sample}, modality {index}"
        super().__init__(
            f"{where} has norm {norm:.3e} <= {EPS_NORM:.0e}; "
            "joint similarity is undefined for zero vectors"
        )


@dataclass(frozen=True)
class SimilarityResult:
    """Everything computed while scoring one n-tuple of vectors.

    Attributes:
        det_gram: determinant of the Gram matrix, clamped to >= 0.
        hypervolume: sqrt(det_gram), the n-volume spanned by the rows.
        norms: Euclidean norm of each row, shape (n,).
        sin_sq: det_gram / prod(norms^2), clamped into [0, 1].
        cos_theta: sqrt(1 - sin_sq), the joint cosine similarity in [0, 1].
        theta: generalized angle arcsin(sqrt(sin_sq)) in [0, pi/2] radians.
        pairwise_cos: plain cosine of each row pair (i < j), row-major
            pair order, each clamped into [-1, 1].
    """

    det_gram: float
    hypervolume: float
    norms: np.ndarray
    sin_sq: float
    cos_theta: float
    theta: float
    pairwise_cos: np.ndarray


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the upper-triangle pairs (i < j) of an n x n matrix."""
    return np.triu_indices(n, k=1)


def _validated_rows(rows) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(rows, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError(f"expected an (n, D) matrix with n >= 2, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("feature matrix contains non-finite entries")
    norms = np.sqrt(np.einsum("id,id->i", m, m))
    for i, nrm in enumerate(norms):
        if nrm <= EPS_NORM:
            raise DegenerateVectorError(i, float(nrm))
    return m, norms


def similarity(rows) -> SimilarityResult:
    """Joint cosine similarity of the rows of an (n, D) matrix.

    The cosine is evaluated through the eigenvalues of the zero-diagonal
    correlation residual E (the unit-normalized Gram matrix minus the
    identity): since det(G) / prod ||f_i||^2 = det(I + E) = prod(1 + w_i),

        cos^2 = 1 - det(I + E) = -expm1(sum_i log1p(w_i))

    which is free of the catastrophic cancellation a literal
    ``sqrt(1 - det/prod)`` suffers near orthogonality. Near-orthogonal
    tuples (all |w_i| tiny) come out at the 1e-14 level instead of the
    1e-8 the naive route leaves behind, and linearly dependent tuples
    (some w_i = -1) give exactly 1.

    Args:
        rows: matrix whose n >= 2 rows are the vectors to compare; every
            row must have norm above ``EPS_NORM``.

    Raises:
        DegenerateVectorError: if any row has numerically zero norm.
    """
    m, norms = _validated_rows(rows)
    g = gram(m)
    det_g = det_psd(g)
    residual = g / np.outer(norms, norms)
    np.fill_diagonal(residual, 0.0)
    eigvals = np.linalg.eigvalsh(residual)
    if eigvals[0] <= -1.0:
        # det(I + E) <= 0 only when a correlation eigenvalue hits zero:
        # linearly dependent rows up to floating point
        cos_sq = 1.0
    else:
        cos_sq = min(max(-np.expm1(np.log1p(eigvals).sum()), 0.0), 1.0)
    sin_sq = 1.0 - cos_sq
    cos_theta = float(np.sqrt(cos_sq))
    theta = float(np.arcsin(min(1.0, np.sqrt(sin_sq))))
    iu, ju = pair_indices(m.shape[0])
    pairwise = np.clip(g[iu, ju] / (norms[iu] * norms[ju]), -1.0, 1.0)
    return SimilarityResult(
        det_gram=det_g,
        hypervolume=float(np.sqrt(det_g)),
        norms=norms,
        sin_sq=sin_sq,
        cos_theta=cos_theta,
        theta=theta,
        pairwise_cos=pairwise,
    )


def joint_cosine(rows) -> float:
    """Shorthand for ``similarity(rows).cos_theta``."""
    return similarity(rows).cos_theta


def cos_sq_from_pairwise(f, g, k) -> float:
    """Squared joint cosine of exactly three vectors from pairwise cosines only.

    Expands the 3 x 3 Gram determinant into

        c_fg^2 + c_fk^2 + c_gk^2 - 2 c_fg c_fk c_gk

    which equals ``similarity([f, g, k]).cos_theta ** 2`` without touching
    any determinant, so it serves as an independent cross-check of the
    determinant path (and is the ``phi3`` debug value reported by the CLI).
    """
    m, norms = _validated_rows(np.stack([np.asarray(f, dtype=np.float64),
                                         np.asarray(g, dtype=np.float64),
                                         np.asarray(k, dtype=np.float64)]))
    c_fg = float(np.dot(m[0], m[1]) / (norms[0] * norms[1]))
    c_fk = float(np.dot(m[0], m[2]) / (norms[0] * norms[2]))
    c_gk = float(np.dot(m[1], m[2]) / (norms[1] * norms[2]))
    return c_fg**2 + c_fk**2 + c_gk**2 - 2.0 * c_fg * c_fk * c_gk


def similarity_gradient(rows) -> tuple[SimilarityResult, np.ndarray]:
    """Joint cosine and its gradient with respect to every row.

    With s = sin^2 = det(G) / P and P the product of squared row norms,

        d(det G)/dM = 2 adj(G) M
        ds/df_i     = (2 / P) (adj(G) M)_i - 2 s f_i / ||f_i||^2
        dcos/df_i   = -ds/df_i / (2 cos)

    The adjugate form keeps the first term finite for singular G (linearly
    dependent rows), where it vanishes identically. In the denominator the
    cosine is computed from s clamped to 1 - EPS_SIN and floored at
    EPS_COS, so gradients stay bounded near orthogonal configurations.

    Returns:
        (result, grad) where grad has the same (n, D) shape as the input
        and row i is the gradient of ``result.cos_theta`` w.r.t. row i.
    """
    m, norms = _validated_rows(rows)
    res = similarity(m)
    g = gram(m)
    adj, _ = adjugate(g)
    norm_sq_prod = float(np.prod(norms) ** 2)
    s = min(max(res.det_gram / norm_sq_prod, 0.0), 1.0 - EPS_SIN)
    ddet_dm = 2.0 * adj @ m
    ds_dm = ddet_dm / norm_sq_prod - 2.0 * s * m / (norms**2)[:, None]
    cos_denom = max(float(np.sqrt(1.0 - s)), EPS_COS)
    grad = -ds_dm / (2.0 * cos_denom)
    return res, grad
