"""Dense linear-algebra primitives for the similarity and loss modules.

Everything here operates on plain float64 ndarrays. Matrices are small
(n <= ~12 rows, D <= ~1024 columns), so dense row-major storage is used
throughout and all routines are pure functions.
"""

from __future__ import annotations

import numpy as np

#: Relative symmetry tolerance accepted by routines that require a
#: symmetric input.
SYM_RTOL = 1e-12

#: Relative clamp threshold for tiny negative determinants of Gram
#: matrices (which are positive semidefinite in exact arithmetic).
DET_CLAMP_RTOL = 1e-12


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _check_symmetric(g: np.ndarray, name: str = "matrix") -> np.ndarray:
    g = _as_matrix(g, name)
    if g.shape[0] != g.shape[1]:
        raise ValueError(f"{name} must be square, got shape {g.shape}")
    scale = np.abs(g).max()
    if scale > 0 and np.abs(g - g.T).max() > SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric within {SYM_RTOL} relative")
    return g


def gram(m) -> np.ndarray:
    """Gram matrix of the rows of ``m``.

    ``G[i, j]`` is the dot product of rows i and j. The upper triangle is
    computed once and mirrored, so the result is exactly symmetric.

    Args:
        m: real matrix of shape (n, D) with n >= 2.

    Returns:
        (n, n) symmetric ndarray.
    """
    m = _as_matrix(m, "feature matrix")
    n = m.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 rows to form a Gram matrix, got {n}")
    g = m @ m.T
    upper = np.triu(g)
    return upper + np.triu(g, 1).T


def det_psd(g) -> float:
    """Determinant of a symmetric positive-semidefinite matrix, clamped to >= 0.

    Tries a Cholesky factorization first (valid whenever the matrix is
    numerically positive definite) and falls back to LU with partial
    pivoting when a non-positive pivot indicates a semidefinite or
    near-singular input. Tiny negative LU results, an artifact of floating
    point on singular Gram matrices, are clamped to zero.
    """
    g = _check_symmetric(g, "Gram matrix")
    try:
        chol = np.linalg.cholesky(g)
        return float(np.prod(np.diagonal(chol)) ** 2)
    except np.linalg.LinAlgError:
        pass
    det = float(np.linalg.det(g))
    if det < 0.0:
        scale = float(np.prod(np.diagonal(g)))
        if abs(det) < DET_CLAMP_RTOL * max(scale, 1.0):
            det = 0.0
    return max(det, 0.0)


def adjugate(g) -> tuple[np.ndarray, float]:
    """Adjugate and determinant of a symmetric matrix.

    The adjugate (transposed cofactor matrix) satisfies
    ``adj(G) @ G = det(G) * I`` and, unlike the inverse, exists for
    singular inputs. For a symmetric matrix the adjugate is symmetric, so
    no transpose is needed after assembling the cofactors.

    Returns:
        (adj, det) where adj is an (n, n) ndarray and det is a float.
    """
    g = _check_symmetric(g, "matrix")
    n = g.shape[0]
    if n == 1:
        return np.array([[1.0]]), float(g[0, 0])
    cof = np.empty((n, n))
    rows = np.arange(n)
    for i in range(n):
        for j in range(i, n):
            minor = g[np.ix_(rows != i, rows != j)]
            cof[i, j] = (-1.0) ** (i + j) * np.linalg.det(minor)
            cof[j, i] = cof[i, j]
    return cof, float(np.linalg.det(g))


def random_orthogonal(dim: int, seed) -> np.ndarray:
    """Random orthogonal matrix, deterministic for a given seed.

    QR-orthonormalization of a Gaussian matrix with the sign convention
    that makes the factorization unique (positive diagonal of R), which
    also makes the output Haar-distributed.

    Args:
        dim: matrix dimension, >= 1.
        seed: int seed or ``np.random.Generator``.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diagonal(r))
    signs[signs == 0] = 1.0
    return q * signs


def l2_norm(v) -> float:
    """Euclidean norm of a vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("vector contains non-finite entries")
    return float(np.sqrt(np.dot(v, v)))
