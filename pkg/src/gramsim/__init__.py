"""Joint similarity of n vectors from the Gram-determinant hypervolume angle.

The package provides the similarity itself (`similarity`,
`similarity_gradient`), contrastive losses built on it (`gha_loss`,
`dual_loss`), minimal MLP encoders with hand-derived backprop and Adam for
the alignment simulation (`encoders`), and the simulation experiment
harness (`experiments`).
"""

from .linalg import adjugate, det_psd, gram, l2_norm, random_orthogonal
from .losses import (
    LossBreakdown,
    LossConfig,
    angular_equilibrium,
    contrastive_from_scores,
    dual_loss,
    gha_contrastive,
    gha_loss,
    modality_pairs,
    sample_negatives,
    sample_pair_negatives,
)
from .similarity import (
    EPS_COS,
    EPS_NORM,
    EPS_SIN,
    DegenerateVectorError,
    SimilarityResult,
    cos_sq_from_pairwise,
    joint_cosine,
    similarity,
    similarity_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateVectorError",
    "EPS_COS",
    "EPS_NORM",
    "EPS_SIN",
    "LossBreakdown",
    "LossConfig",
    "SimilarityResult",
    "adjugate",
    "angular_equilibrium",
    "contrastive_from_scores",
    "cos_sq_from_pairwise",
    "det_psd",
    "dual_loss",
    "gha_contrastive",
    "gha_loss",
    "gram",
    "joint_cosine",
    "l2_norm",
    "modality_pairs",
    "random_orthogonal",
    "sample_negatives",
    "sample_pair_negatives",
    "similarity",
    "similarity_gradient",
    "__version__",
]
