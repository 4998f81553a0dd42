"""A tour of the joint cosine similarity for more than two vectors.

The score generalizes cosine similarity to n vectors at once: the Gram
determinant of the vectors measures the squared volume they span, and
normalizing it by their squared norms yields the sine of a generalized
angle. cos = 1 means the vectors are linearly dependent (maximally
aligned); cos = 0 means they are pairwise orthogonal.
"""

import numpy as np

from gramsim import (
    cos_sq_from_pairwise,
    joint_cosine,
    random_orthogonal,
    similarity,
    similarity_gradient,
)

rng = np.random.default_rng(0)

# three vectors in 256 dimensions, scored in one shot
f, g, k = rng.standard_normal((3, 256))
res = similarity(np.stack([f, g, k]))
print("random triple:")
print(f"  cos = {res.cos_theta:.4f}   angle = {np.degrees(res.theta):.1f} deg")
print(f"  hypervolume = {res.hypervolume:.2f}")
print(f"  pairwise cosines = {np.round(res.pairwise_cos, 4)}")

# the extremes: dependence and orthogonality
aligned = np.stack([f, 2 * f, -0.5 * f])
print(f"\ncollinear rows:  cos = {joint_cosine(aligned):.4f}  (maximal similarity)")
q, _ = np.linalg.qr(rng.standard_normal((256, 3)))
print(f"orthogonal rows: cos = {joint_cosine(q.T):.4f}  (minimal similarity)")

# for exactly three vectors there is a closed form in the pairwise
# cosines alone; it equals cos^2 and cross-checks the determinant path
phi = cos_sq_from_pairwise(f, g, k)
print(f"\nclosed form from pairwise cosines: {phi:.6f}")
print(f"cos^2 from the determinant path:   {res.cos_theta**2:.6f}")

# invariances: rotating all vectors, permuting them, or rescaling any one
# of them leaves the score unchanged; flipping a sign does too, which is
# why encoders should emit nonnegative features (final ReLU)
m = rng.standard_normal((4, 64))
rot = random_orthogonal(64, seed=1)
print("\ninvariances on a 4-tuple:")
print(f"  base        {joint_cosine(m):.12f}")
print(f"  rotated     {joint_cosine(m @ rot.T):.12f}")
print(f"  permuted    {joint_cosine(m[::-1]):.12f}")
print(f"  row scaled  {joint_cosine(m * [[1], [7], [1], [1]]):.12f}")
flipped = m.copy()
flipped[2] *= -1
print(f"  row negated {joint_cosine(flipped):.12f}")

# the analytic gradient makes the score trainable: nudging the rows along
# the gradient increases their joint alignment
rows = rng.standard_normal((3, 32))
for step in range(4):
    res, grad = similarity_gradient(rows)
    print(f"gradient ascent step {step}: cos = {res.cos_theta:.4f}")
    rows = rows + 2.0 * grad
