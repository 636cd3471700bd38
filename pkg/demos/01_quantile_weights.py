"""Selection weights from objective ranks.

A weighting scheme is a non-increasing function w on [0, 1]; each sample's
weight is the average of w over the quantile interval its rank occupies.
This script walks through the basic behaviors: truncation selection, tie
handling, invariance under monotone transforms of the objective, and the
constant-shift property.
"""

import numpy as np

from igopt import compute_quantile_weights, signed_median, table, truncation

values = np.array([3.0, 1.0, 4.0, 2.0])
scheme = truncation(0.5)
rw = compute_quantile_weights(values, scheme)
print("objective values:", values)
print("weights (best half selected):", rw.weights)
print("total mass equals the integral of w:", rw.total, "=", scheme.mean())

# Ties share the exact average of w over the block they occupy.
tied = compute_quantile_weights([5.0, 5.0, 1.0, 5.0], truncation(0.5))
print("\nwith ties:", tied.weights, "tie groups:", [list(g) for g in tied.tie_groups])

# Ranks are all that matter: any increasing transform leaves weights alone.
cubed = compute_quantile_weights(values**3, scheme)
shifted = compute_quantile_weights(2 * values + 7, scheme)
print("\ninvariance under f -> f^3 :", np.array_equal(cubed.weights, rw.weights))
print("invariance under f -> 2f+7:", np.array_equal(shifted.weights, rw.weights))

# Adding a constant to w moves every weight by c/N; the flow is unchanged
# (only the finite-sample noise of the update is affected).
moved = compute_quantile_weights(values, scheme.shifted(0.4))
print("\nshifted scheme weights:", moved.weights, "(each moved by 0.1)")

# Other shapes: the signed median scheme and a custom step table.
print("\nsigned median:", compute_quantile_weights(values, signed_median()).weights)
steps = table([(0.0, 2.0), (0.25, 1.0), (0.5, 0.0)])
print("step table   :", compute_quantile_weights(values, steps).weights)
print("step table variance over [0,1]:", steps.variance())
