"""
Model-based gains for a two-mode jump system
============================================

Value iteration on the coupled Riccati equations, starting from ``P = 0``.
We watch the gains settle and check the answer against the fixed-point
residual and a Monte-Carlo estimate of the optimal cost.
"""

import numpy as np

from mjlsq import care_residual, monte_carlo_rollouts, optimal_cost, two_mode_benchmark, value_iteration
from mjlsq.riccati import gain_from_P

model, weights = two_mode_benchmark()
print("A_1 eigenvalues:", np.linalg.eigvals(model.A[0]))
print("A_2 eigenvalues:", np.linalg.eigvals(model.A[1]))
print("transition matrix:\n", model.phi)

# %%
# Solve and keep every iterate so the convergence can be inspected.

sol = value_iteration(model, weights, keep_history=True)
print(f"converged after {sol.iterations} updates, last change {sol.residual:.2e}")
print("K_1 =", sol.K[0].ravel())
print("K_2 =", sol.K[1].ravel())
print("fixed-point residual:", care_residual(sol.P, model, weights))

# %%
# Gains implied by each iterate.  Early iterates already sit close to the
# limit; the last digits take a few dozen more updates.

for j in (1, 2, 5, 10, 20, sol.iterations):
    Kj = np.stack([gain_from_P(sol.history[j], model, weights, i) for i in range(model.N)])
    print(f"iterate {j:3d}: max |K^j - K| = {np.max(np.abs(Kj - sol.K)):.2e}")

# %%
# The value ``x0' P_theta0 x0`` is the expected infinite-horizon cost.  A
# long-horizon Monte-Carlo average of the realised cost should agree.

x0 = np.array([1.0, 0.0])
stats = monte_carlo_rollouts(model, sol.K, x0, 0, 300, 20_000, np.random.default_rng(0), weights=weights)
print(f"predicted cost {optimal_cost(sol.P, x0, 0):.4f}, "
      f"simulated {stats.cost.mean():.4f} +/- {stats.cost.std() / np.sqrt(stats.cost.size):.4f}")
