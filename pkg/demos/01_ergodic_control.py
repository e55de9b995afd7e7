"""Ergodic control of a linear-quadratic diffusion on a grid.

dX = U dt + dW with running cost u^2/2 + x^2/2.  The Riccati solution is
V(x) = x^2/2, feedback u = -x, optimal long-run average cost rho = 1/2 and
invariant law N(0, 1/2).  We compare the two drift discretisations.
"""

import numpy as np

from ergodic_mfg import GridMeasure, Grid, solve_ergodic_hjb, wasserstein
from ergodic_mfg.model import lq_model

grid = Grid.from_spacing(6.0, 0.05)
x = grid.nodes[:, 0]
inner = np.abs(x) <= 3

for scheme in ("upwind", "central_monotone"):
    spec = lq_model(interaction="none", state_cost=1.0, drift_scheme=scheme)
    sol = solve_ergodic_hjb(spec, grid)
    print(f"{scheme:>17}: rho = {sol.rho:.6f}   "
          f"sup|V - x^2/2| on [-3,3] = {np.abs(sol.V.values - x**2 / 2)[inner].max():.2e}   "
          f"W1(mu_v, N(0,1/2)) = {wasserstein(1, sol.mu_v, GridMeasure.gaussian(grid, 0, 0.5)):.2e}   "
          f"policy steps = {sol.iterations}")

# Upwinding adds numerical diffusion h|b|/2, which inflates rho at O(h);
# the central scheme keeps the chain monotone while |b|/(2h) stays below
# the diffusion rate and is second order there.

# Continuous refinement lifts the controls off the 161-point control grid.
spec = lq_model(interaction="none", state_cost=1.0, drift_scheme="central_monotone", strictly_convex=True)
sol = solve_ergodic_hjb(spec, grid)
print("refined feedback at x = -1, 0.5, 2:",
      np.round(np.interp([-1.0, 0.5, 2.0], x, sol.policy.controls[:, 0]), 8))
