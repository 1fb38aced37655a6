"""
How much data does one learning iteration need?
===============================================

Each outer iteration waits until every mode has been visited ``L`` times.
The rarest mode sets the pace, so ``L / min(pi)`` is a useful first guess and
the Monte-Carlo estimate below gives the full picture.
"""

import numpy as np

from mjlsq import estimate_dataset_length, sample_mode_path, stationary_distribution, two_mode_benchmark

model, _ = two_mode_benchmark()
pi = stationary_distribution(model.phi)
print("stationary distribution:", pi)
print("first guess L / min(pi) for L = 15:", 15 / pi.min())

# %%

rng = np.random.default_rng(0)
for L in (6, 15, 30, 60):
    est = estimate_dataset_length(model.phi, L, 50_000, rng)
    q = est.quantiles
    print(f"L={L:3d}: mean {est.mean:7.2f}  std {est.std:5.2f}  "
          f"median {q[50]:.0f}  95th percentile {q[95]:.0f}")

# %%
# A sample path of the mode.  Runs in mode 1 are longer on average since
# its self-transition probability is larger.

path = sample_mode_path(model.phi, 0, 60, rng)
print("".join(str(t + 1) for t in path))
