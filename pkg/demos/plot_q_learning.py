"""
Learning the gains without the plant matrices
=============================================

The learner only sees states, modes and its own inputs.  It does know the
transition matrix, which it needs to average next-step values across modes.
"""

from pathlib import Path

import numpy as np

from mjlsq import LearningConfig, MjlsPlant, NoiseSpec, q_learning, two_mode_benchmark, value_iteration
from mjlsq import io
from mjlsq.model import split_streams

model, weights = two_mode_benchmark()
oracle = value_iteration(model, weights)

streams = split_streams(1)
plant = MjlsPlant(model, streams.chain)
config = LearningConfig(L=15, eps=1e-3, noise=NoiseSpec(0.01), seed=1)
report = q_learning(plant, weights, model.phi, config, streams.noise, streams.reset)

print(f"stopped after {report.iterations} iterations (converged={report.converged})")
print("learned K:", report.K.reshape(model.N, -1))
print("oracle  K:", oracle.K.reshape(model.N, -1))
print("max error:", np.max(np.abs(report.K - oracle.K)))

# %%
# Per-iteration diagnostics: gain change, regressor conditioning and the
# number of transitions needed to see every mode ``L`` times.

for j in range(report.iterations):
    print(f"{j + 1:3d}  e_K={report.e_K_history[j]:.2e}  "
          f"cond={np.round(report.condition_numbers[j], 1)}  samples={report.data_lengths[j]}")

# %%
# Gain trajectories as an SVG chart.

iters = np.arange(len(report.K_history))
gains = np.array([K.ravel() for K in report.K_history])
labels = io.gain_columns(*report.K.shape)
out = Path("gains_trace.svg")
io.write_svg_lines(out, {lab: (iters, gains[:, c]) for c, lab in enumerate(labels)},
                   title="learned gains per iteration")
print("wrote", out.resolve())
