"""Reflected Brownian particles and probabilistic stopping.

Simulates antithetic particle pairs inside the unit disk, applies the
relaxed stopping rule against a fixed circular interface, and shows that
the per-step stopping probabilities form a sub-probability distribution.

Run:  python3 demos/02_particles_and_stopping.py
"""

import numpy as np

from stefan_dls.geometry import relaxed_phase
from stefan_dls.loss import stopping_probabilities
from stefan_dls.particles import (TimeGrid, duplicate_for_antithetic,
                                  sample_annulus, simulate_reflected)

rng = np.random.default_rng(0)
grid = TimeGrid(horizon=1.0, steps=50)
x0 = duplicate_for_antithetic(sample_annulus(rng, 500, 2, 0.5, 1.0))
paths = simulate_reflected(x0, grid, alpha=0.5, radius=1.0, rng=rng)
print("paths shape:", paths.shape)
print("max |x| over all steps:", np.linalg.norm(paths, axis=-1).max(),
      "(reflection keeps particles inside the disk)")

# relaxed stopping against the static solid {|x| <= 0.5}
rho = np.linalg.norm(paths, axis=-1) - 0.5
q = relaxed_phase(rho, eps=0.1)          # liquid-side stopping probability
q_probs = stopping_probabilities(q)
total = q_probs.sum(axis=-1)
print("stopping mass per particle: min", total.min(), "max", total.max())
print("fraction stopped by the horizon:", total.mean())
