"""Surface tension: boundary arrivals and the 3D radial trick.

Shows the Poisson arrival generator on a spherical interface and the
transformation that folds the curvature boundary condition of a radial 3D
problem into modified signed initial temperatures (gamma becomes 0).

Run:  python3 demos/04_surface_tension_radial_trick.py
"""

import numpy as np

from stefan_dls.experiments import builtin_scenarios, part_specs
from stefan_dls.levelset import NetworkArch, init_params
from stefan_dls.particles import TimeGrid
from stefan_dls.tension import generate_arrivals, radial_trick_transform
from stefan_dls.trainer import iteration_rng

cfg = builtin_scenarios()["tension-3d-radial"]
arch = NetworkArch(dim=3, horizon=cfg.horizon)
params = init_params(arch, iteration_rng(0, 2 ** 31))
grid = TimeGrid(cfg.horizon, 50)

arr, vanished = generate_arrivals(arch, params, cfg.initial_levelset(),
                                  grid, gamma=cfg.gamma,
                                  delta=cfg.delta_band, alpha=cfg.alpha1,
                                  radius=cfg.domain_radius,
                                  rng=iteration_rng(0, 0))
for a in arr:
    print(f"side {a.side}: {len(a.steps)} arrivals, "
          f"mean |y| = {np.linalg.norm(a.points, axis=-1).mean():.4f}, "
          f"weight range [{a.weights.min():.3f}, {a.weights.max():.3f}]")

print("\nradial trick: signed parts of u + gamma/r")
radial = [(s.side, s.sign, s.mass, s.r_lo, s.r_hi)
          for s in part_specs(cfg)]
for p in radial_trick_transform(radial, cfg.gamma, cfg.dim):
    print(f"  side {p.side} sign {p.sign:+.0f} mass {p.mass:.4f} "
          f"support [{p.r_lo:.4f}, {p.r_hi:.4f}]")
