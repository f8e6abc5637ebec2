"""Relaxed phase function and Monte Carlo-free curvature probes.

Prints the piecewise-linear membership profile and compares dilation-based
curvature estimates against closed-form values for a circle, a parabola,
a sphere, and an elliptic paraboloid.

Run:  python3 demos/01_relaxed_phase_and_curvature.py
"""

import numpy as np

from stefan_dls.geometry import (CurvatureProbe, curvature,
                                 parabola_curvature, parabola_levelset,
                                 paraboloid_curvature, paraboloid_levelset,
                                 relaxed_phase, sphere_levelset)

eps = 0.1
rho = np.linspace(-2 * eps, 2 * eps, 9)
print("signed distance :", np.array2string(rho, precision=3))
print("membership prob :", np.array2string(relaxed_phase(rho, eps),
                                            precision=3))

probe = CurvatureProbe(1e-2, 1e-4)
print("\ncurvature estimates (estimate / exact)")
print("  circle r=0.5      :",
      curvature(sphere_levelset(0.5), np.array([0.5, 0.0]), 2, probe),
      "/ 2.0")
f = parabola_levelset(2.0)
for y1 in (0.0, 0.5, 1.0):
    est = curvature(f, np.array([y1, y1 ** 2 / 2.0]), 2, probe)
    print(f"  parabola y1={y1:<4}  : {est:.4f} /",
          f"{parabola_curvature(2.0, y1):.4f}")
rng = np.random.default_rng(0)
print("  sphere r=0.5      :",
      curvature(sphere_levelset(0.5), np.array([0.5, 0.0, 0.0]), 3, probe,
                rng), "/ 2.0")
print("  paraboloid (1,2)  :",
      curvature(paraboloid_levelset(1.0, 2.0), np.zeros(3), 3, probe, rng),
      "/", paraboloid_curvature(1.0, 2.0, 0.0, 0.0))
