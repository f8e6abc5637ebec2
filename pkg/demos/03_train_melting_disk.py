"""Train the melting-disk scenario at a small budget and extract radii.

Cuts the builtin one-phase melting scenario down to a couple of minutes of
CPU time, trains the level-set network, and prints the loss trajectory and
the interface radius over time.

Run:  python3 demos/03_train_melting_disk.py
"""

import dataclasses

import numpy as np

from stefan_dls.experiments import builtin_scenarios, extract_radius
from stefan_dls.levelset import phi_and_grad
from stefan_dls.trainer import train

cfg = dataclasses.replace(builtin_scenarios()["one-phase-melt-2d"],
                          iterations=200, batch=256, steps=50, n_test=200,
                          early_stop=False, checkpoint_every=0, seed=0)
res = train(cfg, callback=lambda m, rec, p: (m + 1) % 50 == 0 and print(
    f"iter {m + 1:4d}  loss {rec.loss:10.2f}  penalty {rec.penalty:8.4f}"))

phi0 = cfg.initial_levelset()
print("\ninterface radius over time")
for t in np.linspace(0.0, 1.0, 6):
    radii = extract_radius(
        lambda pts, t=t: phi_and_grad(res.arch, res.params, phi0, t, pts)[0],
        cfg.dim, cfg.domain_radius)
    print(f"  t={t:.1f}: mean {radii.mean():.4f}  angular std "
          f"{radii.std():.4f}")
