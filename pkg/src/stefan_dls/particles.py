"""Particle machinery: reflected Brownian motion in the ball, antithetic
batches and samplers for the initial temperature supports.

Stopping is never applied while simulating; absorption is handled later by
relaxed stopping weights along the full paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TimeGrid:
    horizon: float = 1.0
    steps: int = 100

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.steps + 1)


def reflect_radial(x, radius):
    """Radial reflection at the sphere |x| = radius (in place safe copy)."""
    r = np.linalg.norm(x, axis=-1)
    out = r > radius
    if np.any(out):
        x = x.copy()
        factor = (2.0 * radius - r[out]) / r[out]
        # a huge excursion can overshoot past the origin; project it back
        factor = np.maximum(factor, 1e-12)
        x[out] *= factor[..., None]
        still = np.linalg.norm(x, axis=-1) > radius
        if np.any(still):
            rr = np.linalg.norm(x[still], axis=-1, keepdims=True)
            x[still] *= radius / rr
    return x


def antithetic_increments(rng, half, steps, dim):
    """(2*half, steps, dim) standard normals with xi[2k+1] = -xi[2k]."""
    xi = rng.standard_normal((half, steps, dim))
    full = np.empty((2 * half, steps, dim))
    full[0::2] = xi
    full[1::2] = -xi
    return full


def simulate_reflected(x0, grid: TimeGrid, alpha, radius, rng,
                       antithetic=True):
    """Euler scheme for reflected Brownian motion with diffusivity alpha.

    x0: (J, d) initial points (for antithetic batches J must be even and
    adjacent rows should share an initial point).  Returns (J, steps+1, d).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    j, d = x0.shape
    if antithetic:
        if j % 2:
            raise ValueError("antithetic batches need an even particle count")
        xi = antithetic_increments(rng, j // 2, grid.steps, d)
    else:
        xi = rng.standard_normal((j, grid.steps, d))
    paths = np.empty((j, grid.steps + 1, d))
    paths[:, 0] = x0
    step = np.sqrt(alpha * grid.dt)
    x = x0
    for n in range(grid.steps):
        x = reflect_radial(x + step * xi[:, n], radius)
        paths[:, n + 1] = x
    return paths


# ---------------------------------------------------------------------------
# initial samplers (rejection based)
# ---------------------------------------------------------------------------

def sample_ball(rng, n, dim, radius):
    """Uniform points in B_radius by rejection from the bounding cube."""
    out = np.empty((n, dim))
    have = 0
    while have < n:
        cand = rng.uniform(-radius, radius, size=(max(2 * (n - have), 64), dim))
        keep = cand[np.linalg.norm(cand, axis=-1) <= radius]
        take = min(len(keep), n - have)
        out[have:have + take] = keep[:take]
        have += take
    return out


def sample_annulus(rng, n, dim, r_inner, r_outer):
    """Uniform points in {r_inner < |x| <= r_outer}."""
    if not 0.0 <= r_inner < r_outer:
        raise ValueError("need 0 <= r_inner < r_outer")
    out = np.empty((n, dim))
    have = 0
    while have < n:
        cand = rng.uniform(-r_outer, r_outer,
                           size=(max(2 * (n - have), 64), dim))
        r = np.linalg.norm(cand, axis=-1)
        keep = cand[(r > r_inner) & (r <= r_outer)]
        take = min(len(keep), n - have)
        out[have:have + take] = keep[:take]
        have += take
    return out


def sample_unit_sphere(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sample_radial_density(rng, n, dim, r_lo, r_hi, density, grid_size=2048):
    """Points with |x| ~ density(r) * r^(d-1) on [r_lo, r_hi], isotropic.

    density is any nonnegative callable of the radius (not necessarily
    normalized); sampling is by inverse CDF on a fine radial grid.
    """
    r = np.linspace(r_lo, r_hi, grid_size)
    w = np.maximum(np.asarray(density(r), dtype=float), 0.0) * r ** (dim - 1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1])
                                           * np.diff(r))])
    if cdf[-1] <= 0.0:
        raise ValueError("radial density has zero mass on the interval")
    cdf /= cdf[-1]
    u = rng.uniform(0.0, 1.0, size=n)
    radii = np.interp(u, cdf, r)
    return radii[:, None] * sample_unit_sphere(rng, n, dim)


def duplicate_for_antithetic(x0):
    """Repeat each initial point for an antithetic pair (2k, 2k+1)."""
    return np.repeat(x0, 2, axis=0)
