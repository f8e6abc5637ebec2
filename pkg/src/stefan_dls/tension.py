"""Surface tension via Poisson boundary arrivals.

Arrivals are generated per time step and per side from a curvature-weighted
Poisson point process supported on a band of width delta around the current
interface (side 1: 0 < rho <= delta in the liquid, side 2: -delta <= rho <= 0
in the solid).  Each arrival carries the signed curvature weight
sign(kappa) * |kappa|^(2-d); positions are drawn uniformly in the band and
the weight is normalized by the band mean of |kappa|^(2-d), which also sets
the Poisson rate (gamma / delta) * mean(|kappa|^(2-d)).  In 2D the rate is
exactly gamma / delta and raw weights are +-1; for a radial 3D interface of
radius r the rate is (gamma / delta) * r and raw weights are ~ r.

The arrival then diffuses like a regular particle; its stopped test-function
values enter the residual through the Khat = -(K1 + K2) term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .geometry import CurvatureProbe, curvature, curvature_sign, ball_volume
from .levelset import levelset_evaluator, rho_values
from .loss import ArrivalBatch
from .particles import TimeGrid, reflect_radial


class BandVanishedError(RuntimeError):
    """Raised when the interface band cannot be sampled (region gone)."""


def sample_band(arch, params, phi0, t, side, delta, radius, rng, count,
                batch=4096, max_batches=32):
    """Rejection-sample `count` points from the side band at time t."""
    out = []
    have = 0
    for _ in range(max_batches):
        cand = rng.uniform(-radius, radius, size=(batch, arch.dim))
        cand = cand[np.linalg.norm(cand, axis=-1) <= radius]
        rho = rho_values(arch, params, phi0, t, cand)
        if side == 1:
            keep = cand[(rho > 0.0) & (rho <= delta)]
        else:
            keep = cand[(rho >= -delta) & (rho <= 0.0)]
        if len(keep):
            out.append(keep)
            have += len(keep)
        if have >= count:
            break
    if have == 0:
        raise BandVanishedError(f"empty side-{side} band at t={t:.4f}")
    pts = np.concatenate(out, axis=0)
    return pts[:count] if have >= count else pts


def generate_arrivals(arch, params, phi0, grid: TimeGrid, *, gamma, delta,
                      alpha, radius, rng, probe=None, mean_samples=8):
    """Poisson arrivals with reflected-BM continuations for both sides.

    Returns (list of ArrivalBatch, list of (step, side) band-vanished flags).
    """
    if gamma <= 0.0:
        return [], []
    probe = probe or CurvatureProbe()
    d = arch.dim
    dt = grid.dt
    step_len = np.sqrt(alpha * dt)
    batches = []
    vanished = []
    for side in (1, 2):
        steps, points, weights = [], [], []
        for m in range(grid.steps):
            t = grid.times[m]
            f = levelset_evaluator(arch, params, phi0, t)
            if d == 2:
                rate = gamma / delta
                count = rng.poisson(rate * dt)
                if count == 0:
                    continue
                try:
                    pts = sample_band(arch, params, phi0, t, side, delta,
                                      radius, rng, count)
                except BandVanishedError:
                    vanished.append((m, side))
                    continue
                for y in pts:
                    s = curvature_sign(f, y, d, probe, rng=rng)
                    steps.append(m)
                    points.append(y)
                    weights.append(s)
            else:
                # estimate the band mean of |kappa|^(2-d) first
                try:
                    pts = sample_band(arch, params, phi0, t, side, delta,
                                      radius, rng, mean_samples)
                except BandVanishedError:
                    vanished.append((m, side))
                    continue
                kappas = np.array([curvature(f, y, d, probe, rng=rng)
                                   for y in pts])
                raw = np.sign(kappas) * np.abs(kappas) ** (2 - d)
                mean_abs = float(np.mean(np.abs(raw)))
                if mean_abs <= 0.0:
                    continue
                rate = gamma / delta * mean_abs
                count = rng.poisson(rate * dt)
                if count == 0:
                    continue
                idx = rng.integers(0, len(pts), size=count)
                for i in idx:
                    steps.append(m)
                    points.append(pts[i])
                    weights.append(raw[i] / mean_abs)
        if not steps:
            continue
        steps = np.asarray(steps, dtype=int)
        points = np.asarray(points, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        paths = np.empty((len(steps), grid.steps + 1, d))
        for a, (m, y) in enumerate(zip(steps, points)):
            paths[a, :m + 1] = y
            x = y.copy()
            for n in range(m, grid.steps):
                x = reflect_radial((x + step_len
                                    * rng.standard_normal(d))[None, :],
                                   radius)[0]
                paths[a, n + 1] = x
        batches.append(ArrivalBatch(side=side, steps=steps, points=points,
                                    weights=weights, paths=paths))
    return batches, vanished


# ---------------------------------------------------------------------------
# radial trick: fold gamma * curvature into the initial temperatures
# ---------------------------------------------------------------------------

@dataclass
class RadialPart:
    """One signed piece of a transformed radial initial temperature."""

    side: int
    sign: float
    mass: float
    r_lo: float
    r_hi: float
    density: object      # |u|(r), callable


def _sphere_coeff(dim):
    return {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}[dim]


def radial_trick_split(side, level, r_lo, r_hi, gamma, dim, grid_size=512):
    """Split u(r) = level + gamma / r on [r_lo, r_hi] into signed parts.

    `level` is the (signed) constant original temperature on the support.
    Returns a list of RadialPart with positive masses and signs +-1.
    """
    coeff = _sphere_coeff(dim)
    r_lo = max(r_lo, 1e-9 * r_hi)  # gamma / r is integrable but not finite at 0

    def u(r):
        return level + gamma / r

    rs = np.linspace(r_lo, r_hi, grid_size)
    signs = np.sign(u(rs))
    parts = []
    seg_lo = r_lo
    for i in range(1, grid_size):
        boundary = signs[i] != signs[i - 1] and signs[i - 1] != 0
        if boundary or i == grid_size - 1:
            seg_hi = rs[i] if i == grid_size - 1 and not boundary else None
            if seg_hi is None:
                # locate the sign change by bisection
                lo, hi = rs[i - 1], rs[i]
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    if np.sign(u(mid)) == signs[i - 1]:
                        lo = mid
                    else:
                        hi = mid
                seg_hi = 0.5 * (lo + hi)
            sgn = float(signs[i - 1]) if signs[i - 1] != 0 else float(signs[i])
            mass = quad(lambda r: abs(u(r)) * coeff * r ** (dim - 1),
                        seg_lo, seg_hi)[0]
            if mass > 1e-14:
                parts.append(RadialPart(side=side, sign=sgn, mass=mass,
                                        r_lo=seg_lo, r_hi=seg_hi,
                                        density=lambda r, u=u: np.abs(u(r))))
            seg_lo = seg_hi
    return parts


def radial_trick_transform(specs, gamma, dim):
    """Apply the trick to a list of (side, sign, mass, r_lo, r_hi) uniform
    radial parts; returns the transformed RadialPart list (gamma folded in,
    so the transformed problem is solved with gamma = 0)."""
    out = []
    for side, sign, mass, r_lo, r_hi in specs:
        vol = ball_volume(dim, r_hi) - ball_volume(dim, r_lo)
        level = sign * mass / vol
        out.extend(radial_trick_split(side, level, r_lo, r_hi, gamma, dim))
    return out
