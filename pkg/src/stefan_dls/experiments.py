"""Scenario definitions and evaluation utilities.

Each scenario bundles the physical constants (diffusivities, latent heat,
surface tension, initial temperatures) with the training knobs (iteration
and batch counts, test-function count, seed).  Radial benchmarks used by
the test suite live here too: radius extraction from the trained level
set, the square-root melting rate, the long-term radius of a supercooled
disk, the initial-jump equation and temperature recovery from surviving
particles.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from math import pi

import numpy as np

from .geometry import ball_volume, relax_width
from .levelset import make_initial_levelset
from .particles import sample_annulus, sample_ball


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    name: str = "custom"
    dim: int = 2
    horizon: float = 1.0
    steps: int = 100
    domain_radius: float = 1.0
    alpha1: float = 0.5
    alpha2: float = 0.5
    latent_heat: float = 1.0
    gamma: float = 0.0
    delta: float = 0.0          # 0 -> 5 * sqrt(alpha1 * dim * dt)
    r0: float = 0.5
    phi0_kind: str = "sphere"
    eta: float = -1.0           # sign of the liquid initial temperature
    c1: float = 1.0
    c2: float = 1.0
    one_phase: bool = False
    liquid_lo: float = 0.0      # 0 -> r0
    liquid_hi: float = 0.0      # 0 -> domain_radius
    iterations: int = 3000
    batch: int = 0              # 0 -> 2 ** (7 + dim)
    n_test: int = 0             # 0 -> 100 * dim
    lr: float = 1e-3
    lambda0: float = 0.1
    seed: int = 0
    early_stop: bool = True
    checkpoint_every: int = 100
    radial_trick: bool = False

    # ---- derived quantities ----------------------------------------

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def batch_size(self):
        return self.batch if self.batch else 2 ** (7 + self.dim)

    @property
    def n_test_functions(self):
        return self.n_test if self.n_test else 100 * self.dim

    @property
    def delta_band(self):
        return self.delta if self.delta else 5.0 * relax_width(
            self.alpha1, self.dim, self.dt)

    @property
    def domain_volume(self):
        return ball_volume(self.dim, self.domain_radius)

    def eps_side(self):
        """Relaxation widths; side 0 (region indicator) follows the liquid."""
        e1 = relax_width(self.alpha1, self.dim, self.dt)
        e2 = relax_width(self.alpha2, self.dim, self.dt)
        return {0: e1, 1: e1, 2: e2}

    def initial_levelset(self):
        return make_initial_levelset(self.phi0_kind, self.r0)

    def validate(self):
        if self.dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3")
        if self.gamma > 0.0 and abs(self.alpha1 - self.alpha2) > 1e-12:
            raise ConfigError("surface tension requires alpha1 == alpha2")
        if self.batch_size % 2:
            raise ConfigError("batch size must be even (antithetic pairs)")
        if self.steps < 1 or self.horizon <= 0:
            raise ConfigError("need steps >= 1 and horizon > 0")
        if self.radial_trick and self.phi0_kind != "sphere":
            raise ConfigError("radial trick needs a spherical interface")
        return self


def scenario_hash(cfg: ScenarioConfig) -> str:
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# initial temperature supports
# ---------------------------------------------------------------------------

@dataclass
class PartSpec:
    """One particle part: signed initial-temperature component."""

    side: int
    sign: float
    mass: float
    sampler: object          # callable (rng, n) -> (n, dim) points
    r_lo: float = 0.0        # radial support (sphere scenarios only)
    r_hi: float = 0.0


def part_specs(cfg: ScenarioConfig):
    """Liquid/solid particle parts for a scenario (no radial trick)."""
    d, r = cfg.dim, cfg.domain_radius
    lo = cfg.liquid_lo if cfg.liquid_lo else cfg.r0
    hi = cfg.liquid_hi if cfg.liquid_hi else r
    parts = []
    if cfg.phi0_kind == "sphere":
        parts.append(PartSpec(
            side=1, sign=cfg.eta, mass=cfg.c1, r_lo=lo, r_hi=hi,
            sampler=lambda rng, n: sample_annulus(rng, n, d, lo, hi)))
        if not cfg.one_phase:
            parts.append(PartSpec(
                side=2, sign=-1.0, mass=cfg.c2, r_lo=0.0, r_hi=cfg.r0,
                sampler=lambda rng, n: sample_ball(rng, n, d, cfg.r0)))
    else:
        phi0 = cfg.initial_levelset()

        def rejection(region_sign):
            def sampler(rng, n):
                out = np.empty((n, d))
                have = 0
                while have < n:
                    cand = sample_ball(rng, max(2 * (n - have), 64), d, r)
                    vals = phi0.value(cand)
                    keep = cand[vals > 0.0] if region_sign > 0 \
                        else cand[vals <= 0.0]
                    take = min(len(keep), n - have)
                    out[have:have + take] = keep[:take]
                    have += take
                return out
            return sampler

        parts.append(PartSpec(side=1, sign=cfg.eta, mass=cfg.c1,
                              sampler=rejection(+1)))
        if not cfg.one_phase:
            parts.append(PartSpec(side=2, sign=-1.0, mass=cfg.c2,
                                  sampler=rejection(-1)))
    return parts


# ---------------------------------------------------------------------------
# builtin scenarios
# ---------------------------------------------------------------------------

def builtin_scenarios():
    mk = ScenarioConfig
    scenarios = [
        mk(name="one-phase-melt-2d", dim=2, eta=1.0, latent_heat=0.25,
           r0=0.5, c1=1.0, one_phase=True),
        mk(name="long-term-2d", dim=2, eta=-1.0, c1=0.5, c2=0.1,
           latent_heat=4.0, horizon=5.0, r0=0.5),
        mk(name="tension-3d-radial", dim=3, eta=-1.0, alpha1=0.5, alpha2=0.5,
           latent_heat=2.0, gamma=0.25, c1=0.5, c2=1.0, r0=0.5,
           delta=0.0125, iterations=1000),
        mk(name="jump-2d", dim=2, eta=-1.0, latent_heat=2.0, r0=0.25,
           liquid_hi=0.375, c1=1.0, c2=1.0),
        mk(name="square-2d", dim=2, phi0_kind="l1ball", r0=0.5, eta=1.0,
           alpha1=0.5, alpha2=0.05, latent_heat=0.01, c1=1.0, c2=1.0),
        mk(name="diamond-melt-2d", dim=2, phi0_kind="diamond", r0=0.75,
           eta=1.0, latent_heat=0.25, gamma=0.15, c1=1.0, c2=0.25,
           iterations=1000),
        mk(name="diamond-freeze-2d", dim=2, phi0_kind="diamond", r0=0.5,
           eta=-1.0, latent_heat=0.25, gamma=0.15, c1=1.0, c2=0.1,
           iterations=1000),
        mk(name="dumbbell-2d", dim=2, phi0_kind="dumbbell", eta=1.0,
           latent_heat=0.25, gamma=0.1, c1=2.0, c2=0.25, iterations=1000),
    ]
    return {s.name: s for s in scenarios}


# ---------------------------------------------------------------------------
# config files and overrides
# ---------------------------------------------------------------------------

def _coerce(field_type, raw):
    if field_type is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    return field_type(raw)


def apply_overrides(cfg: ScenarioConfig, pairs):
    """Apply key=value override strings to a copy of cfg."""
    fields = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    types = {"str": str, "int": int, "float": float, "bool": bool}
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value: {pair!r}")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"unknown configuration key {key!r}")
        ftype = fields[key]
        if isinstance(ftype, str):
            ftype = types.get(ftype, str)
        try:
            updates[key] = _coerce(ftype, raw.strip())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return dataclasses.replace(cfg, **updates)


def parse_config_file(path):
    """Flat key=value file -> ScenarioConfig."""
    pairs = []
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise exc
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        pairs.append(line)
    return apply_overrides(ScenarioConfig(), pairs)


# ---------------------------------------------------------------------------
# radius extraction
# ---------------------------------------------------------------------------

def ray_directions(dim, n_angles=64):
    if dim == 2:
        angles = np.linspace(0.0, 2.0 * pi, n_angles, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    # deterministic golden-spiral directions on the sphere
    i = np.arange(n_angles) + 0.5
    phi_ang = np.arccos(1.0 - 2.0 * i / n_angles)
    theta = pi * (1.0 + 5 ** 0.5) * i
    return np.stack([np.sin(phi_ang) * np.cos(theta),
                     np.sin(phi_ang) * np.sin(theta),
                     np.cos(phi_ang)], axis=-1)


def extract_radius(phi_fn, dim, domain_radius, n_angles=64, n_scan=200):
    """Per-direction interface radius: smallest root of s -> phi(s * omega).

    phi_fn maps (P, d) points to phi values.  Directions with no sign
    change contribute domain_radius if the whole ray is solid and 0.0 if
    none of it is.
    """
    dirs = ray_directions(dim, n_angles)
    s = np.linspace(0.0, domain_radius, n_scan)
    radii = np.empty(n_angles)
    for a, w in enumerate(dirs):
        vals = phi_fn(s[:, None] * w[None, :])
        signs = vals <= 0.0
        change = np.nonzero(signs[:-1] & ~signs[1:])[0]
        if len(change) == 0:
            radii[a] = domain_radius if signs[0] else 0.0
            continue
        lo, hi = s[change[0]], s[change[0] + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if phi_fn(mid * w[None, :])[0] <= 0.0:
                lo = mid
            else:
                hi = mid
        radii[a] = 0.5 * (lo + hi)
    return radii


# ---------------------------------------------------------------------------
# analytic benchmarks
# ---------------------------------------------------------------------------

def hadzic_rate(tau, t):
    """Vanishing rate sqrt(tau - t) * exp(-sqrt(|log(tau - t)| / 2))."""
    t = np.asarray(t, dtype=np.float64)
    gap = np.maximum(tau - t, 1e-300)
    return np.sqrt(gap) * np.exp(-np.sqrt(0.5 * np.abs(np.log(gap))))


def long_term_radius(r0, c1, c2, latent_heat):
    """Limit radius of a supercooled 2D disk absorbing all heat."""
    return np.sqrt(r0 ** 2 + (c1 + c2) / (latent_heat * pi))


def physical_jump_size(r0, delta0, latent_heat, domain_radius=1.0):
    """Smallest positive root Delta of the 2D initial-jump balance

        pi ((r0+Delta)^2 - r0^2)
            = ((r0 + min(Delta, delta0))^2 - r0^2)
              / (L ((r0 + delta0)^2 - r0^2)),

    or 0.0 if there is none below domain_radius - r0."""
    def f(delta):
        lhs = pi * ((r0 + delta) ** 2 - r0 ** 2)
        num = (r0 + min(delta, delta0)) ** 2 - r0 ** 2
        return lhs - num / (latent_heat * ((r0 + delta0) ** 2 - r0 ** 2))

    grid = np.linspace(1e-9, domain_radius - r0, 4096)
    vals = np.array([f(x) for x in grid])
    change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(change) == 0:
        return 0.0
    lo, hi = grid[change[0]], grid[change[0] + 1]
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.sign(f(mid)) == np.sign(f(lo)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# temperature recovery
# ---------------------------------------------------------------------------

def recover_temperature(arch, params, cfg: ScenarioConfig, t, r_grid,
                        n_particles=20000, seed=1234):
    """Radial temperatures v_i(t, r) from surviving particles.

    Simulates both phases against the trained region with relaxed stopping
    and returns {side: values on r_grid}, using a Silverman-bandwidth
    Gaussian KDE of the surviving radius distribution:

        v_i(t, r) = sign_i * c_i * surv_frac * kde(r) / (S_d r^(d-1)).
    """
    from scipy.stats import gaussian_kde
    from .levelset import rho_values
    from .particles import TimeGrid, simulate_reflected
    from .geometry import relaxed_phase
    from .loss import stopping_probabilities

    phi0 = cfg.initial_levelset()
    grid = TimeGrid(cfg.horizon, cfg.steps)
    n_idx = int(round(t / grid.dt))
    rng = np.random.default_rng(seed)
    eps = cfg.eps_side()
    coeff = {2: 2.0 * pi, 3: 4.0 * pi}[cfg.dim]
    out = {}
    for spec in part_specs(cfg):
        alpha = cfg.alpha1 if spec.side == 1 else cfg.alpha2
        x0 = spec.sampler(rng, n_particles)
        paths = simulate_reflected(x0, grid, alpha, cfg.domain_radius, rng,
                                   antithetic=False)
        flat = paths[:, :n_idx + 1].reshape(-1, cfg.dim)
        tt = np.tile(grid.times[:n_idx + 1], n_particles)
        rho = rho_values(arch, params, phi0, tt, flat).reshape(
            n_particles, n_idx + 1)
        chi = relaxed_phase(rho, eps[spec.side])
        q = chi if spec.side == 1 else 1.0 - chi
        q_probs = stopping_probabilities(q)
        surv = 1.0 - q_probs.sum(axis=-1)
        surv = np.clip(surv, 0.0, 1.0)
        frac = surv.mean()
        radii = np.linalg.norm(paths[:, n_idx], axis=-1)
        if frac < 1e-12 or np.count_nonzero(surv > 0) < 8:
            out[spec.side] = np.zeros_like(r_grid)
            continue
        kde = gaussian_kde(radii, bw_method="silverman", weights=surv)
        dens = kde(r_grid)
        out[spec.side] = (spec.sign * spec.mass * frac * dens
                          / (coeff * np.maximum(r_grid, 1e-9)
                             ** (cfg.dim - 1)))
    return out
