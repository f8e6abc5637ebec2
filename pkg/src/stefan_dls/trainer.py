"""Training loop: Adam on the Monte Carlo growth-condition loss.

Every iteration draws fresh test functions and particle batches from a
counter-based RNG stream keyed by (seed, iteration), assembles the loss on
a fresh tape, and takes one Adam step on loss + lambda * penalty with the
penalty weight annealed from the gradient magnitudes.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore, Tape
from .experiments import (ScenarioConfig, part_specs, scenario_hash)
from .levelset import NetworkArch, init_params
from .loss import (AnnealState, LossBatch, ParticleBatch, assemble_loss,
                   draw_test_functions)
from .particles import (TimeGrid, duplicate_for_antithetic, sample_ball,
                        sample_radial_density, simulate_reflected)
from .levelset import GRAD_NORM_KAPPA
from .tension import generate_arrivals, radial_trick_transform

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
EARLY_STOP_WINDOW = 50
EARLY_STOP_RTOL = 1e-3


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(m=np.zeros(size), v=np.zeros(size))

    def update(self, grad, lr):
        self.step += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        mhat = self.m / (1.0 - ADAM_BETA1 ** self.step)
        vhat = self.v / (1.0 - ADAM_BETA2 ** self.step)
        return lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


@dataclass
class TrainRecord:
    iteration: int
    loss: float
    penalty: float
    lam: float
    seconds: float


@dataclass
class TrainResult:
    cfg: ScenarioConfig
    arch: NetworkArch
    params: ParamStore
    records: list
    early_stopped: bool = False
    band_vanished: list = field(default_factory=list)


def iteration_rng(seed, iteration):
    """Counter-based per-iteration stream."""
    return np.random.Generator(np.random.Philox(key=[seed, iteration]))


def resolve_parts(cfg: ScenarioConfig):
    """Particle part specs, with the radial trick applied when requested.

    Returns (specs, effective_gamma): the trick folds gamma into signed
    initial temperatures, so the transformed run uses gamma = 0.
    """
    if not cfg.radial_trick or cfg.gamma <= 0.0:
        return part_specs(cfg), cfg.gamma
    radial = [(s.side, s.sign, s.mass, s.r_lo, s.r_hi)
              for s in part_specs(cfg)]
    trick = radial_trick_transform(radial, cfg.gamma, cfg.dim)
    specs = []
    for p in trick:
        def sampler(rng, n, p=p):
            return sample_radial_density(rng, n, cfg.dim, p.r_lo, p.r_hi,
                                         p.density)
        from .experiments import PartSpec
        specs.append(PartSpec(side=p.side, sign=p.sign, mass=p.mass,
                              sampler=sampler, r_lo=p.r_lo, r_hi=p.r_hi))
    return specs, 0.0


def build_batch(cfg: ScenarioConfig, arch, params, phi0, rng, specs,
                gamma_eff):
    """Draw one training batch (test functions, particles, arrivals)."""
    grid = TimeGrid(cfg.horizon, cfg.steps)
    j = cfg.batch_size
    centers, betas = draw_test_functions(rng, cfg.n_test_functions, cfg.dim,
                                         cfg.domain_radius)
    parts = []
    for spec in specs:
        alpha = cfg.alpha1 if spec.side == 1 else cfg.alpha2
        x0 = duplicate_for_antithetic(spec.sampler(rng, j // 2))
        paths = simulate_reflected(x0, grid, alpha, cfg.domain_radius, rng)
        parts.append(ParticleBatch(side=spec.side, sign=spec.sign,
                                   mass=spec.mass, paths=paths))
    uniform = sample_ball(rng, j, cfg.dim, cfg.domain_radius)
    g0 = phi0.grad(uniform)
    rho0 = phi0.value(uniform) / np.sqrt(
        np.sum(g0 * g0, axis=-1) + GRAD_NORM_KAPPA ** 2)
    arrivals, vanished = [], []
    if gamma_eff > 0.0:
        arrivals, vanished = generate_arrivals(
            arch, params, phi0, grid, gamma=gamma_eff, delta=cfg.delta_band,
            alpha=cfg.alpha1, radius=cfg.domain_radius, rng=rng)
    batch = LossBatch(times=grid.times, parts=parts, uniform=uniform,
                      rho0_minus=rho0, centers=centers, betas=betas,
                      arrivals=arrivals)
    return batch, vanished


def train(cfg: ScenarioConfig, out_dir=None, callback=None) -> TrainResult:
    cfg.validate()
    arch = NetworkArch(dim=cfg.dim, horizon=cfg.horizon)
    params = init_params(arch, iteration_rng(cfg.seed, 2 ** 31))
    phi0 = cfg.initial_levelset()
    specs, gamma_eff = resolve_parts(cfg)
    adam = AdamState.zeros(params.size)
    anneal = AnnealState(lambda0=cfg.lambda0)
    records = []
    vanished_all = []
    jump_cap = cfg.domain_volume / 2.0
    eps_side = cfg.eps_side()
    early = False
    t_start = time.monotonic()
    losses = []
    for m in range(cfg.iterations):
        rng = iteration_rng(cfg.seed, m)
        batch, vanished = build_batch(cfg, arch, params, phi0, rng, specs,
                                      gamma_eff)
        vanished_all.extend(vanished)
        tape = Tape(params)
        terms = assemble_loss(tape, arch, phi0, batch,
                              latent_heat=cfg.latent_heat,
                              eps_side=eps_side,
                              domain_volume=cfg.domain_volume,
                              jump_cap=jump_cap)
        grad_loss = tape.backward(terms.loss)
        grad_pen = tape.backward(terms.penalty)
        lam = anneal.update(grad_loss, grad_pen,
                            active=terms.max_symdiff > jump_cap)
        params.flat -= adam.update(grad_loss + lam * grad_pen, cfg.lr)
        loss_val = float(terms.loss.value)
        losses.append(loss_val)
        records.append(TrainRecord(iteration=m, loss=loss_val,
                                   penalty=float(terms.penalty.value),
                                   lam=lam,
                                   seconds=time.monotonic() - t_start))
        if callback is not None:
            callback(m, records[-1], params)
        if out_dir is not None and cfg.checkpoint_every > 0 \
                and (m + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(f"{out_dir}/checkpoint_{m + 1:06d}.bin",
                            cfg, arch, params, m + 1)
        if cfg.early_stop and m + 1 >= 2 * EARLY_STOP_WINDOW:
            ma1 = np.mean(losses[-EARLY_STOP_WINDOW:])
            ma0 = np.mean(losses[-2 * EARLY_STOP_WINDOW:-EARLY_STOP_WINDOW])
            if abs(ma1 - ma0) < EARLY_STOP_RTOL * abs(ma0):
                early = True
                break
    if out_dir is not None:
        save_checkpoint(f"{out_dir}/checkpoint_final.bin", cfg, arch, params,
                        len(records))
    return TrainResult(cfg=cfg, arch=arch, params=params, records=records,
                       early_stopped=early, band_vanished=vanished_all)


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line + flat little-endian float64 block
# ---------------------------------------------------------------------------

def save_checkpoint(path, cfg, arch, params, iteration):
    header = {
        "format": "stefan-dls-checkpoint-v1",
        "iteration": int(iteration),
        "scenario_hash": scenario_hash(cfg),
        "scenario": dataclasses.asdict(cfg),
        "arch": {"dim": arch.dim, "width": arch.width,
                 "horizon": arch.horizon},
        "param_count": int(params.size),
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    cfg = ScenarioConfig(**header["scenario"])
    arch = NetworkArch(**header["arch"])
    params = ParamStore(arch.layout())
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != header["param_count"] or flat.size != params.size:
        raise ValueError("checkpoint parameter block size mismatch")
    params.flat[:] = flat
    return cfg, arch, params, header
