"""Monte Carlo loss from the probabilistic growth condition.

For every Gaussian test function psi and grid time t_n the residual is

    ell_n[psi] = I0[psi] - R_n[psi]
                 - (1/L) * sum_parts sign * mass * SV_n[psi, part]
                 - (1/L) * Khat_n[psi]

where I0 is the integral of psi over the initial solid region, R_n the
integral over the current region {Phi(t_n, .) <= 0}, SV_n the stopped value
of the corresponding particle part under relaxed stopping, and Khat the
surface-tension term (zero when gamma = 0).  The training loss is the sum
of squared residuals over test functions and n = 1..N, plus an annealed
penalty on the largest one-step symmetric difference of the region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import relaxed_phase, relaxed_phase_on_tape
from .levelset import eval_on_tape

PENALTY_LSE_TEMPERATURE = 100.0
PENALTY_NEG_SLOPE = 0.01


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

def draw_test_functions(rng, count, dim, radius, center_shrink=0.9,
                        beta_range=(4.0, 64.0)):
    """Gaussian bumps psi_k(x) = exp(-beta_k |x - z_k|^2).

    Centers are uniform in the shrunken ball B_{0.9 R}; stiffnesses are
    log-uniform over beta_range.
    """
    from .particles import sample_ball
    centers = sample_ball(rng, count, dim, center_shrink * radius)
    betas = np.exp(rng.uniform(np.log(beta_range[0]), np.log(beta_range[1]),
                               size=count))
    return centers, betas


def eval_test_functions(x, centers, betas):
    """psi values, shape x.shape[:-1] + (K,)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    # |x - z|^2 = |x|^2 - 2 x.z + |z|^2 via BLAS, avoids a (..., K, d) array
    d2 = (np.sum(flat * flat, axis=1)[:, None]
          - 2.0 * flat @ centers.T
          + np.sum(centers * centers, axis=1)[None, :])
    out = np.exp(-betas * np.maximum(d2, 0.0))
    return out.reshape(x.shape[:-1] + (len(centers),))


def initial_integral(phi0, centers, betas, dim, radius, n_samples=10 ** 6,
                     seed=0):
    """Sharp MC integral of each psi over the initial solid {phi0 <= 0}."""
    from .particles import sample_ball
    from .geometry import ball_volume
    rng = np.random.default_rng(seed)
    pts = sample_ball(rng, n_samples, dim, radius)
    inside = phi0.value(pts) <= 0.0
    psi = eval_test_functions(pts[inside], centers, betas)
    return ball_volume(dim, radius) / n_samples * psi.sum(axis=0)


# ---------------------------------------------------------------------------
# stopping machinery (numpy reference versions)
# ---------------------------------------------------------------------------

def stopping_probabilities(q):
    """Q_n = q_n * prod_{l<n} (1 - q_l) along the last axis."""
    q = np.asarray(q, dtype=np.float64)
    surv = np.ones_like(q)
    np.cumprod(1.0 - q[..., :-1], axis=-1, out=surv[..., 1:])
    return q * surv


def stopped_value(q_probs, psi):
    """Cumulative sum_{l<=n} Q_l psi_l along the last axis."""
    return np.cumsum(q_probs * psi, axis=-1)


# ---------------------------------------------------------------------------
# batch containers
# ---------------------------------------------------------------------------

@dataclass
class ParticleBatch:
    side: int            # 1 liquid, 2 solid
    sign: float          # sign of the initial temperature on this part
    mass: float          # L1 mass of the initial temperature on this part
    paths: np.ndarray    # (J, N+1, d)


@dataclass
class ArrivalBatch:
    """Surface-tension boundary arrivals for one side."""

    side: int
    steps: np.ndarray       # (A,) arrival step indices m
    points: np.ndarray      # (A, d)
    weights: np.ndarray     # (A,) normalized signed weights
    paths: np.ndarray       # (A, N+1, d); rows frozen at the point before m


@dataclass
class LossBatch:
    times: np.ndarray            # (N+1,)
    parts: list
    uniform: np.ndarray          # (J, d)
    rho0_minus: np.ndarray       # (J,) normalized phi0 at the uniform points
    centers: np.ndarray
    betas: np.ndarray
    arrivals: list = field(default_factory=list)


@dataclass
class LossTerms:
    loss: object                 # scalar tape node
    penalty: object              # scalar tape node
    residuals: np.ndarray        # (N+1, K) values (row 0 unused)
    per_test_function: np.ndarray  # (K,) sum over n of ell_n^2
    max_symdiff: float           # exact (non smoothed) max one-step symdiff
    n_degenerate: int


# ---------------------------------------------------------------------------
# tape assembly
# ---------------------------------------------------------------------------

def _stopping_node(tape, rho_node, side, eps):
    chi = relaxed_phase_on_tape(tape, rho_node, eps)
    if side == 2:
        return tape.sub(tape.const(1.0), chi)
    return chi


def _eval_paths(tape, arch, phi0, times, paths):
    j, n1, d = paths.shape
    t_flat = np.tile(times, j)
    ev = eval_on_tape(tape, arch, phi0, t_flat, paths.reshape(j * n1, d))
    rho = tape.reshape(ev.rho, (j, n1))
    return rho, ev.n_degenerate


def assemble_loss(tape, arch, phi0, batch: LossBatch, *, latent_heat,
                  eps_side, domain_volume, jump_cap):
    """Record the full training loss and penalty on the tape.

    eps_side: dict side -> relaxation width (side 0 = uniform indicator).
    jump_cap: penalty threshold C (typically |Omega| / 2).
    """
    times = batch.times
    n1 = len(times)
    k = len(batch.betas)
    n_deg = 0
    inv_l = 1.0 / latent_heat

    # region integrals over uniform samples
    j_u = len(batch.uniform)
    rho_u, deg = _eval_paths(tape, arch, phi0,
                             times, np.repeat(batch.uniform[:, None, :],
                                              n1, axis=1))
    n_deg += deg
    q0 = _stopping_node(tape, rho_u, 1, eps_side[0])       # (J, N+1)
    psi_u = eval_test_functions(batch.uniform, batch.centers, batch.betas)
    region = tape.mul(tape.project(q0, psi_u), tape.const(domain_volume / j_u))

    # time-0- integral over the same samples (common random numbers)
    chi0 = relaxed_phase(batch.rho0_minus, eps_side[0])
    i0 = domain_volume / j_u * (chi0[:, None] * psi_u).sum(axis=0)  # (K,)

    ell = tape.sub(tape.const(i0[None, :]), region)

    # stopped values per particle part
    for part in batch.parts:
        rho_p, deg = _eval_paths(tape, arch, phi0, times, part.paths)
        n_deg += deg
        q = _stopping_node(tape, rho_p, part.side, eps_side[part.side])
        q_probs = tape.mul(q, tape.exclusive_cumprod(
            tape.sub(tape.const(1.0), q)))
        psi = eval_test_functions(part.paths, batch.centers, batch.betas)
        sv = tape.stopped_values(q_probs, psi / len(part.paths))
        ell = tape.sub(ell, tape.mul(sv, tape.const(part.sign * part.mass
                                                    * inv_l)))

    # surface tension: Khat = -(K1 + K2); ell gets -(1/L) Khat = +(K1+K2)/L
    for arr in batch.arrivals:
        if len(arr.steps) == 0:
            continue
        rho_a, deg = _eval_paths(tape, arch, phi0, times, arr.paths)
        n_deg += deg
        q = _stopping_node(tape, rho_a, arr.side, eps_side[arr.side])
        step_mask = (np.arange(n1)[None, :] >= arr.steps[:, None] + 1)
        q = tape.mul(q, tape.const(step_mask.astype(float)))
        q_probs = tape.mul(q, tape.exclusive_cumprod(
            tape.sub(tape.const(1.0), q)))
        psi = eval_test_functions(arr.paths, batch.centers, batch.betas)
        sv = tape.stopped_values(q_probs, psi * arr.weights[:, None, None])
        psi_at = eval_test_functions(arr.points, batch.centers, batch.betas)
        base = np.einsum("a,ak,an->nk", arr.weights, psi_at,
                         step_mask.astype(float))
        k_side = tape.sub(sv, tape.const(base))
        ell = tape.add(ell, tape.mul(k_side, tape.const(inv_l)))

    # squared residuals over n = 1..N (row 0 masked out)
    mask = np.ones((n1, 1))
    mask[0] = 0.0
    ell_m = tape.mul(ell, tape.const(mask))
    loss = tape.sum(tape.mul(ell_m, ell_m))

    # jump penalty from the uniform-sample symmetric differences
    diffs = tape.time_diff(q0)                                # (J, N)
    symdiff = tape.mul(tape.sum(tape.abs_smooth(diffs), axis=0),
                       tape.const(domain_volume / j_u))       # (N,)
    sd_vals = symdiff.value
    m0 = float(sd_vals.max())
    z = tape.mul(tape.sub(symdiff, tape.const(m0)),
                 tape.const(PENALTY_LSE_TEMPERATURE))
    lse = tape.add(tape.const(m0),
                   tape.mul(tape.log(tape.sum(tape.exp(z))),
                            tape.const(1.0 / PENALTY_LSE_TEMPERATURE)))
    over = tape.sub(lse, tape.const(jump_cap))
    penalty = tape.add(tape.max_const(over, 0.0),
                       tape.mul(tape.min_const(over, 0.0),
                                tape.const(PENALTY_NEG_SLOPE)))

    res = ell_m.value
    return LossTerms(loss=loss, penalty=penalty, residuals=res,
                     per_test_function=np.sum(res * res, axis=0),
                     max_symdiff=m0, n_degenerate=n_deg)


# ---------------------------------------------------------------------------
# penalty annealing
# ---------------------------------------------------------------------------

@dataclass
class AnnealState:
    lambda0: float = 0.1
    scale: float = 1.0

    @property
    def value(self):
        return self.lambda0 * self.scale

    def update(self, grad_loss, grad_penalty, active=True):
        """Track the gradient-scale ratio while the penalty is active.

        The scale boost only applies while the cap is exceeded; on the
        leaky side it decays back to 1 so the mild smoothing incentive
        cannot grow to dominate the physics terms (a small penalty
        gradient would otherwise blow the ratio up without bound).
        """
        if active:
            target = (np.max(np.abs(grad_loss))
                      / (np.mean(np.abs(grad_penalty)) + 1e-12))
        else:
            target = 1.0
        self.scale = 0.9 * self.scale + 0.1 * target
        return self.value
