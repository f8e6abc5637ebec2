"""Neural level-set function Phi(t, x) = Phi0(x) + G(t, x; theta).

The solid region at time t is {x : Phi(t, x) <= 0}.  G is a small tanh MLP
(two hidden layers) whose spatial gradient is assembled analytically from
the same tape ops as the forward pass, so one reverse sweep gives
parameter gradients of any expression involving both Phi and the
normalized value rho = Phi / |grad_x Phi|.

A pure-numpy twin of the forward/gradient pass is provided for evaluation
paths that do not need parameter gradients (grids, radius scans, band
sampling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamStore, Tape

GRAD_NORM_KAPPA = 1e-12  # smoothing inside |grad Phi| only
DEGENERATE_GRAD_TOL = 1e-12


@dataclass
class NetworkArch:
    """Shape of the correction network G."""

    dim: int                 # spatial dimension d; network input is d+1
    width: int = 0           # hidden width, defaults to 21 + dim
    horizon: float = 1.0     # time inputs are fed as t / horizon

    def __post_init__(self):
        if self.width == 0:
            self.width = 21 + self.dim

    def layout(self):
        d, h = self.dim, self.width
        return [
            ("W1", (h, d + 1)), ("b1", (h,)),
            ("W2", (h, h)), ("b2", (h,)),
            ("W3", (1, h)), ("b3", (1,)),
        ]


def init_params(arch: NetworkArch, rng: np.random.Generator) -> ParamStore:
    """Glorot-uniform weights, zero biases, final layer scaled by 0.01."""
    params = ParamStore(arch.layout())
    for name, shape in arch.layout():
        if name.startswith("b"):
            continue
        fan_out, fan_in = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=shape)
        if name == "W3":
            w *= 0.01
        params.set(name, w)
    return params


# ---------------------------------------------------------------------------
# initial level sets
# ---------------------------------------------------------------------------

class SphereLevelSet:
    """phi0(x) = |x| - r0 (exact signed distance)."""

    def __init__(self, r0):
        self.r0 = float(r0)

    def value(self, x):
        return np.linalg.norm(x, axis=-1) - self.r0

    def grad(self, x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        return x / np.maximum(r, 1e-30)


class L1BallLevelSet:
    """phi0(x) = sum_i |x_i| - r0."""

    def __init__(self, r0):
        self.r0 = float(r0)

    def value(self, x):
        return np.sum(np.abs(x), axis=-1) - self.r0

    def grad(self, x):
        return np.sign(x) + (x == 0.0)  # arbitrary subgradient +1 on the axes


class DiamondLevelSet:
    """phi0(x) = (sum_i sqrt(|x_i|))**2 - r0 (concave-sided diamond)."""

    def __init__(self, r0):
        self.r0 = float(r0)

    def value(self, x):
        return np.sum(np.sqrt(np.abs(x)), axis=-1) ** 2 - self.r0

    def grad(self, x):
        s = np.sum(np.sqrt(np.abs(x)), axis=-1, keepdims=True)
        root = np.maximum(np.sqrt(np.abs(x)), 1e-8)
        return s * np.sign(x) / root


def _box_sdf(p, half):
    q = np.abs(p) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def _box_sdf_grad(p, half, h=1e-7):
    g = np.empty_like(p)
    for i in range(p.shape[-1]):
        dp = np.zeros(p.shape[-1])
        dp[i] = h
        g[..., i] = (_box_sdf(p + dp, half) - _box_sdf(p - dp, half)) / (2 * h)
    return g


class DumbbellLevelSet:
    """Min of two ball SDFs and a connecting-bar box SDF (2D)."""

    def __init__(self, centers=((-0.45, 0.0), (0.45, 0.0)), r=0.3,
                 bar_half=(0.45, 0.08)):
        self.centers = [np.asarray(c, dtype=float) for c in centers]
        self.r = float(r)
        self.bar_half = np.asarray(bar_half, dtype=float)

    def _branches(self, x):
        vals = [np.linalg.norm(x - c, axis=-1) - self.r for c in self.centers]
        vals.append(_box_sdf(x, self.bar_half))
        return np.stack(vals, axis=-1)

    def value(self, x):
        return np.min(self._branches(x), axis=-1)

    def grad(self, x):
        which = np.argmin(self._branches(x), axis=-1)
        grads = []
        for c in self.centers:
            d = x - c
            grads.append(d / np.maximum(np.linalg.norm(d, axis=-1,
                                                       keepdims=True), 1e-30))
        grads.append(_box_sdf_grad(x, self.bar_half))
        grads = np.stack(grads, axis=-2)  # (..., n_branch, d)
        return np.take_along_axis(grads, which[..., None, None],
                                  axis=-2)[..., 0, :]


def make_initial_levelset(kind, r0, **kwargs):
    if kind == "sphere":
        return SphereLevelSet(r0)
    if kind == "l1ball":
        return L1BallLevelSet(r0)
    if kind == "diamond":
        return DiamondLevelSet(r0)
    if kind == "dumbbell":
        return DumbbellLevelSet(**kwargs) if kwargs else DumbbellLevelSet()
    raise ValueError(f"unknown initial level set kind {kind!r}")


# ---------------------------------------------------------------------------
# tape evaluation
# ---------------------------------------------------------------------------

@dataclass
class LevelSetEval:
    phi: object          # tape node (P,)
    grad_x: object       # tape node (P, d)
    rho: object          # tape node (P,)
    n_degenerate: int    # points where |grad phi| < tolerance (flag, not error)


def eval_on_tape(tape: Tape, arch: NetworkArch, phi0, t, x) -> LevelSetEval:
    """Record Phi, grad_x Phi and rho at points (t_i, x_i) on the tape.

    t: (P,) times; x: (P, d) positions.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    z = np.concatenate([t[:, None] / arch.horizon, x], axis=1)
    zc = tape.const(z)
    w1, b1 = tape.param("W1"), tape.param("b1")
    w2, b2 = tape.param("W2"), tape.param("b2")
    w3, b3 = tape.param("W3"), tape.param("b3")

    h1 = tape.tanh(tape.affine(zc, w1, b1))
    h2 = tape.tanh(tape.affine(h1, w2, b2))
    g = tape.reshape(tape.affine(h2, w3, b3), (len(t),))
    phi = tape.add(g, tape.const(phi0.value(x)))

    one = tape.const(1.0)
    d1 = tape.sub(one, tape.mul(h1, h1))
    d2 = tape.sub(one, tape.mul(h2, h2))
    g2 = tape.mul(d2, w3)                       # (P, h) via broadcast of (1, h)
    g1 = tape.mul(tape.matmul(g2, w2), d1)
    w1x = tape.slice_cols(w1, 1, arch.dim + 1)  # drop the time column
    grad_g = tape.matmul(g1, w1x)
    grad_phi = tape.add(grad_g, tape.const(phi0.grad(x)))

    sq = tape.sum(tape.mul(grad_phi, grad_phi), axis=1)
    norm = tape.sqrt(tape.add(sq, tape.const(GRAD_NORM_KAPPA ** 2)))
    rho = tape.div(phi, norm)
    n_deg = int(np.count_nonzero(sq.value < DEGENERATE_GRAD_TOL ** 2))
    return LevelSetEval(phi=phi, grad_x=grad_phi, rho=rho, n_degenerate=n_deg)


# ---------------------------------------------------------------------------
# plain numpy evaluation (no tape)
# ---------------------------------------------------------------------------

def phi_and_grad(arch: NetworkArch, params: ParamStore, phi0, t, x):
    """Numpy twin of eval_on_tape; returns (phi, grad_x phi)."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    scalar_t = t.ndim == 0
    if scalar_t:
        t = np.full(x.shape[0], float(t))
    z = np.concatenate([t[:, None] / arch.horizon, x], axis=1)
    w1, b1 = params.get("W1"), params.get("b1")
    w2, b2 = params.get("W2"), params.get("b2")
    w3, b3 = params.get("W3"), params.get("b3")
    h1 = np.tanh(z @ w1.T + b1)
    h2 = np.tanh(h1 @ w2.T + b2)
    phi = (h2 @ w3.T + b3)[:, 0] + phi0.value(x)
    g2 = (1.0 - h2 * h2) * w3
    g1 = (g2 @ w2) * (1.0 - h1 * h1)
    grad = g1 @ w1[:, 1:] + phi0.grad(x)
    return phi, grad


def rho_values(arch, params, phi0, t, x):
    phi, grad = phi_and_grad(arch, params, phi0, t, x)
    norm = np.sqrt(np.sum(grad * grad, axis=-1) + GRAD_NORM_KAPPA ** 2)
    return phi / norm


def levelset_evaluator(arch, params, phi0, t):
    """Frozen-time callable pts -> (phi, grad), e.g. for curvature probes."""
    def f(pts):
        return phi_and_grad(arch, params, phi0, float(t), np.atleast_2d(pts))
    return f


def phi_grid(arch, params, phi0, t, radius, resolution):
    """Phi on a regular grid over [-radius, radius]^d; returns (axes, values)."""
    d = arch.dim
    axis = np.linspace(-radius, radius, resolution)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    phi, _ = phi_and_grad(arch, params, phi0, float(t), pts)
    return axis, phi.reshape((resolution,) * d)
