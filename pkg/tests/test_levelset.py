"""Level-set network: initial shapes, analytic spatial gradient, rho."""

import numpy as np
import pytest

from stefan_dls.autodiff import ParamStore, Tape
from stefan_dls.levelset import (DumbbellLevelSet, NetworkArch, eval_on_tape,
                                 init_params, make_initial_levelset,
                                 phi_and_grad, phi_grid, rho_values)


def test_initial_levelset_values():
    sphere = make_initial_levelset("sphere", 0.5)
    assert np.isclose(sphere.value(np.array([[0.5, 0.0]]))[0], 0.0)
    assert np.isclose(sphere.value(np.array([[0.0, 0.0]]))[0], -0.5)

    l1 = make_initial_levelset("l1ball", 0.5)
    assert np.isclose(l1.value(np.array([[0.25, 0.25]]))[0], 0.0)
    assert l1.value(np.array([[0.3, 0.3]]))[0] > 0.0

    diamond = make_initial_levelset("diamond", 0.75)
    # on an axis the boundary sits at |x| = r0
    assert np.isclose(diamond.value(np.array([[0.75, 0.0]]))[0], 0.0)

    db = DumbbellLevelSet()
    assert db.value(np.array([[-0.45, 0.0]]))[0] < 0.0   # ball center
    assert db.value(np.array([[0.0, 0.0]]))[0] < 0.0     # bar interior
    assert db.value(np.array([[0.0, 0.5]]))[0] > 0.0     # outside


def test_initial_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    for kind, r0 in [("sphere", 0.5), ("diamond", 0.75)]:
        phi0 = make_initial_levelset(kind, r0)
        pts = rng.uniform(-0.8, 0.8, size=(50, 2))
        pts = pts[np.min(np.abs(pts), axis=1) > 0.05]  # stay off the axes
        g = phi0.grad(pts)
        h = 1e-6
        for i in range(2):
            dp = np.zeros(2)
            dp[i] = h
            fd = (phi0.value(pts + dp) - phi0.value(pts - dp)) / (2 * h)
            assert np.allclose(g[:, i], fd, rtol=1e-4, atol=1e-6)


def test_arch_defaults():
    arch = NetworkArch(dim=2)
    assert arch.width == 23
    assert NetworkArch(dim=3).width == 24
    names = [n for n, _ in arch.layout()]
    assert names == ["W1", "b1", "W2", "b2", "W3", "b3"]
    assert dict(arch.layout())["W1"] == (23, 3)


def test_init_scales():
    arch = NetworkArch(dim=2)
    params = init_params(arch, np.random.default_rng(0))
    assert np.all(params.get("b1") == 0.0)
    assert np.max(np.abs(params.get("W3"))) < 0.01 * np.sqrt(6.0 / 24) + 1e-12
    assert np.max(np.abs(params.get("W1"))) <= np.sqrt(6.0 / 26)


def test_zero_network_identity():
    """With theta = 0 the level set is exactly phi0 and rho is the signed
    distance for a sphere."""
    arch = NetworkArch(dim=2)
    params = ParamStore(arch.layout())  # all zeros
    phi0 = make_initial_levelset("sphere", 0.5)
    pts = np.random.default_rng(1).uniform(-1, 1, size=(100, 2))
    phi, grad = phi_and_grad(arch, params, phi0, 0.3, pts)
    assert np.allclose(phi, phi0.value(pts))
    rho = rho_values(arch, params, phi0, 0.3, pts)
    # exact signed distance up to float rounding in |x| / |x|
    assert np.allclose(rho, np.linalg.norm(pts, axis=1) - 0.5,
                       rtol=0.0, atol=1e-15)


def test_tape_and_numpy_agree():
    arch = NetworkArch(dim=2)
    params = init_params(arch, np.random.default_rng(5))
    params.flat += 0.05 * np.random.default_rng(6).standard_normal(params.size)
    phi0 = make_initial_levelset("sphere", 0.5)
    pts = np.random.default_rng(7).uniform(-1, 1, size=(40, 2))
    t = np.linspace(0, 1, 40)
    tape = Tape(params)
    ev = eval_on_tape(tape, arch, phi0, t, pts)
    phi, grad = phi_and_grad(arch, params, phi0, t, pts)
    assert np.allclose(ev.phi.value, phi)
    assert np.allclose(ev.grad_x.value, grad)


def test_spatial_gradient_matches_finite_differences():
    arch = NetworkArch(dim=3)
    params = init_params(arch, np.random.default_rng(9))
    params.flat *= 20.0  # make G non-trivial
    phi0 = make_initial_levelset("sphere", 0.5)
    pts = np.random.default_rng(10).uniform(-0.9, 0.9, size=(30, 3))
    pts = pts[np.linalg.norm(pts, axis=1) > 0.05]
    t = np.full(len(pts), 0.4)
    _, grad = phi_and_grad(arch, params, phi0, t, pts)
    h = 1e-6
    for i in range(3):
        dp = np.zeros(3)
        dp[i] = h
        fd = (phi_and_grad(arch, params, phi0, t, pts + dp)[0]
              - phi_and_grad(arch, params, phi0, t, pts - dp)[0]) / (2 * h)
        assert np.allclose(grad[:, i], fd, rtol=1e-5, atol=1e-7)


def test_parameter_gradient_through_rho():
    """FD check of d/dtheta of sum(rho) — exercises the analytic spatial
    gradient recorded as tape ops."""
    arch = NetworkArch(dim=2)
    rng = np.random.default_rng(12)
    params = init_params(arch, rng)
    params.flat += 0.1 * rng.standard_normal(params.size)
    phi0 = make_initial_levelset("sphere", 0.5)
    pts = rng.uniform(-0.9, 0.9, size=(25, 2))
    t = np.linspace(0.0, 1.0, 25)

    def value(p):
        return float(np.sum(rho_values(arch, p, phi0, t, pts)))

    tape = Tape(params)
    ev = eval_on_tape(tape, arch, phi0, t, pts)
    grad = tape.backward(tape.sum(ev.rho))
    for _ in range(6):
        v = rng.standard_normal(params.size)
        h = 1e-6
        pp, pm = params.copy(), params.copy()
        pp.flat += h * v
        pm.flat -= h * v
        fd = (value(pp) - value(pm)) / (2 * h)
        assert np.isclose(grad @ v, fd, rtol=1e-4, atol=1e-9)


def test_degenerate_gradient_flagged_not_fatal():
    arch = NetworkArch(dim=2)
    params = ParamStore(arch.layout())

    class Flat:
        def value(self, x):
            return np.zeros(len(x))

        def grad(self, x):
            return np.zeros_like(x)

    tape = Tape(params)
    ev = eval_on_tape(tape, arch, Flat(), np.zeros(4),
                      np.zeros((4, 2)))
    assert ev.n_degenerate == 4
    assert np.all(np.isfinite(ev.rho.value))


def test_phi_grid_shape():
    arch = NetworkArch(dim=2)
    params = ParamStore(arch.layout())
    phi0 = make_initial_levelset("sphere", 0.5)
    axis, values = phi_grid(arch, params, phi0, 0.0, 1.0, 21)
    assert values.shape == (21, 21)
    assert np.isclose(values[10, 10], -0.5)  # origin
