"""Geometric helpers: relaxed phase indicators, ball/annulus volumes and
local mean-curvature estimation by boundary dilation.

Curvature convention: a convex solid region {phi <= 0} has positive
curvature (circle of radius r -> 1/r, sphere of radius r -> 1/r, i.e. the
mean of the principal curvatures).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# relaxed phase indicator
# ---------------------------------------------------------------------------

def relaxed_phase(rho, eps):
    """chi(rho) = min(max(1 - rho/eps, 0)/2, 1); 1 deep inside the solid."""
    rho = np.asarray(rho, dtype=np.float64)
    return np.minimum(np.maximum(1.0 - rho / eps, 0.0) / 2.0, 1.0)


def relaxed_phase_on_tape(tape, rho_node, eps):
    """Tape version of relaxed_phase."""
    u = tape.mul(rho_node, tape.const(1.0 / eps))
    v = tape.sub(tape.const(1.0), u)
    w = tape.max_const(v, 0.0)
    return tape.min_const(tape.mul(w, tape.const(0.5)), 1.0)


def relax_width(alpha, dim, dt):
    """Default mushy-band half width eps = sqrt(alpha * d * dt)."""
    return float(np.sqrt(alpha * dim * dt))


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------

def ball_volume(dim, r):
    if dim == 1:
        return 2.0 * r
    if dim == 2:
        return pi * r * r
    if dim == 3:
        return 4.0 / 3.0 * pi * r ** 3
    raise GeometryError(f"unsupported dimension {dim}")


def annulus_volume(dim, r, delta):
    """Volume of A_{r,delta}: outer shell for delta >= 0, inner shell for
    -r <= delta < 0, and the whole ball B_r for delta < -r."""
    if delta >= 0.0:
        return ball_volume(dim, r + delta) - ball_volume(dim, r)
    if delta >= -r:
        return ball_volume(dim, r) - ball_volume(dim, r + delta)
    return ball_volume(dim, r)


# ---------------------------------------------------------------------------
# curvature by dilation
# ---------------------------------------------------------------------------

@dataclass
class CurvatureProbe:
    """Probe scales: segment/quad half-size eps0 and dilation step eps."""

    eps0: float = 1e-2
    eps: float = 1e-4

    def __post_init__(self):
        if self.eps > self.eps0 / 10.0:
            raise GeometryError("dilation step eps must be <= eps0 / 10")


def _normals(f, pts, tol=1e-10):
    _, grad = f(np.atleast_2d(pts))
    norms = np.linalg.norm(grad, axis=-1, keepdims=True)
    if np.any(norms < tol):
        raise GeometryError("degenerate level-set gradient in curvature probe")
    return grad / norms


def _dilation_ratio_2d(f, y, probe):
    y = np.asarray(y, dtype=np.float64)
    nu = _normals(f, y[None, :])[0]
    mu = np.array([-nu[1], nu[0]])
    ends = np.stack([y + probe.eps0 * mu, y - probe.eps0 * mu])
    dilated = ends + probe.eps * _normals(f, ends)
    return np.linalg.norm(dilated[0] - dilated[1]) / (2.0 * probe.eps0)


def _tri_area(a, b, c):
    u, v = b - a, c - a
    return 0.5 * np.linalg.norm(np.cross(u, v))


def _dilation_ratio_3d(f, y, probe, rng):
    y = np.asarray(y, dtype=np.float64)
    nu = _normals(f, y[None, :])[0]
    v = rng.standard_normal(3)
    v -= np.dot(v, nu) * nu
    n = np.linalg.norm(v)
    if n < 1e-12:
        v = np.array([1.0, 0.0, 0.0]) - nu[0] * nu
        n = np.linalg.norm(v)
    mu1 = v / n
    mu2 = np.cross(nu, mu1)
    corners = np.stack([y + probe.eps0 * mu1, y + probe.eps0 * mu2,
                        y - probe.eps0 * mu1, y - probe.eps0 * mu2])
    dilated = corners + probe.eps * _normals(f, corners)
    area0 = 2.0 * probe.eps0 ** 2
    area1 = (_tri_area(dilated[0], dilated[1], dilated[2])
             + _tri_area(dilated[0], dilated[2], dilated[3]))
    return area1 / area0


def curvature(f, y, dim, probe=None, rng=None):
    """Mean curvature of the level set of f near y by local dilation.

    f maps (P, d) points to (phi, grad).  2D compares segment lengths,
    3D compares areas of a randomly oriented tangent quadrangle.
    """
    probe = probe or CurvatureProbe()
    if dim == 2:
        ratio = _dilation_ratio_2d(f, y, probe)
        return (ratio - 1.0) / probe.eps
    if dim == 3:
        if rng is None:
            rng = np.random.default_rng(0)
        ratio = _dilation_ratio_3d(f, y, probe, rng)
        return (ratio - 1.0) / (2.0 * probe.eps)
    raise GeometryError(f"unsupported dimension {dim}")


def curvature_sign(f, y, dim, probe=None, rng=None, deadband=1e-10):
    """Sign of the dilation ratio offset; 0 within the deadband (flat)."""
    probe = probe or CurvatureProbe()
    if dim == 2:
        ratio = _dilation_ratio_2d(f, y, probe)
    elif dim == 3:
        ratio = _dilation_ratio_3d(f, y, probe,
                                   rng if rng is not None
                                   else np.random.default_rng(0))
    else:
        raise GeometryError(f"unsupported dimension {dim}")
    off = ratio - 1.0
    if abs(off) <= deadband:
        return 0.0
    return float(np.sign(off))


def parabola_curvature(a, y1):
    """Exact curvature of {x2 = x1^2/a} at abscissa y1 (solid above)."""
    return (2.0 / a) / (1.0 + 4.0 * y1 ** 2 / a ** 2) ** 1.5


def paraboloid_curvature(a, b, y1, y2):
    """Exact mean curvature of {x3 = x1^2/a + x2^2/b} at (y1, y2)."""
    num = 4.0 * y1 ** 2 / a + 4.0 * y2 ** 2 / b + a + b
    den = a * b * (1.0 + 4.0 * y1 ** 2 / a ** 2 + 4.0 * y2 ** 2 / b ** 2) ** 1.5
    return num / den


def parabola_levelset(a):
    """Level-set callable for {phi = x1^2/a - x2}; solid is {x2 >= x1^2/a}."""
    def f(pts):
        pts = np.atleast_2d(pts)
        phi = pts[:, 0] ** 2 / a - pts[:, 1]
        grad = np.stack([2.0 * pts[:, 0] / a, -np.ones(len(pts))], axis=-1)
        return phi, grad
    return f


def paraboloid_levelset(a, b):
    """Level-set callable for {phi = x1^2/a + x2^2/b - x3}."""
    def f(pts):
        pts = np.atleast_2d(pts)
        phi = pts[:, 0] ** 2 / a + pts[:, 1] ** 2 / b - pts[:, 2]
        grad = np.stack([2.0 * pts[:, 0] / a, 2.0 * pts[:, 1] / b,
                         -np.full(len(pts), 1.0)], axis=-1)
        return phi, grad
    return f


def sphere_levelset(r):
    def f(pts):
        pts = np.atleast_2d(pts)
        norms = np.linalg.norm(pts, axis=-1)
        grad = pts / np.maximum(norms, 1e-30)[:, None]
        return norms - r, grad
    return f
