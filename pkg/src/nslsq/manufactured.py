"""Manufactured unit-square solution for convergence verification.

The exact velocity is the curl of psi = sin^2(pi x) sin^2(pi y) e^{-t}
(so u = (d_y psi, -d_x psi)): divergence-free, zero trace on the square,
decaying in time.  The body force closing the momentum equation is
computed with zero pressure.
"""

from __future__ import annotations

import numpy as np

PI = np.pi


def exact_velocity(x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x)
    s = np.exp(-t)
    ux = PI * np.sin(PI * x[:, 0]) ** 2 * np.sin(2 * PI * x[:, 1]) * s
    uy = -PI * np.sin(2 * PI * x[:, 0]) * np.sin(PI * x[:, 1]) ** 2 * s
    return np.stack([ux, uy], axis=1)


def exact_gradient(x: np.ndarray, t: float) -> np.ndarray:
    """Velocity gradient, shape (k, 2, 2), [c, d] = d_d u_c."""
    x = np.asarray(x)
    s = np.exp(-t)
    sx, sy = np.sin(PI * x[:, 0]), np.sin(PI * x[:, 1])
    s2x, s2y = np.sin(2 * PI * x[:, 0]), np.sin(2 * PI * x[:, 1])
    c2x, c2y = np.cos(2 * PI * x[:, 0]), np.cos(2 * PI * x[:, 1])
    g = np.empty((len(x), 2, 2))
    g[:, 0, 0] = PI**2 * s2x * s2y * s
    g[:, 0, 1] = 2 * PI**2 * sx**2 * c2y * s
    g[:, 1, 0] = -2 * PI**2 * c2x * sy**2 * s
    g[:, 1, 1] = -PI**2 * s2x * s2y * s
    return g


def exact_laplacian(x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x)
    s = np.exp(-t)
    sx, sy = np.sin(PI * x[:, 0]), np.sin(PI * x[:, 1])
    s2x, s2y = np.sin(2 * PI * x[:, 0]), np.sin(2 * PI * x[:, 1])
    c2x, c2y = np.cos(2 * PI * x[:, 0]), np.cos(2 * PI * x[:, 1])
    lx = 2 * PI**3 * s2y * (c2x - 2 * sx**2) * s
    ly = -2 * PI**3 * s2x * (c2y - 2 * sy**2) * s
    return np.stack([lx, ly], axis=1)


def forcing(nu: float):
    """Body force f = u_t - nu*Lap(u) + (u.grad)u with zero pressure."""

    def f(x, t):
        u = exact_velocity(x, t)
        g = exact_gradient(x, t)
        conv = np.einsum("kd,kcd->kc", u, g)
        return -u - nu * exact_laplacian(x, t) + conv

    return f


def l2v_error_sq(space, grid, values: np.ndarray) -> float:
    """Squared L2(0,T;V) distance of the discrete levels 1..N to the exact
    solution, by degree-5 quadrature per level."""
    r = space.rule5
    xq = r.x.reshape(-1, 2)
    total = 0.0
    for n in range(1, grid.N + 1):
        gh = space.velocity_grad_at_quad(np.asarray(values[n], dtype=np.float64), r)
        ge = exact_gradient(xq, grid.times()[n]).reshape(gh.shape)
        total += grid.dt * np.einsum("t,q,tqcd->", space.det, r.w, (gh - ge) ** 2)
    return float(total)
