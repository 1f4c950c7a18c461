"""Backward-Euler drivers for the Stokes-type evolution problems.

All five schemes of the outer iteration step one constrained system
``(M/dt + A) u^{n+1} + B^T lam = M u^n/dt + load`` forward in time; the
constant-coefficient operators (heat type ``M/dt + K`` and Stokes type
``K``) are factorized once per run and reused across every time level
and outer iterate, while the linearized Navier-Stokes operator is
re-factorized at each level through a prebuilt sparsity template.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import Space
from .linalg import Factorization, SaddleFactorization, SaddleSystem, factorize


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of N steps on [0, T]."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


class FieldTrajectory:
    """Velocity coefficient levels over a time grid.

    State trajectories hold N+1 levels with level 0 the initial
    condition; Riesz lifts hold N levels, one per interval.  Optional
    reduced-precision storage keeps memory bounded; all norms accumulate
    in float64.
    """

    def __init__(self, grid: TimeGrid, values: np.ndarray,
                 pressures: np.ndarray | None = None):
        self.grid = grid
        self.values = values
        self.pressures = pressures

    @classmethod
    def zeros(cls, grid: TimeGrid, n_velocity: int, levels: int | None = None,
              dtype=np.float64) -> "FieldTrajectory":
        return cls(grid, np.zeros((grid.N + 1 if levels is None else levels,
                                   n_velocity), dtype=dtype))

    @property
    def levels(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "FieldTrajectory":
        return FieldTrajectory(self.grid, self.values.copy(),
                               None if self.pressures is None else self.pressures.copy())

    def axpy(self, alpha: float, other: "FieldTrajectory") -> "FieldTrajectory":
        """self + alpha*other, level 0 untouched for state trajectories."""
        out = self.values.copy()
        out += np.asarray(alpha * other.values, dtype=out.dtype)
        return FieldTrajectory(self.grid, out)


class _LinearizedTemplate:
    """Fixed sparsity pattern of the linearized saddle operator.

    The constant part (M/dt + nu*K, divergence blocks, Dirichlet identity
    rows) and the positions of the convection entries are prepared once;
    each time level only recomputes the convection values.
    """

    def __init__(self, space: Space, a_const: sp.spmatrix, b_div: sp.spmatrix):
        self.space = space
        n_vel, n_pre = a_const.shape[0], b_div.shape[0]
        self.n = n_vel + n_pre
        s = sp.bmat([[a_const, b_div.T], [b_div, None]], format="coo")
        constrained = np.concatenate([space.dirichlet_dofs, [n_vel]]).astype(np.int64)
        self.constrained = constrained
        free = np.ones(self.n, dtype=bool)
        free[constrained] = False
        keep = free[s.row] & free[s.col]
        const_rows = np.concatenate([s.row[keep], constrained])
        const_cols = np.concatenate([s.col[keep], constrained])
        self.const_data = np.concatenate([s.data[keep], np.ones(len(constrained))])

        nt, ns = space.mesh.n_triangles, space.n_scalar
        base_r = np.broadcast_to(space.tri_p2[:, :, None], (nt, 6, 6)).ravel()
        base_c = np.broadcast_to(space.tri_p2[:, None, :], (nt, 6, 6)).ravel()
        rows = [base_r, base_r + ns]
        cols = [base_c, base_c + ns]
        for c in range(2):
            for d in range(2):
                rows.append(base_r + c * ns)
                cols.append(base_c + d * ns)
        conv_rows = np.concatenate(rows)
        conv_cols = np.concatenate(cols)
        self.conv_mask = (free[conv_rows] & free[conv_cols]).astype(np.float64)
        self.rows = np.concatenate([const_rows, conv_rows])
        self.cols = np.concatenate([const_cols, conv_cols])

    def factorize(self, y_level: np.ndarray) -> Factorization:
        space = self.space
        r = space.rule5
        ce = fem.convection_scalar_block(space, y_level).ravel()
        gy = space.velocity_grad_at_quad(y_level, r)
        parts = [ce, ce]
        for c in range(2):
            for d in range(2):
                parts.append(np.einsum("t,q,qi,qj,tq->tij", space.det, r.w,
                                       r.phi, r.phi, gy[:, :, c, d]).ravel())
        conv_data = np.concatenate(parts) * self.conv_mask
        data = np.concatenate([self.const_data, conv_data])
        matrix = sp.coo_matrix((data, (self.rows, self.cols)),
                               shape=(self.n, self.n)).tocsc()
        return Factorization(matrix, label="linearized")


class _LinearizedFactorization:
    """Adapter giving the per-level linearized operator the saddle-solve
    interface (homogeneous Dirichlet only)."""

    def __init__(self, fact: Factorization, n_vel: int, constrained: np.ndarray):
        self.fact = fact
        self.n_vel = n_vel
        self.constrained = constrained

    def solve(self, load: np.ndarray, values=None) -> tuple[np.ndarray, np.ndarray]:
        b = np.zeros(self.fact.n)
        b[: self.n_vel] = load
        b[self.constrained] = 0.0
        x = self.fact.solve(b)
        x[self.constrained] = 0.0
        return x[: self.n_vel], x[self.n_vel:]


class Operators:
    """Assembled matrices and factorizations shared by all schemes."""

    def __init__(self, space: Space, grid: TimeGrid, nu: float, nu_bar: float = 1.0):
        if nu <= 0:
            raise ValueError(f"viscosity must be positive, got {nu}")
        self.space = space
        self.grid = grid
        self.nu = nu
        self.nu_bar = nu_bar
        self.M = fem.assemble_mass(space)
        self.K = fem.assemble_stiffness(space)
        self.B = fem.assemble_divergence(space)
        self._build_factorizations()

    def _build_factorizations(self):
        space, dt = self.space, self.grid.dt
        self.heat = factorize(SaddleSystem(
            self.M / dt + self.K, self.B, space.dirichlet_dofs, label="heat"))
        self.stokes = factorize(SaddleSystem(
            self.K, self.B, space.dirichlet_dofs, label="stokes"))
        if self.nu_bar == 1.0:
            self.init_stokes = self.heat
        else:
            self.init_stokes = factorize(SaddleSystem(
                self.M / dt + self.nu_bar * self.K, self.B, space.dirichlet_dofs,
                label="init"))
        self._template = _LinearizedTemplate(
            space, self.M / dt + self.nu * self.K, self.B)

    def with_nu(self, nu: float) -> "Operators":
        """Share assembled matrices and constant factorizations, swap nu."""
        other = object.__new__(Operators)
        other.__dict__.update(self.__dict__)
        other.nu = nu
        other._template = _LinearizedTemplate(
            self.space, self.M / self.grid.dt + nu * self.K, self.B)
        return other

    def linearized(self, y_level: np.ndarray) -> _LinearizedFactorization:
        return _LinearizedFactorization(
            self._template.factorize(y_level), self.space.n_velocity,
            self._template.constrained)


def implicit_step(fact: SaddleFactorization, M: sp.spmatrix, dt: float,
                  prev: np.ndarray, load: np.ndarray,
                  values: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One backward-Euler step of a generic Stokes-type system.

    ``fact`` must hold (M/dt + A) with the divergence constraint; returns
    the new velocity level and the pressure multiplier.
    """
    return fact.solve(M @ np.asarray(prev, dtype=np.float64) / dt + load, values)


def steady_stokes_initial(ops: Operators, values: np.ndarray,
                          load: np.ndarray | None = None) -> np.ndarray:
    """Steady Stokes velocity with the given Dirichlet values.

    Solved with unit viscosity; with zero forcing the velocity does not
    depend on the viscosity (only the multiplier scales).
    """
    if load is None:
        load = np.zeros(ops.space.n_velocity)
    vel, _ = ops.stokes.solve(load, values)
    return vel


def unsteady_stokes_initial_guess(
    ops: Operators, u0: np.ndarray, values: np.ndarray,
    loads: np.ndarray | None = None, dtype=np.float64,
) -> FieldTrajectory:
    """Backward-Euler unsteady Stokes trajectory starting from u0.

    ``loads[n]`` is the momentum load of the step to level n+1 (zero when
    omitted).  ``values`` is the Dirichlet data: one vector for
    time-constant boundaries (the experiments) or an (N, n_constrained)
    array with one row per step.
    """
    grid = ops.grid
    values = np.asarray(values, dtype=np.float64)
    traj = FieldTrajectory.zeros(grid, ops.space.n_velocity, dtype=dtype)
    traj.values[0] = u0
    level = np.asarray(u0, dtype=np.float64)
    zero = np.zeros(ops.space.n_velocity)
    for n in range(grid.N):
        load = zero if loads is None else loads[n]
        vals = values if values.ndim == 1 else values[n]
        level, _ = implicit_step(ops.init_stokes, ops.M, grid.dt, level, load, vals)
        traj.values[n + 1] = level
    return traj


def divergence_sup(ops: Operators, traj: FieldTrajectory) -> float:
    """Max over levels of ||B y^n||_inf, the discrete divergence defect."""
    return float(np.abs(ops.B @ traj.values.T.astype(np.float64)).max(initial=0.0))
