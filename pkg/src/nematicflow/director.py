"""Director update: advected harmonic-map heat flow with Neumann walls,
plus the unit-length constraint machinery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from ._kernels import cg_helmholtz_cell
from .flow import PROGRESS_FACTOR, PhysicalParams, PoissonSolveReport, SolverConvergenceError, _check_dt
from .mesh import Grid, State, director_field, fill_cell_neumann

MODE_FREE = "free"
MODE_RENORMALIZE = "renormalize"

DEGENERACY_FLOOR = 0.5


@dataclass(frozen=True)
class ConstraintPolicy:
    """How the unit-sphere constraint is handled.

    free leaves the flow alone so drift can be measured; renormalize
    projects pointwise back to the sphere after each step.
    """

    mode: str = MODE_FREE
    drift_budget: float = 1e-3

    def validate(self) -> None:
        if self.mode not in (MODE_FREE, MODE_RENORMALIZE):
            raise ValueError(f"unknown constraint mode {self.mode!r}")
        if not (self.drift_budget > 0 and np.isfinite(self.drift_budget)):
            raise ValueError(f"drift_budget must be positive and finite, got {self.drift_budget}")


FREE = ConstraintPolicy(MODE_FREE)
RENORMALIZE = ConstraintPolicy(MODE_RENORMALIZE)


class DirectorDegenerateError(RuntimeError):
    pass


def director_step(
    grid: Grid,
    state: State,
    params: PhysicalParams,
    dt: float,
    tol: float,
    policy: ConstraintPolicy = FREE,
    scheme: str = ops.UPWIND,
    use_advection: bool = True,
    use_gradsq: bool = True,
) -> State:
    """Semi-implicit director update; leaves state time unchanged.

    The diffusion is implicit (componentwise CG, one joint solve so the
    update commutes with target-space rotations to roundoff); transport and
    the |grad d|^2 d reaction stay explicit.
    """
    _check_dt(dt)
    params.validate()
    policy.validate()
    d = state.d
    fill_cell_neumann(d)

    rhs = d.copy()
    if use_gradsq:
        gs = ops.grad_sq(grid, d)
        rhs[:, 1:-1, 1:-1] += dt * params.gamma * gs[1:-1, 1:-1] * d[:, 1:-1, 1:-1]
    if use_advection:
        adv = ops.advect(grid, state.u, d, scheme)
        rhs[:, 1:-1, 1:-1] -= dt * adv[:, 1:-1, 1:-1]

    b = np.ascontiguousarray(rhs[:, 1:-1, 1:-1])
    x = np.ascontiguousarray(d[:, 1:-1, 1:-1])
    c = dt * params.gamma
    bmax = float(np.max(np.abs(b)))
    tol_stop = tol * max(1.0, bmax)
    maxiter = 10 * grid.n_cells * grid.m
    iters, rmax, stop = cg_helmholtz_cell(
        b, x, 1.0, c / grid.hx**2, c / grid.hy**2, tol_stop, maxiter, PROGRESS_FACTOR
    )
    if rmax > max(stop, tol_stop):
        raise SolverConvergenceError(
            "implicit director solve did not converge",
            PoissonSolveReport(int(iters), float(rmax), tol_stop),
        )

    if policy.mode == MODE_RENORMALIZE:
        norms = np.sqrt(np.sum(x * x, axis=0))
        if float(norms.min()) < DEGENERACY_FLOOR:
            raise DirectorDegenerateError(
                f"director degenerated: min |d| = {norms.min():.3g} < {DEGENERACY_FLOOR}"
            )
        x = x / norms

    d_new = director_field(grid)
    d_new[:, 1:-1, 1:-1] = x
    fill_cell_neumann(d_new)
    return State(u=state.u.copy(), pi=state.pi.copy(), d=d_new, t=state.t)


def constraint_drift(grid: Grid, d: np.ndarray) -> float:
    """Max over cells of | |d|^2 - 1 |."""
    nsq = np.sum(d[:, 1:-1, 1:-1] ** 2, axis=0)
    return float(np.max(np.abs(nsq - 1.0)))


def nlevp_residual(grid: Grid, d: np.ndarray) -> float:
    """Max-norm of lap d + |grad d|^2 d plus max-norm of |d|^2 - 1.

    Zero exactly at constant unit fields; small at steady director states.
    """
    fill_cell_neumann(d)
    lap = ops.laplacian(grid, d, "neumann")
    gs = ops.grad_sq(grid, d)
    res = lap[:, 1:-1, 1:-1] + gs[1:-1, 1:-1] * d[:, 1:-1, 1:-1]
    return float(np.max(np.abs(res))) + constraint_drift(grid, d)
