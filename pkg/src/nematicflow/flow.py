"""Momentum step: semi-implicit viscous update plus Helmholtz projection.

The implicit viscous solve and the pressure Poisson solve both run
unpreconditioned CG (fused kernels, warm-started from the current state so
equilibria are exact fixed points of the scheme).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from ._kernels import cg_helmholtz_cell, cg_helmholtz_face
from .mesh import FaceField, Grid, State, face_field, fill_cell_neumann, fill_face_no_slip, scalar_field

MIN_DT = 1e-12

# Inner solves must also shrink their own starting residual by this factor,
# so warm-started solves keep tracking a decaying trajectory instead of
# freezing once below the absolute tolerance.
PROGRESS_FACTOR = 1e-3


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosity, elastic coupling weight and director relaxation speed."""

    nu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0

    def validate(self) -> None:
        if self.nu <= 0 or self.lam <= 0 or self.gamma <= 0:
            raise ValueError(f"physical parameters must be positive: {self}")


@dataclass
class PoissonSolveReport:
    iterations: int
    residual: float
    tolerance: float


class SolverConvergenceError(RuntimeError):
    """Raised when an inner CG solve exhausts its iteration budget."""

    def __init__(self, message: str, report: PoissonSolveReport):
        super().__init__(f"{message} (residual {report.residual:.3e} > tol "
                         f"{report.tolerance:.3e} after {report.iterations} iterations)")
        self.report = report


class CflWarning(UserWarning):
    pass


def _check_dt(dt: float) -> None:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt < MIN_DT:
        raise ValueError(f"dt={dt} below {MIN_DT}; rate fits break at roundoff-dominated steps")


def solve_poisson_neumann(
    grid: Grid, rhs: np.ndarray, tol: float, phi0: np.ndarray | None = None
) -> tuple[np.ndarray, PoissonSolveReport]:
    """Solve lap(phi) = rhs with homogeneous Neumann walls, mean(phi) = 0.

    rhs is a cell array whose interior mean is subtracted for compatibility
    (roundoff-sized for wall-normal-zero velocity divergences). Stops when
    the residual max-norm drops below tol (scaled up only if max|rhs| > 1).
    """
    b = -rhs[1:-1, 1:-1].copy()
    b -= b.mean()
    bmax = float(np.max(np.abs(b)))
    tol_stop = tol * max(1.0, bmax)
    x = np.zeros_like(b) if phi0 is None else phi0[1:-1, 1:-1].copy()
    maxiter = 10 * grid.n_cells
    iters, rmax, stop = cg_helmholtz_cell(
        b[None], x[None], 0.0, 1.0 / grid.hx**2, 1.0 / grid.hy**2, tol_stop, maxiter,
        PROGRESS_FACTOR,
    )
    report = PoissonSolveReport(int(iters), float(rmax), float(max(stop, tol_stop)))
    if rmax > max(stop, tol_stop):
        raise SolverConvergenceError("pressure Poisson solve did not converge", report)
    phi = scalar_field(grid)
    phi[1:-1, 1:-1] = x - x.mean()
    fill_cell_neumann(phi)
    return phi, report


def helmholtz_project(
    grid: Grid, v: FaceField, tol: float, phi0: np.ndarray | None = None
) -> tuple[FaceField, np.ndarray, PoissonSolveReport]:
    """Project v onto discretely divergence-free fields.

    Returns (u, phi, report) with u = v - grad(phi) and max |div u| bounded
    by the report tolerance (the Poisson residual IS the divergence of u).
    """
    div_v = ops.divergence(grid, v)
    phi, report = solve_poisson_neumann(grid, div_v, tol, phi0=phi0)
    g = ops.gradient(grid, phi)
    u = FaceField(v.x - g.x, v.y - g.y)
    fill_face_no_slip(u)
    return u, phi, report


def momentum_step(
    grid: Grid,
    state: State,
    params: PhysicalParams,
    dt: float,
    tol: float,
    scheme: str = ops.UPWIND,
    use_advection: bool = True,
) -> State:
    """One momentum update: explicit advection and elastic forcing, implicit
    viscosity, then projection. Advances state time by dt (the director step
    runs first and leaves t unchanged)."""
    _check_dt(dt)
    params.validate()
    u = state.u
    fill_face_no_slip(u)

    umax = ops.face_norm_max(grid, u)
    if umax * dt / min(grid.hx, grid.hy) > 1.0:
        warnings.warn(
            f"advective CFL {umax * dt / min(grid.hx, grid.hy):.2f} > 1", CflWarning
        )

    force = ops.elastic_stress_div(grid, state.d)
    rhs = FaceField(u.x - dt * params.lam * force.x, u.y - dt * params.lam * force.y)
    if use_advection:
        adv = ops.advect(grid, u, u, scheme)
        rhs.x -= dt * adv.x
        rhs.y -= dt * adv.y

    nx, ny = grid.nx, grid.ny
    bx = np.ascontiguousarray(rhs.x[2 : nx + 1, 1 : ny + 1])
    by = np.ascontiguousarray(rhs.y[1 : nx + 1, 2 : ny + 1])
    xx = np.ascontiguousarray(u.x[2 : nx + 1, 1 : ny + 1])
    xy = np.ascontiguousarray(u.y[1 : nx + 1, 2 : ny + 1])
    c = dt * params.nu
    bmax = max(float(np.max(np.abs(bx), initial=0.0)), float(np.max(np.abs(by), initial=0.0)))
    tol_stop = tol * max(1.0, bmax)
    maxiter = 10 * grid.n_face_dof
    iters, rmax, stop = cg_helmholtz_face(
        bx, by, xx, xy, 1.0, c / grid.hx**2, c / grid.hy**2, tol_stop, maxiter,
        PROGRESS_FACTOR,
    )
    if rmax > max(stop, tol_stop):
        raise SolverConvergenceError(
            "implicit viscous solve did not converge",
            PoissonSolveReport(int(iters), float(rmax), tol_stop),
        )
    u_star = face_field(grid)
    u_star.x[2 : nx + 1, 1 : ny + 1] = xx
    u_star.y[1 : nx + 1, 2 : ny + 1] = xy
    fill_face_no_slip(u_star)

    u_new, phi, report = helmholtz_project(grid, u_star, tol, phi0=state.pi * dt)
    pi_new = phi / dt
    return State(u=u_new, pi=pi_new, d=state.d.copy(), t=state.t + dt)
