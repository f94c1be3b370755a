"""Equilibria and stability analysis.

Distance to the equilibria manifold, steady director states by renormalized
gradient flow, the block-diagonal linearization at an equilibrium (viscous
Stokes block on divergence-free faces, director diffusion block on cells),
its spectrum by dense eigensolve or shifted inverse iteration, and
exponential-rate fitting of decay histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from ._kernels import cg_helmholtz_cell
from .director import RENORMALIZE, director_step, nlevp_residual
from .flow import PhysicalParams, helmholtz_project
from .mesh import (
    FaceField,
    Grid,
    State,
    director_field,
    face_field,
    fill_cell_neumann,
    fill_face_no_slip,
    scalar_field,
)

BLOCK_STOKES = "stokes"
BLOCK_NEUMANN = "neumann_laplacian"
BLOCK_FULL = "full_diag"

DENSE_CELL_BUDGET = 4096
PROJECTION_TOL = 1e-13


# ---------------------------------------------------------------------------
# flat vector <-> field conversions (interior dof only)
# ---------------------------------------------------------------------------

def face_to_flat(grid: Grid, u: FaceField) -> np.ndarray:
    nx, ny = grid.nx, grid.ny
    return np.concatenate(
        [u.x[2 : nx + 1, 1 : ny + 1].ravel(), u.y[1 : nx + 1, 2 : ny + 1].ravel()]
    )

def flat_to_face(grid: Grid, v: np.ndarray) -> FaceField:
    nx, ny = grid.nx, grid.ny
    nux = (nx - 1) * ny
    u = face_field(grid)
    u.x[2 : nx + 1, 1 : ny + 1] = v[:nux].reshape(nx - 1, ny)
    u.y[1 : nx + 1, 2 : ny + 1] = v[nux:].reshape(nx, ny - 1)
    fill_face_no_slip(u)
    return u

def director_to_flat(grid: Grid, d: np.ndarray) -> np.ndarray:
    return d[:, 1:-1, 1:-1].ravel()

def flat_to_director(grid: Grid, v: np.ndarray) -> np.ndarray:
    d = director_field(grid)
    d[:, 1:-1, 1:-1] = v.reshape(grid.m, grid.nx, grid.ny)
    fill_cell_neumann(d)
    return d


# ---------------------------------------------------------------------------
# linearization at an equilibrium
# ---------------------------------------------------------------------------

@dataclass
class LinearOperator:
    """Matrix-free action of a linearization block on flat interior vectors."""

    block: str
    grid: Grid
    params: PhysicalParams
    n: int
    apply: Callable[[np.ndarray], np.ndarray]

    def apply_flat(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def dense(self) -> np.ndarray:
        """Column-by-column assembly; refused above the coarse-grid budget."""
        if self.grid.n_cells > DENSE_CELL_BUDGET:
            raise ValueError(
                f"dense assembly refused: {self.grid.n_cells} cells exceeds "
                f"budget {DENSE_CELL_BUDGET}"
            )
        a = np.empty((self.n, self.n))
        e = np.zeros(self.n)
        for j in range(self.n):
            e[j] = 1.0
            a[:, j] = self.apply(e)
            e[j] = 0.0
        return a


def _stokes_apply(grid: Grid, params: PhysicalParams):
    def apply(v: np.ndarray) -> np.ndarray:
        u = flat_to_face(grid, v)
        lap = ops.laplacian(grid, u, "no_slip")
        w = FaceField(-params.nu * lap.x, -params.nu * lap.y)
        proj, _, _ = helmholtz_project(grid, w, PROJECTION_TOL)
        return face_to_flat(grid, proj)

    return apply


def _neumann_apply(grid: Grid, params: PhysicalParams):
    def apply(v: np.ndarray) -> np.ndarray:
        d = flat_to_director(grid, v)
        lap = ops.laplacian(grid, d, "neumann")
        return director_to_flat(grid, -params.gamma * lap)

    return apply


def assemble_linearization(
    grid: Grid, params: PhysicalParams, block: str = BLOCK_FULL
) -> LinearOperator:
    """Linearization at a rest state with constant unit director.

    The coupling terms vanish there, leaving diag(stokes, director diffusion).
    """
    params.validate()
    n_u = grid.n_face_dof
    n_d = grid.m * grid.n_cells
    if block == BLOCK_STOKES:
        return LinearOperator(block, grid, params, n_u, _stokes_apply(grid, params))
    if block == BLOCK_NEUMANN:
        return LinearOperator(block, grid, params, n_d, _neumann_apply(grid, params))
    if block == BLOCK_FULL:
        s = _stokes_apply(grid, params)
        nmn = _neumann_apply(grid, params)

        def apply(v: np.ndarray) -> np.ndarray:
            return np.concatenate([s(v[:n_u]), nmn(v[n_u:])])

        return LinearOperator(block, grid, params, n_u + n_d, apply)
    raise ValueError(f"unknown linearization block {block!r}")


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass
class SpectralReport:
    eigenvalues: list[float]
    kernel_dim: int
    gap: float
    tolerances: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "kind": "spectral_report",
            "eigenvalues": self.eigenvalues,
            "kernel_dim": self.kernel_dim,
            "gap": self.gap,
            "tolerances": self.tolerances,
        }


class EigensolveError(RuntimeError):
    pass


def _divergence_matrix(grid: Grid) -> np.ndarray:
    n = grid.n_face_dof
    d = np.empty((grid.n_cells, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        u = flat_to_face(grid, e)
        d[:, j] = ops.divergence(grid, u)[1:-1, 1:-1].ravel()
        e[j] = 0.0
    return d


def _dense_eigenvalues(op: LinearOperator) -> np.ndarray:
    """All eigenvalues of the block, restricted to its proper domain."""
    grid, params = op.grid, op.params
    if op.block == BLOCK_NEUMANN:
        # block-diagonal over components: assemble the scalar Laplacian once
        n = grid.n_cells
        a = np.empty((n, n))
        e = np.zeros(grid.shape_cell)
        for j in range(n):
            i, jj = grid.cell_ij(j)
            e[1 + i, 1 + jj] = 1.0
            a[:, j] = -params.gamma * ops.laplacian(grid, e, "neumann")[1:-1, 1:-1].ravel()
            e[1 + i, 1 + jj] = 0.0
        evals = np.linalg.eigvalsh(0.5 * (a + a.T))
        return np.sort(np.repeat(evals, grid.m))
    if op.block == BLOCK_STOKES:
        if grid.n_cells > DENSE_CELL_BUDGET:
            raise ValueError("dense assembly refused: grid above budget")
        div = _divergence_matrix(grid)
        u_svd, s, vt = np.linalg.svd(div, full_matrices=True)
        tol_rank = max(div.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
        rank = int(np.sum(s > tol_rank))
        z = vt[rank:].T  # orthonormal basis of divergence-free face fields
        n = grid.n_face_dof
        lap = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            u = flat_to_face(grid, e)
            l = ops.laplacian(grid, u, "no_slip")
            lap[:, j] = -params.nu * face_to_flat(grid, l)
            e[j] = 0.0
        a = z.T @ lap @ z
        return np.linalg.eigvalsh(0.5 * (a + a.T))
    if op.block == BLOCK_FULL:
        es = _dense_eigenvalues(assemble_linearization(grid, params, BLOCK_STOKES))
        en = _dense_eigenvalues(assemble_linearization(grid, params, BLOCK_NEUMANN))
        return np.sort(np.concatenate([es, en]))
    raise ValueError(f"unknown block {op.block!r}")


def _cg_flat(apply, b, x0, tol, maxiter):
    x = x0.copy()
    r = b - apply(x)
    p = r.copy()
    rz = float(r @ r)
    it = 0
    while np.max(np.abs(r)) > tol and it < maxiter:
        ap = apply(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rz_new = float(r @ r)
        p = r + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it


def _shifted_solver(op: LinearOperator, shift: float):
    """Return b -> (op + shift*I)^{-1} b."""
    grid, params = op.grid, op.params
    if op.block == BLOCK_NEUMANN:
        cax = params.gamma / grid.hx**2
        cay = params.gamma / grid.hy**2

        def solve(b: np.ndarray) -> np.ndarray:
            b3 = np.ascontiguousarray(b.reshape(grid.m, grid.nx, grid.ny))
            x3 = b3 / shift  # rough diagonal guess
            tol = 1e-13 * max(1.0, float(np.max(np.abs(b))))
            cg_helmholtz_cell(b3, x3, shift, cax, cay, tol, 100 * grid.n_cells)
            return x3.ravel()

        return solve

    def solve(b: np.ndarray) -> np.ndarray:
        tol = 1e-12 * max(1.0, float(np.max(np.abs(b))))
        x, _ = _cg_flat(
            lambda v: op.apply(v) + shift * v, b, np.zeros_like(b), tol, 100 * op.n
        )
        return x

    return solve


def _domain_projector(op: LinearOperator):
    if op.block != BLOCK_STOKES:
        return lambda v: v

    def project(v: np.ndarray) -> np.ndarray:
        u = flat_to_face(op.grid, v)
        proj, _, _ = helmholtz_project(op.grid, u, PROJECTION_TOL)
        return face_to_flat(op.grid, proj)

    return project


def _smallest_eigs_matrix_free(
    op: LinearOperator, k: int, tol: float, shift: float = 1.0, seed: int = 1234
) -> np.ndarray:
    """Shifted inverse iteration with deflation against converged vectors."""
    rng = np.random.default_rng(seed)
    solve = _shifted_solver(op, shift)
    project = _domain_projector(op)
    vecs: list[np.ndarray] = []
    vals: list[float] = []
    for _ in range(k):
        v = project(rng.standard_normal(op.n))
        for w in vecs:
            v -= (w @ v) * w
        v /= np.linalg.norm(v)
        lam = np.inf
        converged = False
        for _ in range(400):
            v = solve(v)
            v = project(v)
            for _ in range(2):
                for w in vecs:
                    v -= (w @ v) * w
            v /= np.linalg.norm(v)
            av = op.apply(v)
            lam_new = float(v @ av)
            res = float(np.linalg.norm(av - lam_new * v))
            scale = max(abs(lam_new), shift)
            if res <= tol * scale and abs(lam_new - lam) <= tol * scale:
                lam = lam_new
                converged = True
                break
            lam = lam_new
        if not converged:
            raise EigensolveError(
                f"inverse iteration failed to converge eigenpair {len(vals)} "
                f"(last eigenvalue {lam:.6g}, residual {res:.3e})"
            )
        vals.append(lam)
        vecs.append(v)
    return np.sort(np.array(vals))


def spectrum(op: LinearOperator, k: int, tol: float = 1e-8) -> SpectralReport:
    """Smallest k eigenvalues: dense eigensolve on coarse grids, shifted
    inverse iteration with deflation otherwise."""
    m = op.grid.m
    if k < m + 2:
        raise ValueError(f"need k >= m + 2 = {m + 2}, got {k}")
    if op.grid.n_cells <= DENSE_CELL_BUDGET:
        all_evals = _dense_eigenvalues(op)
        evals = all_evals[:k]
        largest = float(all_evals[-1])
    elif op.block == BLOCK_FULL:
        es = _smallest_eigs_matrix_free(
            assemble_linearization(op.grid, op.params, BLOCK_STOKES), k, tol
        )
        en = _smallest_eigs_matrix_free(
            assemble_linearization(op.grid, op.params, BLOCK_NEUMANN), k, tol
        )
        evals = np.sort(np.concatenate([es, en]))[:k]
        largest = float(evals[-1])
    else:
        evals = _smallest_eigs_matrix_free(op, k, tol)
        largest = float(evals[-1])
    kernel_tol = 1e-8 * largest
    kernel_dim = int(np.sum(evals < kernel_tol))
    above = evals[evals >= kernel_tol]
    if above.size == 0:
        raise EigensolveError("no eigenvalue above the kernel tolerance among computed set")
    return SpectralReport(
        eigenvalues=[float(v) for v in evals],
        kernel_dim=kernel_dim,
        gap=float(above[0]),
        tolerances={"kernel": kernel_tol, "eigensolve": tol},
    )


# ---------------------------------------------------------------------------
# distance to the equilibria manifold
# ---------------------------------------------------------------------------

def _sphere_samples(m: int, n: int = 64) -> np.ndarray:
    if m == 2:
        th = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    idx = np.arange(n)
    z = 1.0 - (2.0 * idx + 1.0) / n
    phi = idx * np.pi * (3.0 - np.sqrt(5.0))
    r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def distance_to_equilibria(grid: Grid, state: State, sphere_points: int = 64) -> float:
    """||u||_2 plus the L2 distance from d to the nearest constant unit field.

    The minimizer over the sphere is mean(d)/|mean(d)|; a mean of zero makes
    every constant equidistant, handled by deterministic sphere sampling.
    """
    un = ops.face_norm_l2(grid, state.u)
    area = grid.lx * grid.ly
    d_int = state.d[:, 1:-1, 1:-1]
    dnorm_sq = grid.cell_area * float(np.sum(d_int**2))
    mean = np.sum(d_int, axis=(1, 2)) / grid.n_cells
    mean_len = float(np.linalg.norm(mean))
    if mean_len > 1e-13:
        best = dnorm_sq - 2.0 * area * mean_len + area
    else:
        samples = _sphere_samples(grid.m, sphere_points)
        dots = samples @ mean
        best = dnorm_sq - 2.0 * area * float(np.max(dots)) + area
    return un + float(np.sqrt(max(best, 0.0)))


# ---------------------------------------------------------------------------
# steady director states (gradient flow oracle)
# ---------------------------------------------------------------------------

class SteadyFlowError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def steady_director_flow(
    grid: Grid,
    d0: np.ndarray,
    params: PhysicalParams,
    tol: float,
    max_iters: int = 20000,
    dt0: float | None = None,
    dt_max: float = 0.1,
    growth: float = 1.3,
    on_iterate: Callable[[int, float], None] | None = None,
) -> tuple[np.ndarray, int]:
    """Drive the director to a steady state with velocity frozen at zero.

    Iterates the renormalized implicit heat-flow step with a growing time
    step until the steady-state residual drops below tol. Returns the steady
    field and the iteration count.
    """
    d = d0.copy()
    norms = np.sqrt(np.sum(d[:, 1:-1, 1:-1] ** 2, axis=0))
    if float(norms.min()) < 0.5:
        raise SteadyFlowError("initial director too short to renormalize", float(norms.min()), 0)
    d[:, 1:-1, 1:-1] /= norms
    fill_cell_neumann(d)

    res = nlevp_residual(grid, d)
    if res <= tol:
        return d, 0
    state = State(u=face_field(grid), pi=scalar_field(grid), d=d, t=0.0)
    dt = dt0 if dt0 is not None else 0.25 * min(grid.hx, grid.hy) ** 2 / params.gamma
    for it in range(1, max_iters + 1):
        state = director_step(
            grid, state, params, dt, tol=1e-13, policy=RENORMALIZE, use_advection=False
        )
        res = nlevp_residual(grid, state.d)
        if on_iterate is not None:
            on_iterate(it, res)
        if res <= tol:
            return state.d, it
        dt = min(dt * growth, dt_max)
    raise SteadyFlowError("steady director flow hit the iteration cap", res, max_iters)


# ---------------------------------------------------------------------------
# exponential rate fitting
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    rate: float
    amplitude: float
    window: tuple[float, float]
    r_squared: float

    def to_record(self) -> dict:
        return {
            "kind": "rate_fit",
            "rate": self.rate,
            "amplitude": self.amplitude,
            "window": list(self.window),
            "r_squared": self.r_squared,
        }


def fit_decay_rate(
    ts: Sequence[float], values: Sequence[float], window: tuple[float, float]
) -> RateFit:
    """Least-squares line through (t, log value); rate is minus the slope."""
    t = np.asarray(ts, dtype=float)
    v = np.asarray(values, dtype=float)
    t0, t1 = window
    mask = (t >= t0) & (t <= t1)
    if int(mask.sum()) < 20:
        raise ValueError(f"window {window} holds {int(mask.sum())} samples, need >= 20")
    tw = t[mask]
    vw = v[mask]
    if np.any(vw <= 0.0):
        raise ValueError("nonpositive values inside the fit window")
    y = np.log(vw)
    a = np.stack([tw, np.ones_like(tw)], axis=1)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    yhat = a @ coef
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        rate=-float(coef[0]),
        amplitude=float(np.exp(coef[1])),
        window=(float(t0), float(t1)),
        r_squared=float(r2),
    )


def decay_fit_window(
    ts: Sequence[float], values: Sequence[float], predicted_rate: float
) -> tuple[float, float]:
    """Default window: skip 5 predicted e-folds, stop above the roundoff
    floor and above any terminal plateau of the series."""
    t = np.asarray(ts, dtype=float)
    v = np.asarray(values, dtype=float)
    t0 = t[0] + 5.0 / predicted_rate
    floor = max(1e3 * np.finfo(float).eps * v[0], 10.0 * float(v.min()))
    above = t[v > floor]
    t1 = float(above[-1]) if above.size else float(t[-1])
    return (float(t0), t1)
