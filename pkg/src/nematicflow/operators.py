"""Discrete differential operators on the staggered grid.

All operators fill the ghost layers of their inputs (ghosts are a pure
function of interior values and the boundary condition, so this never
changes the field they represent) and return arrays whose ghost ring is
zero unless stated otherwise.
"""

from __future__ import annotations

import numpy as np

from .mesh import (
    BC_NEUMANN,
    BC_NO_SLIP,
    FaceField,
    Grid,
    face_field,
    fill_cell_neumann,
    fill_face_no_slip,
)

UPWIND = "upwind"
CENTERED = "centered"


# ---------------------------------------------------------------------------
# inner products and norms (midpoint quadrature; the weights make the MAC
# divergence and gradient exact negative adjoints of one another)
# ---------------------------------------------------------------------------

def cell_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return grid.cell_area * float(np.sum(a[..., 1:-1, 1:-1] * b[..., 1:-1, 1:-1]))

def cell_norm_l2(grid: Grid, a: np.ndarray) -> float:
    return float(np.sqrt(cell_inner(grid, a, a)))

def cell_norm_max(grid: Grid, a: np.ndarray) -> float:
    return float(np.max(np.abs(a[..., 1:-1, 1:-1])))

def face_inner(grid: Grid, u: FaceField, v: FaceField) -> float:
    sx = np.sum(u.x[1:-1, 1:-1] * v.x[1:-1, 1:-1])
    sy = np.sum(u.y[1:-1, 1:-1] * v.y[1:-1, 1:-1])
    return grid.cell_area * float(sx + sy)

def face_norm_l2(grid: Grid, u: FaceField) -> float:
    return float(np.sqrt(face_inner(grid, u, u)))

def face_norm_max(grid: Grid, u: FaceField) -> float:
    return float(max(np.max(np.abs(u.x[1:-1, 1:-1])), np.max(np.abs(u.y[1:-1, 1:-1]))))


# ---------------------------------------------------------------------------
# first and second differences at cell centers (ghosts must be filled)
# ---------------------------------------------------------------------------

def _ddx(a: np.ndarray, hx: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[..., 1:-1, 1:-1] = (a[..., 2:, 1:-1] - a[..., :-2, 1:-1]) / (2.0 * hx)
    return out

def _ddy(a: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[..., 1:-1, 1:-1] = (a[..., 1:-1, 2:] - a[..., 1:-1, :-2]) / (2.0 * hy)
    return out

def _d2x(a: np.ndarray, hx: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[..., 1:-1, 1:-1] = (
        a[..., 2:, 1:-1] - 2.0 * a[..., 1:-1, 1:-1] + a[..., :-2, 1:-1]
    ) / (hx * hx)
    return out

def _d2y(a: np.ndarray, hy: float) -> np.ndarray:
    out = np.zeros_like(a)
    out[..., 1:-1, 1:-1] = (
        a[..., 1:-1, 2:] - 2.0 * a[..., 1:-1, 1:-1] + a[..., 1:-1, :-2]
    ) / (hy * hy)
    return out

def _mirror_x(a: np.ndarray) -> np.ndarray:
    a[..., 0, :] = a[..., 1, :]
    a[..., -1, :] = a[..., -2, :]
    return a

def _mirror_y(a: np.ndarray) -> np.ndarray:
    a[..., :, 0] = a[..., :, 1]
    a[..., :, -1] = a[..., :, -2]
    return a


# ---------------------------------------------------------------------------
# divergence / gradient / Laplacians
# ---------------------------------------------------------------------------

def divergence(grid: Grid, u: FaceField) -> np.ndarray:
    """Face-difference divergence at cell centers."""
    fill_face_no_slip(u)
    nx, ny = grid.nx, grid.ny
    div = np.zeros(grid.shape_cell)
    div[1:-1, 1:-1] = (
        (u.x[2 : nx + 2, 1:-1] - u.x[1 : nx + 1, 1:-1]) / grid.hx
        + (u.y[1:-1, 2 : ny + 2] - u.y[1:-1, 1 : ny + 1]) / grid.hy
    )
    return div


def gradient(grid: Grid, p: np.ndarray) -> FaceField:
    """Cell-to-face difference; exact negative adjoint of `divergence`.

    Wall faces come out exactly zero because the Neumann ghost of p mirrors
    the first interior cell.
    """
    fill_cell_neumann(p)
    g = face_field(grid)
    g.x[1:-1, 1:-1] = (p[1:, 1:-1] - p[:-1, 1:-1]) / grid.hx
    g.y[1:-1, 1:-1] = (p[1:-1, 1:] - p[1:-1, :-1]) / grid.hy
    return g


def laplacian(grid: Grid, field, bc: str):
    """5-point Laplacian; `bc` selects the ghost fill (neumann or no_slip)."""
    if bc == BC_NEUMANN:
        if isinstance(field, FaceField):
            raise ValueError("neumann Laplacian expects a cell-centered array")
        fill_cell_neumann(field)
        out = np.zeros_like(field)
        out[..., 1:-1, 1:-1] = (
            _d2x(field, grid.hx)[..., 1:-1, 1:-1] + _d2y(field, grid.hy)[..., 1:-1, 1:-1]
        )
        return out
    if bc == BC_NO_SLIP:
        if not isinstance(field, FaceField):
            raise ValueError("no_slip Laplacian expects a FaceField")
        fill_face_no_slip(field)
        hx2, hy2 = grid.hx**2, grid.hy**2
        out = face_field(grid)
        ux, uy = field.x, field.y
        out.x[2:-2, 1:-1] = (ux[3:-1, 1:-1] - 2.0 * ux[2:-2, 1:-1] + ux[1:-3, 1:-1]) / hx2 + (
            ux[2:-2, 2:] - 2.0 * ux[2:-2, 1:-1] + ux[2:-2, :-2]
        ) / hy2
        out.y[1:-1, 2:-2] = (uy[2:, 2:-2] - 2.0 * uy[1:-1, 2:-2] + uy[:-2, 2:-2]) / hx2 + (
            uy[1:-1, 3:-1] - 2.0 * uy[1:-1, 2:-2] + uy[1:-1, 1:-3]
        ) / hy2
        return out
    raise ValueError(f"unknown boundary condition {bc!r}")


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def _upwind(a_minus: np.ndarray, a_plus: np.ndarray, vel: np.ndarray) -> np.ndarray:
    return np.where(vel > 0.0, a_minus, a_plus)


def _advect_cell(grid: Grid, u: FaceField, a: np.ndarray, scheme: str) -> np.ndarray:
    nx, ny = grid.nx, grid.ny
    ucx = 0.5 * (u.x[1 : nx + 1, 1:-1] + u.x[2 : nx + 2, 1:-1])
    ucy = 0.5 * (u.y[1:-1, 1 : ny + 1] + u.y[1:-1, 2 : ny + 2])
    c = a[..., 1:-1, 1:-1]
    back_x = (c - a[..., :-2, 1:-1]) / grid.hx
    fwd_x = (a[..., 2:, 1:-1] - c) / grid.hx
    back_y = (c - a[..., 1:-1, :-2]) / grid.hy
    fwd_y = (a[..., 1:-1, 2:] - c) / grid.hy
    if scheme == UPWIND:
        dax = _upwind(back_x, fwd_x, ucx)
        day = _upwind(back_y, fwd_y, ucy)
    elif scheme == CENTERED:
        dax = 0.5 * (back_x + fwd_x)
        day = 0.5 * (back_y + fwd_y)
    else:
        raise ValueError(f"unknown advection scheme {scheme!r}")
    out = np.zeros_like(a)
    out[..., 1:-1, 1:-1] = ucx * dax + ucy * day
    return out


def _advect_face(grid: Grid, u: FaceField, v: FaceField, scheme: str) -> FaceField:
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    out = face_field(grid)

    # x-component at strictly interior x-faces
    vx = v.x
    ax = u.x[2 : nx + 1, 1:-1]
    ay = 0.25 * (
        u.y[1:nx, 1 : ny + 1]
        + u.y[2 : nx + 1, 1 : ny + 1]
        + u.y[1:nx, 2 : ny + 2]
        + u.y[2 : nx + 1, 2 : ny + 2]
    )
    c = vx[2 : nx + 1, 1:-1]
    back_x = (c - vx[1:nx, 1:-1]) / hx
    fwd_x = (vx[3 : nx + 2, 1:-1] - c) / hx
    back_y = (c - vx[2 : nx + 1, :-2]) / hy
    fwd_y = (vx[2 : nx + 1, 2:] - c) / hy
    if scheme == UPWIND:
        dvx = _upwind(back_x, fwd_x, ax)
        dvy = _upwind(back_y, fwd_y, ay)
    elif scheme == CENTERED:
        dvx = 0.5 * (back_x + fwd_x)
        dvy = 0.5 * (back_y + fwd_y)
    else:
        raise ValueError(f"unknown advection scheme {scheme!r}")
    out.x[2 : nx + 1, 1:-1] = ax * dvx + ay * dvy

    # y-component at strictly interior y-faces
    vy = v.y
    by = u.y[1:-1, 2 : ny + 1]
    bx = 0.25 * (
        u.x[1 : nx + 1, 1:ny]
        + u.x[1 : nx + 1, 2 : ny + 1]
        + u.x[2 : nx + 2, 1:ny]
        + u.x[2 : nx + 2, 2 : ny + 1]
    )
    c = vy[1:-1, 2 : ny + 1]
    back_x = (c - vy[:-2, 2 : ny + 1]) / hx
    fwd_x = (vy[2:, 2 : ny + 1] - c) / hx
    back_y = (c - vy[1:-1, 1:ny]) / hy
    fwd_y = (vy[1:-1, 3 : ny + 2] - c) / hy
    if scheme == UPWIND:
        dvx = _upwind(back_x, fwd_x, bx)
        dvy = _upwind(back_y, fwd_y, by)
    else:
        dvx = 0.5 * (back_x + fwd_x)
        dvy = 0.5 * (back_y + fwd_y)
    out.y[1:-1, 2 : ny + 1] = bx * dvx + by * dvy
    return out


def advect(grid: Grid, u: FaceField, field, scheme: str = UPWIND):
    """(u . grad) field; u is 2-point averaged to the field's sample points.

    First-order upwind by default; "centered" selects second-order central
    differences for refinement studies.
    """
    fill_face_no_slip(u)
    if isinstance(field, FaceField):
        fill_face_no_slip(field)
        return _advect_face(grid, u, field, scheme)
    fill_cell_neumann(field)
    return _advect_cell(grid, u, field, scheme)


def grad_sq(grid: Grid, d: np.ndarray) -> np.ndarray:
    """|grad d|^2 at cell centers by centered differences (Neumann ghosts)."""
    fill_cell_neumann(d)
    gx = _ddx(d, grid.hx)
    gy = _ddy(d, grid.hy)
    out = np.zeros(grid.shape_cell)
    if d.ndim == 3:
        out[1:-1, 1:-1] = np.sum(gx[:, 1:-1, 1:-1] ** 2 + gy[:, 1:-1, 1:-1] ** 2, axis=0)
    else:
        out[1:-1, 1:-1] = gx[1:-1, 1:-1] ** 2 + gy[1:-1, 1:-1] ** 2
    return out


# ---------------------------------------------------------------------------
# quasilinear coupling operator and the divergence-form elastic stress
# ---------------------------------------------------------------------------

def _cell_to_xface(grid: Grid, c: np.ndarray, out: np.ndarray) -> None:
    nx = grid.nx
    out[2 : nx + 1, 1:-1] = 0.5 * (c[1:nx, 1:-1] + c[2 : nx + 1, 1:-1])

def _cell_to_yface(grid: Grid, c: np.ndarray, out: np.ndarray) -> None:
    ny = grid.ny
    out[1:-1, 2 : ny + 1] = 0.5 * (c[1:-1, 1:ny] + c[1:-1, 2 : ny + 1])


def coupling_b(grid: Grid, d: np.ndarray, h: np.ndarray) -> FaceField:
    """Apply the quasilinear coupling operator of the momentum equation.

    Component i is  sum_l [ d_i d_l * lap h_l + d_k d_l * d_k d_i h_l ]
    (sum over k and the director components l), built from centered first
    and second differences at cells; the mixed derivative composes two
    centered differences, the intermediate extended evenly across the walls
    it is tangential to. The result is 2-point averaged onto faces, where
    the momentum equation lives.
    """
    fill_cell_neumann(d)
    fill_cell_neumann(h)
    hx, hy = grid.hx, grid.hy

    dd_x = _ddx(d, hx)
    dd_y = _ddy(d, hy)
    h_xx = _d2x(h, hx)
    h_yy = _d2y(h, hy)
    lap_h = h_xx + h_yy

    # mixed derivatives: compose centered differences; the first derivative
    # of a Neumann field is even across the walls orthogonal to it
    h_x = _mirror_y(_ddx(h, hx))
    h_yx = _ddy(h_x, hy)
    h_y = _mirror_x(_ddy(h, hy))
    h_xy = _ddx(h_y, hx)

    bx_cell = np.sum(dd_x * (lap_h + h_xx) + dd_y * h_yx, axis=0)
    by_cell = np.sum(dd_y * (lap_h + h_yy) + dd_x * h_xy, axis=0)

    out = face_field(grid)
    _cell_to_xface(grid, bx_cell, out.x)
    _cell_to_yface(grid, by_cell, out.y)
    return out


def stress_tensor(grid: Grid, d: np.ndarray) -> np.ndarray:
    """Per-cell Gram matrix sigma_ij = sum_l (d_i d_l)(d_j d_l), shape (2,2,...).

    Ghost cells carry the values implied by the even (mirror) extension of
    d: the diagonal entries mirror evenly, the off-diagonal entry flips
    sign across each wall.
    """
    fill_cell_neumann(d)
    hx, hy = grid.hx, grid.hy
    m = d.shape[0]
    sig = np.zeros((2, 2) + grid.shape_cell)
    for l in range(m):
        gx = np.zeros(grid.shape_cell)
        gy = np.zeros(grid.shape_cell)
        gx[1:-1, 1:-1] = (d[l, 2:, 1:-1] - d[l, :-2, 1:-1]) / (2.0 * hx)
        gy[1:-1, 1:-1] = (d[l, 1:-1, 2:] - d[l, 1:-1, :-2]) / (2.0 * hy)
        sig[0, 0] += gx * gx
        sig[0, 1] += gx * gy
        sig[1, 1] += gy * gy
    sig[1, 0] = sig[0, 1]
    # mirror extension: diagonal even, off-diagonal odd across each wall
    for a in (sig[0, 0], sig[1, 1]):
        a[0, :] = a[1, :]
        a[-1, :] = a[-2, :]
        a[:, 0] = a[:, 1]
        a[:, -1] = a[:, -2]
    for a in (sig[0, 1], sig[1, 0]):
        a[0, :] = -a[1, :]
        a[-1, :] = -a[-2, :]
        a[:, 0] = -a[:, 1]
        a[:, -1] = -a[:, -2]
    return sig


def elastic_stress_div(grid: Grid, d: np.ndarray) -> FaceField:
    """Row-wise divergence of the elastic stress tensor, sampled on faces.

    Independent of coupling_b by construction: compact cell-to-face
    differences for the in-line entry plus a centered difference of the
    face-averaged off-diagonal entry.
    """
    sig = stress_tensor(grid, d)
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    out = face_field(grid)

    sxx, sxy, syy = sig[0, 0], sig[0, 1], sig[1, 1]
    # x-component at interior x-faces: d/dx sxx + d/dy sxy
    sxy_xf_up = 0.5 * (sxy[1:nx, 2:] + sxy[2 : nx + 1, 2:])
    sxy_xf_dn = 0.5 * (sxy[1:nx, :-2] + sxy[2 : nx + 1, :-2])
    out.x[2 : nx + 1, 1:-1] = (sxx[2 : nx + 1, 1:-1] - sxx[1:nx, 1:-1]) / hx + (
        sxy_xf_up - sxy_xf_dn
    ) / (2.0 * hy)
    # y-component at interior y-faces: d/dx sxy + d/dy syy
    sxy_yf_rt = 0.5 * (sxy[2:, 1:ny] + sxy[2:, 2 : ny + 1])
    sxy_yf_lt = 0.5 * (sxy[:-2, 1:ny] + sxy[:-2, 2 : ny + 1])
    out.y[1:-1, 2 : ny + 1] = (syy[1:-1, 2 : ny + 1] - syy[1:-1, 1:ny]) / hy + (
        sxy_yf_rt - sxy_yf_lt
    ) / (2.0 * hx)
    return out


def coupling_identity_discrepancy(grid: Grid, d: np.ndarray) -> float:
    """L2 norm over faces of coupling_b(d, d) - elastic_stress_div(d)."""
    b = coupling_b(grid, d, d)
    s = elastic_stress_div(grid, d)
    diff = FaceField(b.x - s.x, b.y - s.y)
    return face_norm_l2(grid, diff)
