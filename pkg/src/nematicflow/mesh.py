"""Staggered rectangular grid, fields with ghost layers, and boundary fills.

Layout (MAC staggering, one ghost layer all around):

* cell-centered arrays (pressure, director components) have shape
  ``(nx+2, ny+2)``; interior cells are ``[1:nx+1, 1:ny+1]`` and cell
  ``(i, j)`` sits at ``((i-0.5)*hx, (j-0.5)*hy)``.
* x-velocity lives on vertical faces, shape ``(nx+3, ny+2)``; array column
  ``i`` sits at ``x = (i-1)*hx``, so ``i = 1`` and ``i = nx+1`` are the wall
  faces and ``i = 0`` / ``i = nx+2`` are ghosts beyond the walls.
* y-velocity lives on horizontal faces, shape ``(nx+2, ny+3)``, transposed
  conventions.

Boundary conditions are encoded purely in the ghost layer: homogeneous
Neumann mirrors the first interior value, no-slip zeroes the wall-normal
faces and antireflects tangential values through the wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BC_NO_SLIP = "no_slip"
BC_NEUMANN = "neumann"

MAX_ANISOTROPY = 8.0


@dataclass(frozen=True)
class GridSpec:
    """Cell counts, edge lengths and director component count."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    m: int = 2

    def validate(self) -> None:
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid too coarse: nx={self.nx}, ny={self.ny} (need >= 4)")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError(f"domain lengths must be positive: lx={self.lx}, ly={self.ly}")
        if self.m not in (2, 3):
            raise ValueError(f"unsupported director dimension m={self.m} (need 2 or 3)")
        hx = self.lx / self.nx
        hy = self.ly / self.ny
        ratio = hx / hy
        if ratio < 1.0 / MAX_ANISOTROPY or ratio > MAX_ANISOTROPY:
            raise ValueError(f"cell anisotropy hx/hy={ratio:g} outside [1/8, 8]")


@dataclass(frozen=True)
class Grid:
    """Validated grid with spacings, shapes and flat index maps."""

    spec: GridSpec
    hx: float
    hy: float

    @property
    def nx(self) -> int:
        return self.spec.nx

    @property
    def ny(self) -> int:
        return self.spec.ny

    @property
    def lx(self) -> float:
        return self.spec.lx

    @property
    def ly(self) -> float:
        return self.spec.ly

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    # array shapes including the ghost ring
    @property
    def shape_cell(self) -> tuple[int, int]:
        return (self.nx + 2, self.ny + 2)

    @property
    def shape_director(self) -> tuple[int, int, int]:
        return (self.m, self.nx + 2, self.ny + 2)

    @property
    def shape_ux(self) -> tuple[int, int]:
        return (self.nx + 3, self.ny + 2)

    @property
    def shape_uy(self) -> tuple[int, int]:
        return (self.nx + 2, self.ny + 3)

    # coordinates (ghost-inclusive, aligned with the array indices above)
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx + 2) - 0.5) * self.hx

    def yc(self) -> np.ndarray:
        return (np.arange(self.ny + 2) - 0.5) * self.hy

    def x_face(self) -> np.ndarray:
        return (np.arange(self.nx + 3) - 1.0) * self.hx

    def y_face(self) -> np.ndarray:
        return (np.arange(self.ny + 3) - 1.0) * self.hy

    def x_node(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    def y_node(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.hy

    # flat index maps over interior entities (0-based, row-major in i)
    def cell_index(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise IndexError(f"cell ({i},{j}) outside {self.nx}x{self.ny} interior")
        return i * self.ny + j

    def cell_ij(self, k: int) -> tuple[int, int]:
        if not (0 <= k < self.n_cells):
            raise IndexError(f"flat cell index {k} outside range")
        return divmod(k, self.ny)

    def xface_index(self, i: int, j: int) -> int:
        """Strictly interior x-faces: i in 0..nx-2, j in 0..ny-1."""
        if not (0 <= i < self.nx - 1 and 0 <= j < self.ny):
            raise IndexError(f"x-face ({i},{j}) outside interior")
        return i * self.ny + j

    def yface_index(self, i: int, j: int) -> int:
        """Strictly interior y-faces: i in 0..nx-1, j in 0..ny-2."""
        if not (0 <= i < self.nx and 0 <= j < self.ny - 1):
            raise IndexError(f"y-face ({i},{j}) outside interior")
        return (self.nx - 1) * self.ny + i * (self.ny - 1) + j

    @property
    def n_face_dof(self) -> int:
        """Strictly interior velocity degrees of freedom (wall faces pinned)."""
        return (self.nx - 1) * self.ny + self.nx * (self.ny - 1)


def make_grid(spec: GridSpec) -> Grid:
    spec.validate()
    return Grid(spec=spec, hx=spec.lx / spec.nx, hy=spec.ly / spec.ny)


@dataclass
class FaceField:
    """Velocity on faces: x on vertical faces, y on horizontal faces."""

    x: np.ndarray
    y: np.ndarray

    def copy(self) -> "FaceField":
        return FaceField(self.x.copy(), self.y.copy())


def scalar_field(grid: Grid) -> np.ndarray:
    return np.zeros(grid.shape_cell)

def director_field(grid: Grid) -> np.ndarray:
    return np.zeros(grid.shape_director)

def face_field(grid: Grid) -> FaceField:
    return FaceField(np.zeros(grid.shape_ux), np.zeros(grid.shape_uy))


def fill_cell_neumann(a: np.ndarray) -> np.ndarray:
    """Mirror the first interior ring into the ghost ring (per component)."""
    a[..., 0, :] = a[..., 1, :]
    a[..., -1, :] = a[..., -2, :]
    a[..., :, 0] = a[..., :, 1]
    a[..., :, -1] = a[..., :, -2]
    return a


def fill_face_no_slip(u: FaceField) -> FaceField:
    """Zero wall-normal faces, antireflect tangential values through walls.

    Ghosts beyond a wall face odd-reflect through the (zero) face value so
    the 5-point stencil sees the no-slip wall at second order.
    """
    ux, uy = u.x, u.y
    ux[1, :] = 0.0
    ux[-2, :] = 0.0
    ux[0, :] = -ux[2, :]
    ux[-1, :] = -ux[-3, :]
    ux[:, 0] = -ux[:, 1]
    ux[:, -1] = -ux[:, -2]

    uy[:, 1] = 0.0
    uy[:, -2] = 0.0
    uy[:, 0] = -uy[:, 2]
    uy[:, -1] = -uy[:, -3]
    uy[0, :] = -uy[1, :]
    uy[-1, :] = -uy[-2, :]
    return u


def fill_ghosts(field, bc: str):
    """Fill the ghost layer of `field` for boundary condition `bc`.

    neumann applies to cell-centered arrays (scalar or director),
    no_slip to FaceField velocities.
    """
    if bc == BC_NEUMANN:
        if isinstance(field, FaceField):
            raise ValueError("neumann fill expects a cell-centered array")
        return fill_cell_neumann(field)
    if bc == BC_NO_SLIP:
        if not isinstance(field, FaceField):
            raise ValueError("no_slip fill expects a FaceField")
        return fill_face_no_slip(field)
    raise ValueError(f"unknown boundary condition {bc!r}")


@dataclass
class State:
    """Full solver state: velocity, pressure, director and time."""

    u: FaceField
    pi: np.ndarray
    d: np.ndarray
    t: float = 0.0

    def copy(self) -> "State":
        return State(self.u.copy(), self.pi.copy(), self.d.copy(), self.t)


def zero_state(grid: Grid, d0: np.ndarray | None = None) -> State:
    """State at rest; director defaults to the first basis vector."""
    d = director_field(grid)
    if d0 is None:
        d[0] = 1.0
    else:
        d[...] = d0
    fill_cell_neumann(d)
    return State(u=face_field(grid), pi=scalar_field(grid), d=d, t=0.0)
