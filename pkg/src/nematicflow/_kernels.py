"""Fused conjugate-gradient kernels for the implicit solves.

Each kernel runs unpreconditioned CG with the 5-point stencil inlined,
operating on interior-only arrays (boundary conditions appear as stencil
coefficient changes at the edges). Serial loops keep reductions in a fixed
order, so results are bit-reproducible. The stencils are asserted equal to
the public ghost-layer operators in the test suite.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _apply_helmholtz_cell(x, out, alpha, cax, cay):
    """out = (alpha*I + c*(-Laplacian_neumann)) x on (m, nx, ny) interiors."""
    m, nx, ny = x.shape
    for l in range(m):
        for i in range(nx):
            for j in range(ny):
                c = x[l, i, j]
                s = alpha * c
                if i > 0:
                    s += (c - x[l, i - 1, j]) * cax
                if i < nx - 1:
                    s += (c - x[l, i + 1, j]) * cax
                if j > 0:
                    s += (c - x[l, i, j - 1]) * cay
                if j < ny - 1:
                    s += (c - x[l, i, j + 1]) * cay
                out[l, i, j] = s


@njit(cache=True, fastmath=True)
def cg_helmholtz_cell(b, x, alpha, cax, cay, tol, maxiter, progress=1.0):
    """Solve (alpha*I + c*(-Lap_neumann)) x = b, warm-started in place.

    Stops when the residual max-norm drops below min(tol, progress * its
    starting value): the progress factor keeps warm-started solves reducing
    their own residual even once below tol, so a decaying trajectory never
    freezes at the tolerance floor. A quantization floor (the roundoff of
    applying the operator to the current iterate) keeps the solve from
    stirring sub-ULP corrections forever once the state has converged to
    working precision. Returns (iterations, residual max-norm, stop used).
    """
    m, nx, ny = b.shape
    r = np.empty_like(b)
    p = np.empty_like(b)
    ap = np.empty_like(b)
    _apply_helmholtz_cell(x, ap, alpha, cax, cay)
    rz = 0.0
    rmax = 0.0
    xmax = 0.0
    for l in range(m):
        for i in range(nx):
            for j in range(ny):
                v = b[l, i, j] - ap[l, i, j]
                r[l, i, j] = v
                p[l, i, j] = v
                rz += v * v
                if abs(v) > rmax:
                    rmax = abs(v)
                if abs(x[l, i, j]) > xmax:
                    xmax = abs(x[l, i, j])
    eps = 2.220446049250313e-16
    floor = 2.0 * eps * (abs(alpha) + 4.0 * (cax + cay)) * xmax
    stop = min(tol, max(progress * rmax, floor))
    it = 0
    while rmax > stop and it < maxiter:
        _apply_helmholtz_cell(p, ap, alpha, cax, cay)
        pap = 0.0
        for l in range(m):
            for i in range(nx):
                for j in range(ny):
                    pap += p[l, i, j] * ap[l, i, j]
        if pap <= 0.0:
            break
        a = rz / pap
        rz_new = 0.0
        rmax = 0.0
        for l in range(m):
            for i in range(nx):
                for j in range(ny):
                    x[l, i, j] += a * p[l, i, j]
                    r[l, i, j] -= a * ap[l, i, j]
                    v = r[l, i, j]
                    rz_new += v * v
                    if abs(v) > rmax:
                        rmax = abs(v)
        beta = rz_new / rz
        rz = rz_new
        for l in range(m):
            for i in range(nx):
                for j in range(ny):
                    p[l, i, j] = r[l, i, j] + beta * p[l, i, j]
        it += 1
    return it, rmax, stop


@njit(cache=True, fastmath=True)
def _apply_helmholtz_face(xx, xy, outx, outy, alpha, cax, cay):
    """(alpha*I + c*(-Lap_noslip)) on the two interior face blocks.

    xx has shape (nx-1, ny): x-velocity on strictly interior vertical faces
    (wall faces are Dirichlet zero); the tangential wall is half a cell away
    so the antireflected ghost doubles the diagonal there. xy is transposed.
    """
    nxx, nyx = xx.shape
    for i in range(nxx):
        for j in range(nyx):
            c = xx[i, j]
            s = alpha * c
            s += (c - (xx[i - 1, j] if i > 0 else 0.0)) * cax
            s += (c - (xx[i + 1, j] if i < nxx - 1 else 0.0)) * cax
            if j > 0:
                s += (c - xx[i, j - 1]) * cay
            else:
                s += 2.0 * c * cay
            if j < nyx - 1:
                s += (c - xx[i, j + 1]) * cay
            else:
                s += 2.0 * c * cay
            outx[i, j] = s
    nxy, nyy = xy.shape
    for i in range(nxy):
        for j in range(nyy):
            c = xy[i, j]
            s = alpha * c
            if i > 0:
                s += (c - xy[i - 1, j]) * cax
            else:
                s += 2.0 * c * cax
            if i < nxy - 1:
                s += (c - xy[i + 1, j]) * cax
            else:
                s += 2.0 * c * cax
            s += (c - (xy[i, j - 1] if j > 0 else 0.0)) * cay
            s += (c - (xy[i, j + 1] if j < nyy - 1 else 0.0)) * cay
            outy[i, j] = s


@njit(cache=True, fastmath=True)
def cg_helmholtz_face(bx, by, xx, xy, alpha, cax, cay, tol, maxiter, progress=1.0):
    """Joint CG over both velocity blocks (single inner product); same
    stopping rule as cg_helmholtz_cell."""
    rx = np.empty_like(bx)
    ry = np.empty_like(by)
    px = np.empty_like(bx)
    py = np.empty_like(by)
    apx = np.empty_like(bx)
    apy = np.empty_like(by)
    _apply_helmholtz_face(xx, xy, apx, apy, alpha, cax, cay)
    rz = 0.0
    rmax = 0.0
    xmax = 0.0
    for i in range(bx.shape[0]):
        for j in range(bx.shape[1]):
            v = bx[i, j] - apx[i, j]
            rx[i, j] = v
            px[i, j] = v
            rz += v * v
            if abs(v) > rmax:
                rmax = abs(v)
            if abs(xx[i, j]) > xmax:
                xmax = abs(xx[i, j])
    for i in range(by.shape[0]):
        for j in range(by.shape[1]):
            v = by[i, j] - apy[i, j]
            ry[i, j] = v
            py[i, j] = v
            rz += v * v
            if abs(v) > rmax:
                rmax = abs(v)
            if abs(xy[i, j]) > xmax:
                xmax = abs(xy[i, j])
    eps = 2.220446049250313e-16
    floor = 2.0 * eps * (abs(alpha) + 4.0 * (cax + cay)) * xmax
    stop = min(tol, max(progress * rmax, floor))
    it = 0
    while rmax > stop and it < maxiter:
        _apply_helmholtz_face(px, py, apx, apy, alpha, cax, cay)
        pap = 0.0
        for i in range(bx.shape[0]):
            for j in range(bx.shape[1]):
                pap += px[i, j] * apx[i, j]
        for i in range(by.shape[0]):
            for j in range(by.shape[1]):
                pap += py[i, j] * apy[i, j]
        if pap <= 0.0:
            break
        a = rz / pap
        rz_new = 0.0
        rmax = 0.0
        for i in range(bx.shape[0]):
            for j in range(bx.shape[1]):
                xx[i, j] += a * px[i, j]
                rx[i, j] -= a * apx[i, j]
                v = rx[i, j]
                rz_new += v * v
                if abs(v) > rmax:
                    rmax = abs(v)
        for i in range(by.shape[0]):
            for j in range(by.shape[1]):
                xy[i, j] += a * py[i, j]
                ry[i, j] -= a * apy[i, j]
                v = ry[i, j]
                rz_new += v * v
                if abs(v) > rmax:
                    rmax = abs(v)
        beta = rz_new / rz
        rz = rz_new
        for i in range(bx.shape[0]):
            for j in range(bx.shape[1]):
                px[i, j] = rx[i, j] + beta * px[i, j]
        for i in range(by.shape[0]):
            for j in range(by.shape[1]):
                py[i, j] = ry[i, j] + beta * py[i, j]
        it += 1
    return it, rmax, stop
