import numpy as np
import pytest

from nematicflow import GridSpec, PhysicalParams, make_grid, zero_state
from nematicflow.diagnostics import CSV_HEADER, csv_row, energy, energy_identity_residual
from nematicflow.director import director_step, nlevp_residual
from nematicflow.mesh import fill_cell_neumann

from conftest import fitted_order, random_face

PARAMS = PhysicalParams()


def test_equilibrium_energies_zero(grid32):
    rep = energy(grid32, zero_state(grid32))
    assert rep.e_kin == 0.0 and rep.e_pot == 0.0
    assert rep.dissipation == 0.0 and rep.drift == 0.0
    assert rep.e_total == 0.0


def test_total_is_sum(grid32):
    rng = np.random.default_rng(0)
    state = zero_state(grid32)
    state.u = random_face(grid32, rng)
    state.d[1, 1:-1, 1:-1] += 0.3 * rng.standard_normal((grid32.nx, grid32.ny))
    fill_cell_neumann(state.d)
    rep = energy(grid32, state)
    assert rep.e_total == rep.e_kin + rep.e_pot
    assert rep.e_kin > 0 and rep.e_pot > 0 and rep.dissipation > 0


def test_circle_winding_potential_energy():
    """d = (cos pi x, sin pi x): |grad d|^2 = pi^2, so the elastic energy
    tends to pi^2 / 2 (at first order: the sine component fights the mirror
    ghosts in the wall columns)."""
    errs = []
    for n in (16, 32, 64, 128):
        g = make_grid(GridSpec(n, n))
        state = zero_state(g)
        x = g.xc()[:, None]
        state.d[0] = np.cos(np.pi * x) + 0.0 * state.d[0]
        state.d[1] = np.sin(np.pi * x) + 0.0 * state.d[1]
        fill_cell_neumann(state.d)
        errs.append(abs(energy(g, state).e_pot - 0.5 * np.pi**2))
    assert all(b < 0.7 * a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.05 * 0.5 * np.pi**2


def test_energy_matches_direct_summation_oracle(grid16):
    """Independent quadrature: plain Python loops over cells."""
    rng = np.random.default_rng(1)
    g = grid16
    state = zero_state(g)
    state.u = random_face(g, rng)
    state.d[:, 1:-1, 1:-1] = rng.standard_normal((g.m, g.nx, g.ny))
    fill_cell_neumann(state.d)
    rep = energy(g, state)

    ux, uy, d = state.u.x, state.u.y, state.d
    hx, hy = g.hx, g.hy
    e_kin = 0.0
    e_pot = 0.0
    for i in range(1, g.nx + 1):
        for j in range(1, g.ny + 1):
            e_kin += 0.5 * (0.5 * (ux[i, j] ** 2 + ux[i + 1, j] ** 2)
                            + 0.5 * (uy[i, j] ** 2 + uy[i, j + 1] ** 2)) * hx * hy
    for l in range(g.m):
        for i in range(0, g.nx + 1):
            for j in range(1, g.ny + 1):
                e_pot += 0.5 * ((d[l, i + 1, j] - d[l, i, j]) / hx) ** 2 * hx * hy
        for i in range(1, g.nx + 1):
            for j in range(0, g.ny + 1):
                e_pot += 0.5 * ((d[l, i, j + 1] - d[l, i, j]) / hy) ** 2 * hx * hy
    assert abs(rep.e_kin - e_kin) < 1e-12 * max(e_kin, 1.0)
    assert abs(rep.e_pot - e_pot) < 1e-12 * max(e_pot, 1.0)


def test_residual_equilibrium_zero(grid16):
    reps = [energy(grid16, zero_state(grid16)) for _ in range(5)]
    res = energy_identity_residual(reps, 1e-3)
    assert np.all(res == 0.0)


def test_residual_needs_two(grid16):
    with pytest.raises(ValueError):
        energy_identity_residual([energy(grid16, zero_state(grid16))], 1e-3)


def test_residual_pure_heat_flow_first_order_in_dt():
    """u = 0, reaction off: the residual against the heat-flow dissipation
    |lap d|^2 is exactly the implicit-Euler defect, first order in dt at
    fixed h (the compact elastic energy is the Laplacian's Dirichlet form,
    so no spatial term survives)."""
    from nematicflow import operators as nops
    from nematicflow.diagnostics import EnergyReport

    g = make_grid(GridSpec(32, 32))

    def heat_report(state):
        rep = energy(g, state)
        lap = nops.laplacian(g, state.d, "neumann")
        d_heat = g.cell_area * float(np.sum(lap[:, 1:-1, 1:-1] ** 2))
        return EnergyReport(e_kin=0.0, e_pot=rep.e_pot, e_total=rep.e_pot,
                            dissipation=d_heat, drift=rep.drift, t=state.t)

    resids = []
    dts = (4e-3, 2e-3, 1e-3)
    for dt in dts:
        state = zero_state(g)
        x = g.xc()[:, None] / g.lx
        state.d[1] = 0.4 * np.cos(np.pi * x) + 0.0 * state.d[1]
        fill_cell_neumann(state.d)
        reps = [heat_report(state)]
        for _ in range(10):
            state = director_step(g, state, PARAMS, dt, 1e-13,
                                  use_advection=False, use_gradsq=False)
            reps.append(heat_report(state))
        resids.append(float(np.max(energy_identity_residual(reps, dt))))
    order = fitted_order(dts, resids)
    assert 0.8 < order < 1.5


def test_dissipation_zero_iff_steady(grid16):
    state = zero_state(grid16)
    assert energy(grid16, state).dissipation == 0.0
    assert nlevp_residual(grid16, state.d) == 0.0
    state.d[1, 1:-1, 1:-1] += 0.1
    state.d[1, 5, 5] += 0.2  # break constancy
    fill_cell_neumann(state.d)
    assert energy(grid16, state).dissipation > 0.0
    assert nlevp_residual(grid16, state.d) > 0.0


def test_csv_row_format():
    assert CSV_HEADER == "t,e_kin,e_pot,e_total,dissipation,residual,drift"
    from nematicflow.diagnostics import EnergyReport

    rep = EnergyReport(e_kin=1 / 3, e_pot=2 / 3, e_total=1.0, dissipation=np.pi,
                       drift=1e-16, t=0.125)
    row = csv_row(rep.t, rep, 0.0)
    parts = row.split(",")
    assert len(parts) == 7
    # 17 significant digits round-trip doubles exactly
    assert float(parts[1]) == 1 / 3
    assert float(parts[4]) == np.pi
