import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from nematicflow import GridSpec, PhysicalParams, make_grid, zero_state
from nematicflow import operators as ops
from nematicflow.harness import (
    DimensionMismatchError,
    MalformedHeaderError,
    ScenarioConfig,
    TruncatedPayloadError,
    checkpoint_read,
    checkpoint_write,
    config_hash,
    initial_state,
    load_config,
    parse_config,
    perturbed_director,
    refinement_study,
    run_scenario,
    solenoidal_velocity,
)
from nematicflow.mesh import fill_cell_neumann

from conftest import random_face

CONFIG_TEXT = """
# comment line
[grid]
nx = 24
ny = 24
lx = 1.0
ly = 1.0
m = 2

[params]
nu = 1.0
lambda = 1.0
gamma = 1.0

[policy]
mode = free
drift_budget = 1e-3

[run]
scenario = perturbed_equilibrium
dt = 5e-4
t_end = 0.02
seed = 42
perturbation_amplitude = 0.05
output_every = 5
tol = 1e-10
advection = upwind
"""


# ---------------------------------------------------------------------------
# config parsing and hashing
# ---------------------------------------------------------------------------

def test_parse_config_roundtrip():
    cfg = parse_config(CONFIG_TEXT)
    assert cfg.grid.nx == 24 and cfg.grid.m == 2
    assert cfg.params.lam == 1.0
    assert cfg.policy.mode == "free"
    assert cfg.scenario == "perturbed_equilibrium"
    assert cfg.dt == 5e-4 and cfg.seed == 42


@pytest.mark.parametrize(
    "mutation,needle",
    [
        ("[grids]", "unknown section"),
        ("nxx = 3", "unknown key"),
        ("nx == 3", "bad value"),
        ("just a stray line", "expected key = value"),
    ],
)
def test_parse_config_rejects(mutation, needle):
    if mutation.startswith("["):
        text = CONFIG_TEXT + "\n" + mutation + "\n"
    elif mutation.startswith("nx"):
        text = CONFIG_TEXT.replace("nx = 24", mutation)
    else:
        text = CONFIG_TEXT + "\n[grid]\n" + mutation + "\n"
    with pytest.raises(ValueError) as exc:
        parse_config(text)
    assert needle in str(exc.value)


def test_parse_config_key_before_section():
    with pytest.raises(ValueError):
        parse_config("nx = 4\n[grid]\n")


def test_config_hash_semantics():
    cfg = parse_config(CONFIG_TEXT)
    assert config_hash(cfg) == config_hash(parse_config(CONFIG_TEXT + "\n\n# noise\n"))
    assert config_hash(cfg) != config_hash(replace(cfg, seed=43))
    assert config_hash(cfg) != config_hash(replace(cfg, dt=4e-4))
    assert config_hash(cfg) != config_hash(replace(cfg, grid=replace(cfg.grid, nx=32)))


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    for name in root.glob("*.cfg"):
        cfg = load_config(name)
        cfg.validate()


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def test_perturbed_director_unit_and_compatible(grid32):
    d = perturbed_director(grid32, seed=5, amplitude=0.2)
    norms = np.sqrt(np.sum(d[:, 1:-1, 1:-1] ** 2, axis=0))
    assert np.max(np.abs(norms - 1.0)) < 1e-14
    # mirror ghosts exact for the cosine modes by construction
    before = d.copy()
    fill_cell_neumann(d)
    assert np.array_equal(before, d)


def test_solenoidal_velocity_exactly_divergence_free(grid32):
    u = solenoidal_velocity(grid32, seed=9, amplitude=0.1)
    div = ops.divergence(grid32, u)
    assert ops.cell_norm_max(grid32, div) < 1e-13
    assert abs(ops.face_norm_max(grid32, u) - 0.1) < 1e-12


def test_initial_state_seed_determinism(grid32):
    cfg = parse_config(CONFIG_TEXT)
    s1 = initial_state(grid32, cfg)
    s2 = initial_state(grid32, cfg)
    assert np.array_equal(s1.d, s2.d)
    assert np.array_equal(s1.u.x, s2.u.x)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bitwise(tmp_path, grid16):
    rng = np.random.default_rng(0)
    state = zero_state(grid16)
    state.u = random_face(grid16, rng)
    state.pi[1:-1, 1:-1] = rng.standard_normal((grid16.nx, grid16.ny))
    state.d[:, 1:-1, 1:-1] = rng.standard_normal((grid16.m, grid16.nx, grid16.ny))
    fill_cell_neumann(state.pi)
    fill_cell_neumann(state.d)
    state.t = 0.1 + 1e-17  # exercise full-precision time round trip
    path = tmp_path / "state.elcp"
    checkpoint_write(path, grid16, state)
    back = checkpoint_read(path, grid16)
    assert back.t == state.t
    assert np.array_equal(back.u.x, state.u.x)
    assert np.array_equal(back.u.y, state.u.y)
    assert np.array_equal(back.pi, state.pi)
    assert np.array_equal(back.d, state.d)


def test_checkpoint_roundtrip_m3(tmp_path):
    g = make_grid(GridSpec(8, 12, 2.0, 1.0, 3))
    rng = np.random.default_rng(1)
    state = zero_state(g)
    state.d[:, 1:-1, 1:-1] = rng.standard_normal((3, 8, 12))
    fill_cell_neumann(state.d)
    path = tmp_path / "state3.elcp"
    checkpoint_write(path, g, state)
    back = checkpoint_read(path, g)
    assert np.array_equal(back.d, state.d)


def test_checkpoint_truncated(tmp_path, grid16):
    path = tmp_path / "state.elcp"
    checkpoint_write(path, grid16, zero_state(grid16))
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(TruncatedPayloadError):
        checkpoint_read(path, grid16)


def test_checkpoint_malformed_header(tmp_path, grid16):
    path = tmp_path / "bad.elcp"
    path.write_bytes(b"LCPX 16 16 2 0.0\n" + b"\x00" * 64)
    with pytest.raises(MalformedHeaderError):
        checkpoint_read(path, grid16)
    path.write_bytes(b"no newline at all")
    with pytest.raises(MalformedHeaderError):
        checkpoint_read(path, grid16)


def test_checkpoint_unsupported_m(tmp_path, grid16):
    path = tmp_path / "m4.elcp"
    path.write_bytes(b"ELCP1 16 16 4 0.0\n" + b"\x00" * 64)
    with pytest.raises(DimensionMismatchError) as exc:
        checkpoint_read(path, grid16)
    assert "unsupported director dimension" in str(exc.value)


def test_checkpoint_grid_mismatch(tmp_path, grid16):
    path = tmp_path / "state.elcp"
    checkpoint_write(path, grid16, zero_state(grid16))
    other = make_grid(GridSpec(8, 8))
    with pytest.raises(DimensionMismatchError):
        checkpoint_read(path, other)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def test_zero_amplitude_run_trivial(tmp_path):
    cfg = replace(parse_config(CONFIG_TEXT), perturbation_amplitude=0.0, t_end=0.01)
    summary = run_scenario(cfg, tmp_path / "zero")
    assert summary.final_energy == 0.0
    assert summary.final_distance_to_equilibria == 0.0
    assert summary.all_pass()


def test_run_outputs_and_determinism(tmp_path):
    cfg = parse_config(CONFIG_TEXT)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    s1 = run_scenario(cfg, out1)
    s2 = run_scenario(cfg, out2)
    csv1 = (out1 / "diagnostics.csv").read_bytes()
    csv2 = (out2 / "diagnostics.csv").read_bytes()
    assert csv1 == csv2
    j1 = json.loads((out1 / "summary.json").read_text())
    j2 = json.loads((out2 / "summary.json").read_text())
    j1.pop("wall_time")
    j2.pop("wall_time")
    assert j1 == j2
    assert s1.config_hash == s2.config_hash
    assert (out1 / "final_state.elcp").exists()


def test_run_custom_checkpoint_scenario(tmp_path, grid16):
    cfg0 = ScenarioConfig(
        grid=GridSpec(16, 16), scenario="perturbed_equilibrium",
        dt=1e-3, t_end=0.01, seed=1, perturbation_amplitude=0.05, tol=1e-10,
    )
    run_scenario(cfg0, tmp_path / "first")
    cfg = replace(
        cfg0, scenario="custom_checkpoint",
        checkpoint=str(tmp_path / "first" / "final_state.elcp"),
    )
    summary = run_scenario(cfg, tmp_path / "resumed")
    assert summary.metrics["steps"] == 10


def test_run_snapshots(tmp_path):
    cfg = replace(parse_config(CONFIG_TEXT), t_end=0.005, output_every=5)
    run_scenario(cfg, tmp_path / "snap", snapshots=True)
    snaps = sorted((tmp_path / "snap" / "snapshots").glob("*.elcp"))
    assert len(snaps) == 2


def test_custom_checkpoint_requires_path():
    cfg = ScenarioConfig(grid=GridSpec(16, 16), scenario="custom_checkpoint",
                         dt=1e-3, t_end=0.01)
    with pytest.raises(ValueError):
        cfg.validate()


def test_steady_scenario(tmp_path):
    cfg = ScenarioConfig(
        grid=GridSpec(24, 24), scenario="steady_nlevp",
        dt=1e-3, t_end=1.0, seed=2, perturbation_amplitude=0.3, tol=1e-8,
    )
    summary = run_scenario(cfg, tmp_path / "steady")
    assert summary.all_pass()
    assert summary.metrics["steady_residual"] <= 1e-8
    assert (tmp_path / "steady" / "steady_history.csv").exists()


def test_refinement_study_tiny(tmp_path):
    cfg = ScenarioConfig(
        grid=GridSpec(8, 8), scenario="coupled_decay",
        dt=2e-3, t_end=0.03, seed=6, perturbation_amplitude=0.1,
        output_every=5, tol=1e-10, advection="centered",
    )
    table = refinement_study(cfg, 3, tmp_path / "ref")
    assert len(table.levels) == 3
    assert table.levels[-1]["nx"] == 32
    assert (tmp_path / "ref" / "refinement.csv").exists()
    assert set(table.orders) == {
        "constraint_drift", "energy_residual_integrated", "coupling_discrepancy",
    }
    # the coupling identity check is grid-level and already asymptotic here
    assert table.orders["coupling_discrepancy"] > 1.5


def test_refinement_study_needs_three_levels(tmp_path):
    cfg = ScenarioConfig(grid=GridSpec(8, 8), dt=1e-3, t_end=0.01)
    with pytest.raises(ValueError):
        refinement_study(cfg, 2, tmp_path)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_run_and_figures(tmp_path):
    from nematicflow.cli import main

    cfg_path = tmp_path / "demo.cfg"
    cfg_path.write_text(CONFIG_TEXT)
    out = tmp_path / "out"
    rc = main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", "7"])
    assert rc == 0
    assert (out / "diagnostics.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "energy_history.png").exists()


def test_cli_spectrum(tmp_path):
    from nematicflow.cli import main

    cfg_path = tmp_path / "demo.cfg"
    cfg_path.write_text(CONFIG_TEXT.replace("nx = 24", "nx = 16").replace("ny = 24", "ny = 16"))
    out = tmp_path / "spec"
    rc = main(["spectrum", "--config", str(cfg_path), "--out", str(out), "--block", "neumann_laplacian"])
    assert rc == 0
    rec = json.loads((out / "spectrum.json").read_text())
    assert rec["kernel_dim"] == 2
    assert (out / "spectrum.png").exists()


def test_cli_steady(tmp_path):
    from nematicflow.cli import main

    cfg_path = tmp_path / "steady.cfg"
    cfg_path.write_text(
        CONFIG_TEXT.replace("scenario = perturbed_equilibrium", "scenario = steady_nlevp")
        .replace("tol = 1e-10", "tol = 1e-8")
        .replace("perturbation_amplitude = 0.05", "perturbation_amplitude = 0.3")
    )
    out = tmp_path / "steady"
    rc = main(["steady", "--config", str(cfg_path), "--out", str(out)])
    assert rc == 0
    assert (out / "steady_residual.png").exists()


def test_cli_refine(tmp_path):
    from nematicflow.cli import main

    text = (
        CONFIG_TEXT.replace("nx = 24", "nx = 8")
        .replace("ny = 24", "ny = 8")
        .replace("t_end = 0.02", "t_end = 0.01")
        .replace("dt = 5e-4", "dt = 2e-3")
        .replace("scenario = perturbed_equilibrium", "scenario = coupled_decay")
    )
    cfg_path = tmp_path / "ref.cfg"
    cfg_path.write_text(text)
    out = tmp_path / "ref"
    rc = main(["refine", "--config", str(cfg_path), "--out", str(out), "--levels", "3"])
    assert rc == 0
    assert (out / "refinement.csv").exists()
    assert (out / "refinement_orders.png").exists()
