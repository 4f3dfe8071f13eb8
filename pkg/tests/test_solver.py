import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kspde import solver as solver_mod
from kspde.coeffs import Coefficients, make_diffusion, make_flux
from kspde.errors import (
    BlowUpError,
    CFLError,
    ConfigurationError,
    DimensionError,
    GridMismatchError,
    LinearSolveError,
)
from kspde.noise import make_noise, sample_path, single_mode_additive
from kspde.solver import (
    DiffusionOperator,
    SolverConfig,
    comparison_run,
    integrate,
    run,
    snapshot_steps,
    step,
    time_l1_distance,
    viscosity_sweep,
    write_diagnostics,
    write_snapshots,
)
from kspde.torus import TorusGrid, lp_norm, read_field

NONE = make_noise("none", 1)


def coeffs(grid, flux="zero", diffusion="heat", params=()):
    return Coefficients(make_flux(flux, grid.dim), make_diffusion(diffusion, grid, params))


def sine(grid):
    return grid.sample(lambda x: np.sin(2 * np.pi * x))


def total_variation(v):
    return float(np.sum(np.abs(np.diff(np.append(v, v[0])))))


# -- config -------------------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        {"epsilon": 1.0},
        {"epsilon": -0.1},
        {"dt": 0.0},
        {"dt": 0.03, "t_end": 0.1},
        {"scheme": "rk4"},
        {"flux_scheme": "lax"},
        {"save_every": 0},
        {"cfl_safety": 1.5},
    ],
)
def test_solver_config_rejects(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_snapshot_steps_always_end_at_horizon():
    assert snapshot_steps(10, 4).tolist() == [0, 4, 8, 10]
    assert snapshot_steps(10, 5).tolist() == [0, 5, 10]


# -- diffusion stencil --------------------------------------------------------

def random_spd_field(grid, rng):
    m = rng.normal(size=grid.shape + (grid.dim, grid.dim))
    return m @ np.swapaxes(m, -1, -2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 16), (2, 8)]))
def test_diffusion_operator_symmetric_and_dissipative(seed, shape):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(*shape)
    op = DiffusionOperator(grid, random_spd_field(grid, rng))
    u, v = rng.normal(size=(2,) + grid.shape)
    Lu, Lv = op.apply(u[None])[0], op.apply(v[None])[0]
    scale = 1 + np.abs(Lu).sum() + np.abs(Lv).sum()
    assert abs(np.sum(v * Lu) - np.sum(u * Lv)) < 1e-10 * scale
    # summation by parts: <u, L u> = - sum of the Dirichlet density
    assert np.sum(u * Lu) == pytest.approx(-np.sum(op.density(u[None])[0]), rel=1e-10, abs=1e-10)
    assert abs(np.sum(Lu)) < 1e-10 * scale


def test_diffusion_operator_on_sine_matches_laplacian():
    grid = TorusGrid(1, 256)
    op = DiffusionOperator(grid, make_diffusion("heat", grid).matrix_field)
    u = sine(grid).values
    exact = -4 * math.pi**2 * u
    assert np.max(np.abs(op.apply(u[None])[0] - exact)) < 4 * math.pi**2 * 1e-3


# -- single steps -------------------------------------------------------------

@pytest.mark.parametrize("flux", ["burgers", "linear", "zero"])
@pytest.mark.parametrize("diffusion", ["heat", "degenerate", "hyperbolic"])
def test_constant_state_is_steady(flux, diffusion):
    grid = TorusGrid(1, 32)
    u = grid.constant(0.7)
    out = step(u, coeffs(grid, flux, diffusion), NONE, [], SolverConfig(epsilon=0.1, dt=1e-4, t_end=1e-4))
    assert np.allclose(out.values, 0.7, atol=1e-13)


def test_mean_moves_by_constant_mode_increment():
    grid = TorusGrid(1, 32)
    u = sine(grid)
    out = step(u, coeffs(grid, "burgers", "hyperbolic"), single_mode_additive(1), [0.25], SolverConfig(0.05, 1e-4, 1e-4))
    assert out.mean() - u.mean() == pytest.approx(0.25, abs=1e-12)


def test_step_increment_count_checked():
    grid = TorusGrid(1, 16)
    with pytest.raises(DimensionError):
        step(sine(grid), coeffs(grid), make_noise("additive", 1, max_modes=4), [0.1], SolverConfig(0.0, 1e-5, 1e-5))


def test_step_reports_blow_up():
    grid = TorusGrid(1, 8)
    model = make_noise("linear", 1, max_modes=1)
    with pytest.raises(BlowUpError) as exc:
        step(grid.constant(1e5), coeffs(grid, diffusion="hyperbolic"), model, [1e4], SolverConfig(0.0, 1e-5, 1e-5))
    assert exc.value.step == 1


def test_unstable_run_reports_step_and_time():
    grid = TorusGrid(1, 32)
    cfg = SolverConfig(0.0, 1e-3, 1.0, save_every=1000)
    with pytest.raises(BlowUpError) as exc:
        integrate(sine(grid).values, grid, coeffs(grid), NONE, None, cfg, check=False)
    assert 1 <= exc.value.step <= 1000
    assert exc.value.time == pytest.approx(exc.value.step * 1e-3)


def test_cfl_violations_raise():
    grid = TorusGrid(1, 64)
    with pytest.raises(CFLError):
        run(sine(grid), coeffs(grid), NONE, None, SolverConfig(0.0, 1e-3, 1e-2))
    with pytest.raises(CFLError):
        run(sine(grid), coeffs(grid, "burgers", "hyperbolic"), NONE, None, SolverConfig(0.0, 0.05, 0.1))


def test_semi_implicit_lifts_diffusive_limit():
    grid = TorusGrid(1, 128)
    cfg = SolverConfig(0.0, 1e-4, 0.01, scheme="semi_implicit", save_every=100)
    traj = run(sine(grid), coeffs(grid), NONE, None, cfg)
    exact = math.exp(-4 * math.pi**2 * 0.01) * sine(grid).values
    assert np.max(np.abs(traj.fields[-1].values - exact)) < 1e-3


def test_linear_solve_failure_is_reported(monkeypatch):
    grid = TorusGrid(1, 16)
    monkeypatch.setattr(solver_mod, "cg", lambda A, b, **kw: (b, 7))
    cfg = SolverConfig(0.0, 1e-3, 1e-3, scheme="semi_implicit")
    with pytest.raises(LinearSolveError):
        run(sine(grid), coeffs(grid), NONE, None, cfg)


# -- trajectories -------------------------------------------------------------

def test_heat_matches_separation_of_variables():
    grid = TorusGrid(1, 128)
    cfg = SolverConfig(0.0, 1e-6, 0.01, save_every=10_000)
    traj = run(sine(grid), coeffs(grid), NONE, None, cfg)
    exact = math.exp(-4 * math.pi**2 * 0.01) * sine(grid).values
    assert np.max(np.abs(traj.fields[-1].values - exact)) <= 5e-4


def test_zero_data_zero_noise_stays_zero():
    grid = TorusGrid(1, 32)
    traj = run(grid.constant(0.0), coeffs(grid, "burgers", "degenerate"), NONE, None, SolverConfig(0.05, 1e-4, 1e-2, save_every=10))
    assert not np.any(traj.values())
    assert traj.times[0] == 0.0 and traj.times[-1] == pytest.approx(1e-2)
    assert np.all(np.diff(traj.times) > 0)


def test_burgers_total_variation_non_increasing():
    grid = TorusGrid(1, 256)
    cfg = SolverConfig(0.005, 1e-3, 0.3, save_every=10)
    traj = run(sine(grid), coeffs(grid, "burgers", "hyperbolic"), NONE, None, cfg)
    tv = [total_variation(f.values) for f in traj.fields]
    assert np.all(np.diff(tv) <= 1e-8)
    # a shock forms, so variation is actually lost
    assert tv[-1] < tv[0] - 0.1


def test_same_seed_bit_identical():
    grid = TorusGrid(1, 64)
    c = coeffs(grid, "burgers", "hyperbolic")
    noise = make_noise("bounded", 1)
    cfg = SolverConfig(0.05, 2.5e-4, 0.05, save_every=20)
    a = run(sine(grid), c, noise, sample_path(9, cfg.steps, cfg.dt, 64), cfg)
    b = run(sine(grid), c, noise, sample_path(9, cfg.steps, cfg.dt, 64), cfg)
    assert a.values().tobytes() == b.values().tobytes()
    assert a.path_seed == 9


def test_batch_rows_match_single_runs():
    grid = TorusGrid(1, 64)
    c = coeffs(grid, "burgers", "hyperbolic")
    noise = make_noise("bounded", 1)
    cfg = SolverConfig(0.05, 2.5e-4, 0.05, save_every=20)
    paths = [sample_path(s, cfg.steps, cfg.dt, 64) for s in (1, 2, 3)]
    u0 = np.stack([sine(grid).values * a for a in (1.0, 0.5, -0.3)])
    batch = integrate(u0, grid, c, noise, np.stack([p.increments for p in paths]), cfg, [1, 2, 3])
    for row, p, traj in zip(u0, paths, batch):
        single = run(grid.field(row), c, noise, p, cfg)
        assert np.array_equal(single.values(), traj.values())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["heat", "degenerate", "hyperbolic"]))
def test_mean_conserved_without_noise(seed, diffusion):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 32)
    u0 = grid.field(rng.uniform(-1, 1, 32))
    cfg = SolverConfig(0.05, 1e-4, 0.01, save_every=25)
    traj = run(u0, coeffs(grid, "burgers", diffusion), NONE, None, cfg)
    assert np.max(np.abs(traj.diagnostics["mean"] - u0.mean())) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_discrete_comparison_for_ordered_data(seed):
    rng = np.random.default_rng(seed)
    grid = TorusGrid(1, 32)
    low = rng.uniform(-1, 1, 32)
    high = low + rng.uniform(0, 0.5, 32)
    cfg = SolverConfig(0.02, 2e-4, 0.02, save_every=10)
    rep = comparison_run(grid.field(high), grid.field(low), coeffs(grid, "burgers", "degenerate"), NONE, None, cfg)
    a, b = rep.trajectories
    assert np.all(a.values() >= b.values() - 1e-12)


def test_energy_ledger_with_spatially_constant_noise():
    # explicit step: |u+|^2 - |u|^2 = -2 dt D(u) + 2 <u, N> + |N|^2 + dt^2 |Lu|^2 when N is constant in x
    grid = TorusGrid(1, 64)
    c = coeffs(grid)
    noise = single_mode_additive(1, 0.5)
    cfg = SolverConfig(0.0, 1e-5, 1e-5)
    op = DiffusionOperator(grid, c.diffusion.matrix_field)
    u = grid.sample(lambda x: np.sin(2 * np.pi * x) + 0.3 * np.cos(6 * np.pi * x))
    dW = 0.004
    new = step(u, c, noise, [dW], cfg)
    cell = grid.cell_measure
    Lu = op.apply(u.values[None])[0]
    lhs = lp_norm(new, 2) ** 2 - lp_norm(u, 2) ** 2
    N = 0.5 * dW
    predicted = (
        -2 * cfg.dt * np.sum(op.density(u.values[None])[0]) * cell
        + 2 * N * u.mean()
        + N**2
    )
    remainder = lhs - predicted
    assert remainder == pytest.approx(cfg.dt**2 * np.sum(Lu**2) * cell, rel=1e-6)


def test_diagnostics_track_dirichlet_and_viscous_energy():
    grid = TorusGrid(1, 64)
    cfg = SolverConfig(0.05, 1e-4, 1e-3)
    traj = run(sine(grid), coeffs(grid, "zero", "degenerate"), NONE, None, cfg)
    d = traj.diagnostics
    assert set(d) >= {"step", "time", "max_abs_u", "l2", "mean", "dirichlet", "viscous"}
    assert len(d["time"]) == cfg.steps + 1
    # viscous energy of sin at eps: eps * |grad u|^2 = 0.05 * 2 pi^2
    assert d["viscous"][0] == pytest.approx(0.05 * 2 * math.pi**2, rel=2e-3)


def test_long_stochastic_run_stays_bounded():
    grid = TorusGrid(1, 32)
    cfg = SolverConfig(0.05, 2e-3, 200.0, save_every=5000)
    noise = make_noise("bounded", 1)
    traj = run(sine(grid), coeffs(grid, "burgers", "hyperbolic"), noise, sample_path(4, cfg.steps, cfg.dt, 64), cfg)
    assert cfg.steps == 100_000
    assert np.all(np.isfinite(traj.diagnostics["max_abs_u"]))
    assert np.max(traj.diagnostics["max_abs_u"]) < 1e3


def test_path_must_cover_run():
    grid = TorusGrid(1, 16)
    cfg = SolverConfig(0.1, 1e-3, 0.02)
    with pytest.raises(DimensionError):
        run(sine(grid), coeffs(grid, "burgers", "hyperbolic"), make_noise("additive", 1), sample_path(0, 5, 1e-3, 64), cfg)
    with pytest.raises(ConfigurationError):
        run(sine(grid), coeffs(grid, "burgers", "hyperbolic"), make_noise("additive", 1), sample_path(0, 20, 2e-3, 64), cfg)


# -- sweeps and comparisons ---------------------------------------------------

def test_sweep_of_equal_epsilons_is_zero():
    grid = TorusGrid(1, 32)
    cfg = SolverConfig(0.0, 5e-4, 0.02, save_every=4)
    path = sample_path(1, cfg.steps, cfg.dt, 64)
    rep = viscosity_sweep(sine(grid), coeffs(grid, "burgers", "hyperbolic"), make_noise("bounded", 1), path, [0.1, 0.1], cfg)
    assert rep.distances == [0.0]


def test_sweep_of_pure_viscosity_matches_heat_oracle():
    # A = 0, B = 0, no noise: u solves u_t = eps u_xx, so for a sine the gap is analytic
    grid = TorusGrid(1, 64)
    T = 0.1
    cfg = SolverConfig(0.0, 5e-4, T, save_every=1)
    rep = viscosity_sweep(sine(grid), coeffs(grid, "zero", "hyperbolic"), NONE, None, [0.1, 0.05], cfg)
    k = 4 * math.pi**2

    def integral(e):
        return (1 - math.exp(-k * e * T)) / (k * e)

    exact = (2 / math.pi) * (integral(0.05) - integral(0.1))
    assert rep.distances[0] == pytest.approx(exact, rel=0.10)


def test_sweep_flags_and_ladder_checks():
    grid = TorusGrid(1, 16)
    cfg = SolverConfig(0.0, 1e-3, 0.01)
    c = coeffs(grid, "zero", "hyperbolic")
    with pytest.raises(ConfigurationError):
        viscosity_sweep(sine(grid), c, NONE, None, [0.1], cfg)
    with pytest.raises(ConfigurationError):
        viscosity_sweep(sine(grid), c, NONE, None, [0.05, 0.1], cfg)
    rep = viscosity_sweep(sine(grid), c, NONE, None, [0.1, 0.1, 0.1], cfg)
    assert not rep.monotone and rep.flags


def test_comparison_of_equal_data_is_zero():
    grid = TorusGrid(1, 32)
    cfg = SolverConfig(0.05, 2.5e-4, 0.02, save_every=8)
    path = sample_path(3, cfg.steps, cfg.dt, 64)
    rep = comparison_run(sine(grid), sine(grid), coeffs(grid, "burgers", "hyperbolic"), make_noise("bounded", 1), path, cfg)
    assert np.all(rep.distances == 0.0)


def test_comparison_heat_oracle():
    grid = TorusGrid(1, 256)
    cfg = SolverConfig(0.0, 5e-6, 0.02, save_every=400)
    rep = comparison_run(sine(grid), grid.constant(0.0), coeffs(grid), NONE, None, cfg)
    exact = np.exp(-4 * math.pi**2 * rep.times) * 2 / math.pi
    assert np.max(np.abs(rep.distances - exact)) < 1e-3
    assert rep.initial_distance == pytest.approx(2 / math.pi, abs=1e-4)


def test_comparison_needs_common_grid():
    with pytest.raises(GridMismatchError):
        comparison_run(sine(TorusGrid(1, 16)), sine(TorusGrid(1, 32)), coeffs(TorusGrid(1, 16)), NONE, None, SolverConfig())


def test_time_l1_distance_trapezoid():
    grid = TorusGrid(1, 8)
    cfg = SolverConfig(0.0, 0.5, 1.0)
    a = integrate(np.zeros(8), grid, coeffs(grid, "zero", "hyperbolic"), NONE, None, cfg)[0]
    b = integrate(np.ones(8), grid, coeffs(grid, "zero", "hyperbolic"), NONE, None, cfg)[0]
    assert time_l1_distance(a, b) == pytest.approx(1.0)


# -- output -------------------------------------------------------------------

def test_snapshot_and_diagnostic_files(tmp_path):
    grid = TorusGrid(1, 16)
    cfg = SolverConfig(0.0, 1e-4, 1e-3, save_every=5)
    traj = run(sine(grid), coeffs(grid), NONE, None, cfg)
    index = write_snapshots(traj, tmp_path / "snaps", header=["run a"])
    lines = [l for l in index.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 3
    t, name = lines[-1].split()
    field, t_read = read_field(tmp_path / "snaps" / name)
    assert float(t) == t_read and np.array_equal(field.values, traj.fields[-1].values)

    write_diagnostics(traj, tmp_path / "d.csv", ["run a"])
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "# run a" and rows[1] == "step,time,max_abs_u,l2,mean"
    assert len(rows) == 2 + cfg.steps + 1
