"""Euler-Maruyama integration of the viscous approximation on the torus.

The state may carry a leading batch axis (one row per Wiener path). Every
operation is elementwise along that axis, so a path integrated alone gives
the same bits as the same path integrated inside a batch.

Spatial operators:

* flux divergence: Engquist-Osher monotone flux (``upwind``) or the
  centred average (``central``), both in conservation form;
* diffusion: ``L u = -1/2 (D+^T A D+ u + D-^T A D- u)`` with one-sided
  differences. This is symmetric, negative semidefinite and mean-free, and
  in 1-d reduces to the compact three-point stencil with averaged face
  coefficients. Its Dirichlet form ``-<u, L u>`` equals the cell sum of
  ``1/2 (D+u.A D+u + D-u.A D-u)``, the density used for the dissipation
  measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .coeffs import Coefficients, FluxSpec, Tabulated, regularize
from .errors import (
    BlowUpError,
    CFLError,
    ConfigurationError,
    DimensionError,
    GridMismatchError,
    InvalidParameterError,
    LinearSolveError,
)
from .noise import NoiseModel, WienerPath, truncate_coefficients
from .torus import ScalarField, TorusGrid, lp_norm

BLOWUP_THRESHOLD = 1e8
CG_RTOL = 1e-10
DIAGNOSTIC_COLUMNS = ("step", "time", "max_abs_u", "l2", "mean")


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.0
    dt: float = 1e-4
    t_end: float = 0.1
    scheme: str = "explicit"
    flux_scheme: str = "upwind"
    save_every: int = 1
    cfl_safety: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigurationError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if not self.dt > 0 or not self.t_end > 0:
            raise ConfigurationError("dt and t_end must be positive")
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.flux_scheme not in ("upwind", "central"):
            raise ConfigurationError(f"unknown flux scheme {self.flux_scheme!r}")
        if self.save_every < 1:
            raise ConfigurationError("save_every must be >= 1")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ConfigurationError("cfl_safety must lie in (0, 1]")
        ratio = self.t_end / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError(f"t_end/dt = {ratio} is not an integer step count")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(eq=False)
class Trajectory:
    """Snapshots, per-step diagnostics and, optionally, kinetic side terms.

    ``diagnostics`` maps a column name to an array over steps ``0..steps``
    (the state at ``step * dt``). ``kinetic_terms`` holds cumulative
    stochastic and Ito-correction integrals per battery function, sampled at
    the snapshot times.
    """

    times: np.ndarray
    fields: list[ScalarField]
    config: SolverConfig
    path_seed: int
    diagnostics: dict[str, np.ndarray]
    kinetic_terms: dict[str, np.ndarray] | None = None
    coefficients: Coefficients | None = field(default=None, repr=False)
    noise: NoiseModel | None = field(default=None, repr=False)

    @property
    def grid(self) -> TorusGrid:
        return self.fields[0].grid

    @property
    def snapshots(self) -> list[tuple[float, ScalarField]]:
        return list(zip(self.times.tolist(), self.fields))

    def values(self) -> np.ndarray:
        """Snapshot values stacked as ``(snapshots,) + grid.shape``."""
        return np.stack([f.values for f in self.fields])


# --------------------------------------------------------------------------
# operators

def _axis(dim, d):
    # spatial axis d of a batched array (batch axis first)
    return d - dim


def forward_differences(u: np.ndarray, dim: int, h: float) -> list[np.ndarray]:
    return [(np.roll(u, -1, axis=_axis(dim, d)) - u) / h for d in range(dim)]


def backward_differences(u: np.ndarray, dim: int, h: float) -> list[np.ndarray]:
    return [(u - np.roll(u, 1, axis=_axis(dim, d))) / h for d in range(dim)]


class DiffusionOperator:
    """``L u`` and its Dirichlet density for a cellwise matrix field."""

    def __init__(self, grid: TorusGrid, matrix_field: np.ndarray):
        self.grid = grid
        self.dim = grid.dim
        self.h = grid.spacing
        self.matrix = np.asarray(matrix_field, dtype=float)
        self.zero = not np.any(self.matrix)
        self._diag = self.dim == 1 or not np.any(self.matrix[..., 0, 1])

    def _apply_matrix(self, grads):
        A = self.matrix
        if self._diag:
            return [A[..., d, d] * grads[d] for d in range(self.dim)]
        return [sum(A[..., d, e] * grads[e] for e in range(self.dim)) for d in range(self.dim)]

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(u)
        dim, h = self.dim, self.h
        out = np.zeros_like(u)
        # -D+^T w is the backward difference of w, -D-^T w the forward one
        fwd = self._apply_matrix(forward_differences(u, dim, h))
        bwd = self._apply_matrix(backward_differences(u, dim, h))
        for d in range(dim):
            ax = _axis(dim, d)
            out += (fwd[d] - np.roll(fwd[d], 1, axis=ax)) / h
            out += (np.roll(bwd[d], -1, axis=ax) - bwd[d]) / h
        return 0.5 * out

    def density(self, u: np.ndarray) -> np.ndarray:
        """``1/2 (D+u . A D+u + D-u . A D-u)`` per cell."""
        dim, h = self.dim, self.h
        out = np.zeros_like(u)
        if self.zero:
            return out
        for diffs in (forward_differences, backward_differences):
            g = diffs(u, dim, h)
            Ag = self._apply_matrix(g)
            for d in range(dim):
                out += g[d] * Ag[d]
        return 0.5 * out


def identity_density(u: np.ndarray, dim: int, h: float) -> np.ndarray:
    """``|grad u|^2`` in the same one-sided average as :meth:`DiffusionOperator.density`."""
    out = np.zeros_like(u)
    for diffs in (forward_differences, backward_differences):
        for g in diffs(u, dim, h):
            out += g * g
    return 0.5 * out


class FluxDivergence:
    """Conservative ``div B(u)`` with an Engquist-Osher or centred numerical flux."""

    TABLE_POINTS = 16384

    def __init__(self, grid: TorusGrid, flux: FluxSpec, scheme: str = "upwind", span: float = 1.0):
        if flux.dim != grid.dim:
            raise DimensionError(f"flux has {flux.dim} components on a {grid.dim}-d grid")
        self.grid = grid
        self.flux = flux
        self.scheme = scheme
        self.zero = flux.is_zero()
        self.tables = None
        self.span = 0.0
        if scheme == "upwind" and not self.zero:
            self._build(span)

    def _build(self, span):
        tables = []
        for B in self.flux.components:
            if isinstance(B, Tabulated):
                xi = B.xi
                lo, hi = xi[0], xi[-1]
                # beyond a tabulated flux's range it is constant, so clamping is exact
                self.span = math.inf
            else:
                half = self.TABLE_POINTS // 2
                xi = np.linspace(-span, span, 2 * half + 1)
                self.span = span
            values = np.asarray(B(xi), dtype=float)
            inc = np.diff(values)
            zero = int(np.argmin(np.abs(xi)))
            up = np.concatenate([[0.0], np.cumsum(np.maximum(inc, 0.0))])
            down = np.concatenate([[0.0], np.cumsum(np.minimum(inc, 0.0))])
            tables.append((xi, up - up[zero], down - down[zero] + values[zero]))
        self.tables = tables

    def ensure_range(self, bound: float):
        if self.tables is not None and bound > self.span:
            self._build(2.0 * bound)

    def numerical_flux(self, u: np.ndarray, d: int) -> np.ndarray:
        right = np.roll(u, -1, axis=_axis(self.grid.dim, d))
        if self.scheme == "central":
            B = self.flux.components[d]
            return 0.5 * (np.asarray(B(u), dtype=float) + np.asarray(B(right), dtype=float))
        xi, up, down = self.tables[d]
        return np.interp(u, xi, up) + np.interp(right, xi, down)

    def apply(self, u: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(u)
        dim, h = self.grid.dim, self.grid.spacing
        out = np.zeros_like(u)
        for d in range(dim):
            F = self.numerical_flux(u, d)
            out += (F - np.roll(F, 1, axis=_axis(dim, d))) / h
        return out


class NoiseOperator:
    """``sum_k g_k(x, u) dbeta_k`` and ``G^2(x, u)`` on the grid for a separable model."""

    def __init__(self, grid: TorusGrid, model: NoiseModel):
        self.model = model
        self.zero = model.is_zero()
        self.active = model.active
        if not self.zero:
            modes = model.mode_matrix(grid.points())
            self.modes = modes.reshape((self.active,) + grid.shape)
            self.mode_square = (modes**2).sum(axis=0).reshape(grid.shape)

    def spatial_sum(self, increments: np.ndarray) -> np.ndarray:
        """``sum_k dbeta_k a_k phi_k(x)`` for increments of shape ``(batch, active)``."""
        inc = np.asarray(increments, dtype=float)
        expand = (slice(None),) + (None,) * self.modes[0].ndim
        out = inc[:, 0][expand] * self.modes[0]
        for k in range(1, self.active):
            out = out + inc[:, k][expand] * self.modes[k]
        return out

    def apply(self, u: np.ndarray, increments: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(u)
        return np.asarray(self.model.profile(u), dtype=float) * self.spatial_sum(increments)

    def g_squared(self, u: np.ndarray) -> np.ndarray:
        if self.zero:
            return np.zeros_like(u)
        return np.asarray(self.model.profile(u), dtype=float) ** 2 * self.mode_square


# --------------------------------------------------------------------------
# setup and checks

def prepare(coeffs: Coefficients, noise: NoiseModel, eps: float) -> tuple[Coefficients, NoiseModel]:
    """Return coefficients and noise regularized at ``eps``.

    Already regularized inputs at the same level pass through unchanged.
    """
    if coeffs.epsilon == eps:
        prepared = coeffs
    elif coeffs.epsilon == 0.0:
        prepared = regularize(coeffs, eps)
    else:
        raise ConfigurationError(f"coefficients regularized at {coeffs.epsilon}, config asks for {eps}")
    if eps == 0.0 or noise.epsilon == eps or noise.is_zero():
        model = noise
    elif noise.epsilon == 0.0:
        model = truncate_coefficients(noise, eps)
    else:
        raise ConfigurationError(f"noise truncated at {noise.epsilon}, config asks for {eps}")
    return prepared, model


def expected_range(u0: np.ndarray) -> float:
    return max(1.0, 2.0 * float(np.max(np.abs(u0))))


def max_speed(flux: FluxSpec, bound: float) -> float:
    if flux.is_zero():
        return 0.0
    xi = np.linspace(-bound, bound, 4001)
    return float(np.max(np.sqrt((flux.speed(xi) ** 2).sum(axis=0))))


def check_cfl(grid: TorusGrid, coeffs: Coefficients, config: SolverConfig, bound: float) -> None:
    """Raise :class:`CFLError` when the explicit step limits are violated."""
    h, dim, safety = grid.spacing, grid.dim, config.cfl_safety
    if config.scheme == "explicit":
        lam = max(coeffs.diffusion.max_eigenvalue(), 0.0)
        if lam > 0 and config.dt > safety * h**2 / (2 * dim * lam):
            raise CFLError(
                f"dt = {config.dt} exceeds diffusive limit {safety * h**2 / (2 * dim * lam):.3e}"
            )
    speed = max_speed(coeffs.flux, bound)
    if speed > 0 and config.dt > safety * h / speed:
        raise CFLError(f"dt = {config.dt} exceeds advective limit {safety * h / speed:.3e}")


class _Stepper:
    def __init__(self, grid, coeffs, noise, config, span):
        self.grid = grid
        self.config = config
        self.coeffs = coeffs
        self.noise = noise
        self.flux = FluxDivergence(grid, coeffs.flux, config.flux_scheme, span)
        self.diffusion = DiffusionOperator(grid, coeffs.diffusion.matrix_field)
        self.base = DiffusionOperator(grid, coeffs.diffusion.base_field)
        self.noise_op = NoiseOperator(grid, noise)
        self._implicit = None
        if config.scheme == "semi_implicit" and not self.diffusion.zero:
            size, dt = grid.size, config.dt
            shape = grid.shape

            def matvec(v):
                v = np.asarray(v).reshape((1,) + shape)
                return (v - dt * self.diffusion.apply(v)).reshape(size)

            self._implicit = LinearOperator((size, size), matvec=matvec, dtype=float)

    def increment(self, u, increments):
        dt = self.config.dt
        self.flux.ensure_range(float(np.max(np.abs(u))))
        rhs = u - dt * self.flux.apply(u) + self.noise_op.apply(u, increments)
        if self._implicit is None:
            return rhs + dt * self.diffusion.apply(u)
        out = np.empty_like(rhs)
        for b in range(rhs.shape[0]):
            b_flat = rhs[b].reshape(-1)
            x, info = cg(self._implicit, b_flat, x0=u[b].reshape(-1).copy(), rtol=CG_RTOL, atol=0.0, maxiter=10 * b_flat.size)
            res = float(np.linalg.norm(self._implicit.matvec(x) - b_flat) / max(np.linalg.norm(b_flat), 1e-300))
            if info != 0:
                raise LinearSolveError(f"conjugate gradients did not converge (info {info})", res)
            out[b] = x.reshape(self.grid.shape)
        return out


def step(u: ScalarField, coeffs: Coefficients, noise_model: NoiseModel, increments, config: SolverConfig) -> ScalarField:
    """One Euler-Maruyama step with regularized coefficients.

    Raises :class:`BlowUpError` (step 1) when the result is not finite or
    exceeds the blow-up threshold.
    """
    grid = u.grid
    inc = np.asarray(increments, dtype=float).reshape(1, -1)
    if not noise_model.is_zero() and inc.shape[1] != noise_model.active:
        raise DimensionError(f"{inc.shape[1]} increments for {noise_model.active} active modes")
    stepper = _Stepper(grid, coeffs, noise_model, config, expected_range(u.values))
    new = stepper.increment(u.values[None], inc)[0]
    _check_blowup(new[None], 1, config.dt)
    return grid.field(new)


def _check_blowup(u, step_index, dt, paths=None):
    bad = ~np.isfinite(u).reshape(len(u), -1).all(axis=1)
    big = np.zeros(len(u), dtype=bool)
    finite = ~bad
    if finite.any():
        big[finite] = np.max(np.abs(u[finite].reshape(finite.sum(), -1)), axis=1) > BLOWUP_THRESHOLD
    hit = bad | big
    if hit.any():
        which = int(np.argmax(hit))
        label = f" on path {paths[which]}" if paths is not None else ""
        raise BlowUpError(
            f"solution blew up at step {step_index} (t = {step_index * dt:.6g}){label}",
            step=step_index,
            time=step_index * dt,
        )


# --------------------------------------------------------------------------
# integration drivers

def snapshot_steps(steps: int, save_every: int) -> np.ndarray:
    idx = list(range(0, steps + 1, save_every))
    if idx[-1] != steps:
        idx.append(steps)
    return np.array(idx)


def integrate(
    u0: np.ndarray,
    grid: TorusGrid,
    coeffs: Coefficients,
    noise_model: NoiseModel,
    increments: np.ndarray | None,
    config: SolverConfig,
    seeds: Sequence[int] = (),
    battery=None,
    check: bool = True,
) -> list[Trajectory]:
    """Integrate a batch of initial states; row ``b`` of ``increments`` drives row ``b`` of ``u0``.

    ``increments`` has shape ``(batch, steps, K)`` with ``K >= active``;
    only the leading ``active`` modes are used (shared-path coupling).
    """
    coeffs, model = prepare(coeffs, noise_model, config.epsilon)
    u = np.array(u0, dtype=float).reshape((-1,) + grid.shape)
    batch, steps, dt = u.shape[0], config.steps, config.dt
    if not np.all(np.isfinite(u)):
        raise InvalidParameterError("initial data must be finite")
    if coeffs.diffusion.grid.shape != grid.shape:
        raise GridMismatchError("diffusion field and initial data live on different grids")
    active = 0 if model.is_zero() else model.active
    if active:
        if increments is None:
            raise DimensionError("noisy model needs Wiener increments")
        increments = np.asarray(increments, dtype=float)
        if increments.ndim != 3 or increments.shape[0] != batch:
            raise DimensionError("increments must have shape (batch, steps, K)")
        if increments.shape[1] < steps:
            raise DimensionError(f"path has {increments.shape[1]} steps, run needs {steps}")
        if increments.shape[2] < active:
            raise DimensionError(f"path has {increments.shape[2]} modes, model needs {active}")
    span = expected_range(u)
    if check:
        check_cfl(grid, coeffs, config, span)

    stepper = _Stepper(grid, coeffs, model, config, span)
    cell, h, dim = grid.cell_measure, grid.spacing, grid.dim
    eps = coeffs.epsilon
    saves = snapshot_steps(steps, config.save_every)
    save_set = {int(s): i for i, s in enumerate(saves)}
    snaps = np.empty((len(saves), batch) + grid.shape)
    axes = tuple(range(1, dim + 1))
    diag = {k: np.empty((batch, steps + 1)) for k in ("max_abs_u", "l2", "mean", "dirichlet", "viscous")}
    if battery is not None:
        stoch = np.zeros((batch, len(battery)))
        ito = np.zeros((batch, len(battery)))
        stoch_saved = np.zeros((len(saves), batch, len(battery)))
        ito_saved = np.zeros((len(saves), batch, len(battery)))

    def record(s, state):
        diag["max_abs_u"][:, s] = np.max(np.abs(state), axis=axes)
        diag["l2"][:, s] = np.sqrt(np.sum(state**2, axis=axes) * cell)
        diag["mean"][:, s] = np.sum(state, axis=axes) * cell
        diag["dirichlet"][:, s] = np.sum(stepper.base.density(state), axis=axes) * cell
        diag["viscous"][:, s] = eps * np.sum(identity_density(state, dim, h), axis=axes) * cell if eps else 0.0
        if s in save_set:
            snaps[save_set[s]] = state
            if battery is not None:
                stoch_saved[save_set[s]] = stoch
                ito_saved[save_set[s]] = ito

    record(0, u)
    for s in range(steps):
        inc = increments[:, s, :active] if active else None
        noise_term = None
        if battery is not None and active:
            noise_term = stepper.noise_op.apply(u, inc)
            stoch += battery.noise_pairing(u, noise_term, cell)
            ito += 0.5 * dt * battery.slope_pairing(u, stepper.noise_op.g_squared(u), cell)
        u = stepper.increment(u, inc if active else np.zeros((batch, 1)))
        _check_blowup(u, s + 1, dt, paths=seeds or None)
        record(s + 1, u)

    times = saves * dt
    out = []
    for b in range(batch):
        fields = [grid.field(snaps[i, b]) for i in range(len(saves))]
        diagnostics = {"step": np.arange(steps + 1), "time": np.arange(steps + 1) * dt}
        diagnostics.update({k: v[b].copy() for k, v in diag.items()})
        kin = None
        if battery is not None:
            kin = {"stochastic": stoch_saved[:, b].T.copy(), "ito": ito_saved[:, b].T.copy()}
        seed = int(seeds[b]) if len(seeds) > b else -1
        out.append(Trajectory(times, fields, config, seed, diagnostics, kin, coeffs, model))
    return out


def _path_increments(paths: Sequence[WienerPath | None], steps: int) -> np.ndarray | None:
    if not paths or paths[0] is None:
        return None
    return np.stack([p.increments[:steps] for p in paths])


def run(
    u0: ScalarField,
    coeffs: Coefficients,
    noise_model: NoiseModel,
    path: WienerPath | None,
    config: SolverConfig,
    battery=None,
) -> Trajectory:
    """Integrate one path; deterministic in ``(u0, path.seed, config)``."""
    if path is not None and path.dt != config.dt:
        raise ConfigurationError(f"path dt {path.dt} differs from config dt {config.dt}")
    seeds = [path.seed] if path is not None else []
    return integrate(
        u0.values, u0.grid, coeffs, noise_model, _path_increments([path], config.steps), config, seeds, battery
    )[0]


# --------------------------------------------------------------------------
# experiment drivers

def time_l1_distance(a: Trajectory, b: Trajectory) -> float:
    """``int_0^T ||u_a - u_b||_{L^1} dt`` by the trapezoidal rule over common snapshots."""
    if not np.array_equal(a.times, b.times):
        raise ConfigurationError("trajectories have different snapshot times")
    cell = a.grid.cell_measure
    axes = tuple(range(1, a.grid.dim + 1))
    d = np.sum(np.abs(a.values() - b.values()), axis=axes) * cell
    return float(np.trapezoid(d, a.times))


@dataclass
class SweepReport:
    epsilons: list[float]
    distances: list[float]
    trajectories: list[Trajectory] = field(repr=False, default_factory=list)

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))

    @property
    def flags(self) -> list[str]:
        return [] if self.monotone else ["distances are not strictly decreasing"]


def check_ladder(epsilons: Sequence[float]) -> list[float]:
    eps = [float(e) for e in epsilons]
    if len(eps) < 2:
        raise ConfigurationError("a viscosity sweep needs at least two epsilon values")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigurationError("sweep epsilons must lie in (0, 1)")
    if any(b > a for a, b in zip(eps, eps[1:])):
        raise ConfigurationError("sweep epsilons must be non-increasing")
    return eps


def viscosity_sweep(
    u0: ScalarField | Sequence[ScalarField],
    coeffs: Coefficients,
    noise_model: NoiseModel,
    path: WienerPath | None,
    epsilons: Sequence[float],
    base_config: SolverConfig,
) -> SweepReport:
    """Run every epsilon on the same path; report consecutive time-integrated L1 distances.

    ``u0`` may be one field or one field per epsilon (mollified data).
    """
    eps = check_ladder(epsilons)
    data = list(u0) if isinstance(u0, (list, tuple)) else [u0] * len(eps)
    if len(data) != len(eps):
        raise ConfigurationError("one initial field per epsilon required")
    trajs = [run(d, coeffs, noise_model, path, replace(base_config, epsilon=e)) for d, e in zip(data, eps)]
    dists = [time_l1_distance(a, b) for a, b in zip(trajs, trajs[1:])]
    return SweepReport(eps, dists, trajs)


@dataclass
class ComparisonReport:
    times: np.ndarray
    distances: np.ndarray
    initial_distance: float
    trajectories: tuple[Trajectory, Trajectory] = field(repr=False, default=None)


def comparison_run(
    u0_a: ScalarField,
    u0_b: ScalarField,
    coeffs: Coefficients,
    noise_model: NoiseModel,
    path: WienerPath | None,
    config: SolverConfig,
) -> ComparisonReport:
    """Evolve two initial data under one path; L1 distance at every snapshot."""
    if u0_a.grid != u0_b.grid:
        raise GridMismatchError("initial data on different grids")
    grid = u0_a.grid
    inc = _path_increments([path, path], config.steps)
    seeds = [path.seed] * 2 if path is not None else []
    a, b = integrate(np.stack([u0_a.values, u0_b.values]), grid, coeffs, noise_model, inc, config, seeds)
    axes = tuple(range(1, grid.dim + 1))
    dist = np.sum(np.abs(a.values() - b.values()), axis=axes) * grid.cell_measure
    return ComparisonReport(a.times, dist, lp_norm(u0_a - u0_b, 1), (a, b))


# --------------------------------------------------------------------------
# output

def write_snapshots(traj: Trajectory, directory, prefix: str = "snapshot", header: Sequence[str] = ()) -> Path:
    from .torus import write_field

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"# {h}" for h in header]
    for i, (t, f) in enumerate(traj.snapshots):
        name = f"{prefix}_{i:05d}.field"
        write_field(directory / name, f, t)
        lines.append(f"{t!r} {name}")
    index = directory / f"{prefix}.index"
    index.write_text("\n".join(lines) + "\n")
    return index


def write_diagnostics(traj: Trajectory, filename, header: Sequence[str] = ()) -> None:
    d = traj.diagnostics
    lines = [f"# {h}" for h in header]
    lines.append(",".join(DIAGNOSTIC_COLUMNS))
    for i in range(len(d["step"])):
        lines.append(
            f"{int(d['step'][i])},{float(d['time'][i])!r},{float(d['max_abs_u'][i])!r},"
            f"{float(d['l2'][i])!r},{float(d['mean'][i])!r}"
        )
    Path(filename).write_text("\n".join(lines) + "\n")
