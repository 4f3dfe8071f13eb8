"""Kinetic function, dissipation measures and the weak kinetic identity.

The Dirac mass ``delta(u = xi)`` is realized as a nearest-bin deposit, so a
measure estimate stores one bin index and one mass per (cell, time slab).
Time slabs run between consecutive snapshots and use the state at their
left end, which matches the explicit time stepping when every step is saved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coeffs import Coefficients
from .errors import ConfigurationError, InvalidParameterError, XiRangeError
from .noise import NoiseModel, WienerPath
from .solver import DiffusionOperator, Trajectory, identity_density
from .torus import ScalarField, TorusGrid

DEFAULT_BINS = 128
DEFAULT_MARGIN = 5


@dataclass(frozen=True)
class XiGrid:
    xi_min: float
    xi_max: float
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if self.bins < 8:
            raise InvalidParameterError(f"need at least 8 xi bins, got {self.bins}")
        if not self.xi_max > self.xi_min:
            raise InvalidParameterError("xi_max must exceed xi_min")

    @property
    def width(self) -> float:
        return (self.xi_max - self.xi_min) / self.bins

    @property
    def centers(self) -> np.ndarray:
        return self.xi_min + (np.arange(self.bins) + 0.5) * self.width

    @property
    def edges(self) -> np.ndarray:
        return self.xi_min + np.arange(self.bins + 1) * self.width

    def bin_index(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lo, hi = float(np.min(u)), float(np.max(u))
        if lo < self.xi_min or hi > self.xi_max:
            raise XiRangeError(
                f"solution range [{lo:.6g}, {hi:.6g}] leaves xi grid [{self.xi_min:.6g}, {self.xi_max:.6g}]; "
                "rebuild the grid with XiGrid.covering"
            )
        idx = np.floor((u - self.xi_min) / self.width).astype(np.int64)
        return np.clip(idx, 0, self.bins - 1)

    @classmethod
    def covering(cls, lo: float, hi: float, bins: int = DEFAULT_BINS, margin: int = DEFAULT_MARGIN) -> "XiGrid":
        """Grid of ``bins`` cells spanning ``[lo - margin dxi, hi + margin dxi]``."""
        span = max(hi - lo, 1e-12)
        width = span / (bins - 2 * margin)
        return cls(lo - margin * width, hi + margin * width, bins)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], bins: int = DEFAULT_BINS, margin: int = DEFAULT_MARGIN):
        lo = min(float(np.min(t.values())) for t in trajs)
        hi = max(float(np.max(t.values())) for t in trajs)
        return cls.covering(lo, hi, bins, margin)


def kinetic_function(u: ScalarField, xi: XiGrid) -> np.ndarray:
    """``1[u_i > xi_j]`` as a ``(cells, bins)`` uint8 array."""
    return (u.flat()[:, None] > xi.centers[None, :]).astype(np.uint8)


@dataclass(eq=False)
class KineticMeasureEstimate:
    """Nearest-bin measure: ``mass[c, s]`` sits in bin ``bins[c, s]`` of cell ``c``, slab ``s``."""

    grid: TorusGrid
    xi: XiGrid
    times: np.ndarray
    bins: np.ndarray
    mass: np.ndarray
    kind: str

    @property
    def slabs(self) -> int:
        return len(self.times) - 1

    @property
    def density(self) -> np.ndarray:
        """Dense ``(cells, slabs, bins)`` density with mass = density * dx^N * dt_slab * dxi."""
        dt = np.diff(self.times)
        out = np.zeros((self.grid.size, self.slabs, self.xi.bins))
        c, s = np.indices(self.bins.shape)
        out[c, s, self.bins] = self.mass / (self.grid.cell_measure * dt[None, :] * self.xi.width)
        return out

    def total_mass(self) -> float:
        return float(np.sum(self.mass))

    def __add__(self, other: "KineticMeasureEstimate") -> "KineticMeasureEstimate":
        if not np.array_equal(self.bins, other.bins) or self.xi != other.xi:
            raise ConfigurationError("measures deposited on different bins cannot be added")
        return KineticMeasureEstimate(self.grid, self.xi, self.times, self.bins, self.mass + other.mass, "total")


def accumulate_measures(
    traj: Trajectory, coeffs: Coefficients, eps: float, xi: XiGrid
) -> tuple[KineticMeasureEstimate, KineticMeasureEstimate]:
    """Parabolic and viscous dissipation measures ``n1`` and ``n2``.

    ``n1`` uses the unperturbed matrix ``A(x)``, ``n2`` the added ``eps I``;
    together they account for the full numerical dissipation of the
    diffusion stencil.
    """
    if not math.isclose(eps, traj.config.epsilon, rel_tol=0, abs_tol=1e-15):
        raise ConfigurationError(f"epsilon {eps} does not match the trajectory's {traj.config.epsilon}")
    grid = traj.grid
    values = traj.values()[:-1]
    dt = np.diff(traj.times)
    bins = xi.bin_index(values).reshape(len(values), -1).T
    base = DiffusionOperator(grid, coeffs.diffusion.base_field)
    weight = grid.cell_measure * dt[:, None]
    n1 = (base.density(values).reshape(len(values), -1) * weight).T
    n2 = eps * (identity_density(values, grid.dim, grid.spacing).reshape(len(values), -1) * weight).T
    return (
        KineticMeasureEstimate(grid, xi, traj.times, bins, n1, "n1"),
        KineticMeasureEstimate(grid, xi, traj.times, bins.copy(), n2, "n2"),
    )


def tail_mass(measure: KineticMeasureEstimate, R: float) -> float:
    """Mass in bins whose centre satisfies ``|xi| >= R``."""
    if R < 0:
        raise InvalidParameterError("tail radius must be nonnegative")
    far = np.abs(measure.xi.centers) >= R
    return float(np.sum(measure.mass[far[measure.bins]]))


# --------------------------------------------------------------------------
# test functions

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _bump_derivative(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri**2)) * (-2.0 * ri / (1.0 - ri**2) ** 2)
    return out


@dataclass(frozen=True)
class TestFunction:
    """``phi(x, xi) = psi(x) theta(xi)`` with trigonometric ``psi`` and a smooth bump ``theta``."""

    kind: str  # const | cos | sin
    wavevector: tuple[int, ...]
    center: float
    halfwidth: float
    label: str = ""

    __test__ = False  # keep pytest from collecting this class

    def spatial(self, points) -> np.ndarray:
        phase = 2 * math.pi * (np.asarray(points, dtype=float) @ np.asarray(self.wavevector, dtype=float))
        if self.kind == "const":
            return np.ones(len(points))
        return np.cos(phase) if self.kind == "cos" else np.sin(phase)

    def spatial_gradient(self, points) -> np.ndarray:
        """``grad psi`` as ``(dim, P)``."""
        j = np.asarray(self.wavevector, dtype=float)
        phase = 2 * math.pi * (np.asarray(points, dtype=float) @ j)
        if self.kind == "const":
            return np.zeros((len(j), len(points)))
        factor = -np.sin(phase) if self.kind == "cos" else np.cos(phase)
        return 2 * math.pi * j[:, None] * factor[None, :]

    def profile(self, xi):
        return _bump((np.asarray(xi, dtype=float) - self.center) / self.halfwidth)

    def profile_derivative(self, xi):
        return _bump_derivative((np.asarray(xi, dtype=float) - self.center) / self.halfwidth) / self.halfwidth


class Battery:
    """Ordered family of separable test functions with pairings used during a run."""

    def __init__(self, functions: Sequence[TestFunction], grid: TorusGrid):
        if not functions:
            raise ConfigurationError("test battery is empty")
        self.functions = list(functions)
        self.grid = grid
        pts = grid.points()
        self.psi = np.stack([f.spatial(pts).reshape(grid.shape) for f in self.functions])

    def __len__(self):
        return len(self.functions)

    @property
    def labels(self) -> list[str]:
        return [f.label or f"phi{i}" for i, f in enumerate(self.functions)]

    def _pair(self, u, weight, func, cell):
        axes = tuple(range(1, u.ndim))
        out = np.empty((u.shape[0], len(self)))
        for i, f in enumerate(self.functions):
            out[:, i] = np.sum(self.psi[i] * getattr(f, func)(u) * weight, axis=axes) * cell
        return out

    def noise_pairing(self, u, noise_term, cell):
        """``int psi(x) theta(u) (Phi dW)(x) dx`` per batch row and test function."""
        return self._pair(u, noise_term, "profile", cell)

    def slope_pairing(self, u, g_squared, cell):
        """``int psi(x) theta'(u) G^2(x, u) dx``."""
        return self._pair(u, g_squared, "profile_derivative", cell)


def default_battery(grid: TorusGrid, xi: XiGrid) -> Battery:
    """``{1, cos 2pi x1, sin 2pi x1, cos 4pi x1}`` times a centred and an offset xi-bump."""
    lo, hi = xi.xi_min, xi.xi_max
    span = hi - lo
    mid = 0.5 * (lo + hi)
    bumps = [("center", mid, 0.5 * span), ("offset", lo + 0.6 * span, 0.35 * span)]
    e1 = tuple([1] + [0] * (grid.dim - 1))
    e2 = tuple([2] + [0] * (grid.dim - 1))
    spatial = [("one", "const", tuple([0] * grid.dim)), ("cos1", "cos", e1), ("sin1", "sin", e1), ("cos2", "cos", e2)]
    funcs = [
        TestFunction(kind, wave, c, w, f"{name}_{bname}")
        for name, kind, wave in spatial
        for bname, c, w in bumps
    ]
    return Battery(funcs, grid)


# --------------------------------------------------------------------------
# residual

@dataclass
class ResidualReport:
    labels: list[str]
    times: np.ndarray
    residuals: np.ndarray  # (functions, snapshots)

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2)))

    def write_csv(self, filename, header: Sequence[str] = ()) -> None:
        lines = [f"# {h}" for h in header] + ["phi_id,time,residual"]
        for i, label in enumerate(self.labels):
            for t, r in zip(self.times, self.residuals[i]):
                lines.append(f"{label},{float(t)!r},{float(r)!r}")
        Path(filename).write_text("\n".join(lines) + "\n")


def _below_sums(values, xi, table):
    """``dxi * sum_{xi_j < u} table[j]`` for every entry of ``values``."""
    cum = np.concatenate([[0.0], np.cumsum(table) * xi.width])
    return cum[np.searchsorted(xi.centers, values, side="left")]


def kinetic_residual(
    traj: Trajectory,
    coeffs: Coefficients,
    noise_model: NoiseModel,
    path: WienerPath | None,
    measures: Sequence[KineticMeasureEstimate],
    test_battery: Battery | None,
) -> ResidualReport:
    """Defect of the weak kinetic identity per test function and snapshot time.

    ``coeffs`` and ``noise_model`` must be the regularized objects the
    trajectory was computed with (``traj.coefficients`` / ``traj.noise``).
    Stochastic and Ito terms come from the trajectory, which must have been
    run with the same battery.
    """
    if test_battery is None or len(test_battery) == 0:
        raise ConfigurationError("test battery is empty")
    if not measures:
        raise ConfigurationError("no kinetic measures supplied")
    grid = traj.grid
    xi = measures[0].xi
    eps = traj.config.epsilon
    noisy = not noise_model.is_zero()
    if noisy and (traj.kinetic_terms is None or traj.kinetic_terms["stochastic"].shape[0] != len(test_battery)):
        raise ConfigurationError("stochastic terms missing: run the solver with this battery")

    values = traj.values().reshape(len(traj.times), -1)
    bins_all = xi.bin_index(values)
    dt = np.diff(traj.times)
    cell = grid.cell_measure
    pts = grid.points()
    centers = xi.centers
    speeds = coeffs.flux.speed(centers) if not coeffs.flux.is_zero() else np.zeros((grid.dim, xi.bins))
    base_op = DiffusionOperator(grid, coeffs.diffusion.base_field)
    lap_op = DiffusionOperator(grid, np.broadcast_to(np.eye(grid.dim), grid.shape + (grid.dim, grid.dim)))
    mass_total = sum(m.mass for m in measures)
    slab_bins = bins_all[:-1].T

    res = np.zeros((len(test_battery), len(traj.times)))
    for i, f in enumerate(test_battery.functions):
        psi = test_battery.psi[i]
        grad = f.spatial_gradient(pts)
        div_a = base_op.apply(psi[None])[0].reshape(-1)
        lap = lap_op.apply(psi[None])[0].reshape(-1)
        theta = f.profile(centers)

        pair_f = np.array([np.sum(psi.reshape(-1) * _below_sums(v, xi, theta)) * cell for v in values])
        transport = np.zeros(len(values))
        for d in range(grid.dim):
            if np.any(speeds[d]) and np.any(grad[d]):
                transport += np.array([np.sum(grad[d] * _below_sums(v, xi, speeds[d] * theta)) * cell for v in values])
        below = np.array([_below_sums(v, xi, theta) for v in values])
        diffusive = below @ div_a * cell
        viscous = eps * (below @ lap) * cell

        drift = (transport + diffusive + viscous)[:-1] * dt
        measure = np.sum(mass_total * psi.reshape(-1)[:, None] * f.profile_derivative(centers)[slab_bins], axis=0)

        r = pair_f - pair_f[0]
        r[1:] -= np.cumsum(drift)
        r[1:] += np.cumsum(measure)
        if noisy:
            r -= traj.kinetic_terms["stochastic"][i]
            r -= traj.kinetic_terms["ito"][i]
        res[i] = r
    return ResidualReport(test_battery.labels, traj.times.copy(), res)


def write_measure(filename, measure: KineticMeasureEstimate, header: Sequence[str] = ()) -> None:
    g, xi = measure.grid, measure.xi
    lines = [f"# {h}" for h in header]
    lines.append(f"# kind {measure.kind} dim {g.dim} n {g.n} slabs {measure.slabs}")
    lines.append(f"# xi_min {xi.xi_min!r} xi_max {xi.xi_max!r} bins {xi.bins}")
    lines.append("# times " + " ".join(repr(float(t)) for t in measure.times))
    lines.append("# x_index time_slab xi_index mass")
    cells, slabs = np.nonzero(measure.mass)
    for c, s in zip(cells, slabs):
        lines.append(f"{c} {s} {measure.bins[c, s]} {float(measure.mass[c, s])!r}")
    Path(filename).write_text("\n".join(lines) + "\n")
