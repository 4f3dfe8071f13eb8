"""Periodic grids on the unit torus, gridded fields and the operators on them.

Everything here is scheme-neutral: upwinding and the diffusion stencil
used for time stepping live in :mod:`kspde.solver`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import (
    ConfigurationError,
    GridMismatchError,
    InvalidExponentError,
    InvalidParameterError,
    NonFiniteFieldError,
)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform cell-centred grid on the unit torus ``[0, 1)^dim``."""

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidParameterError(f"dim must be 1 or 2, got {self.dim}")
        if self.points_per_axis < 4:
            raise InvalidParameterError(
                f"points_per_axis must be >= 4, got {self.points_per_axis}"
            )

    @property
    def n(self) -> int:
        return self.points_per_axis

    @property
    def spacing(self) -> float:
        return 1.0 / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_measure(self) -> float:
        return self.spacing**self.dim

    @property
    def diameter(self) -> float:
        # diameter of [0,1]^N
        return math.sqrt(self.dim)

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.spacing

    def coords(self) -> np.ndarray:
        """Cell centres, shape ``(dim, n, ..., n)``."""
        axes = [self.axis()] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Cell centres as a ``(n**dim, dim)`` array in row-major order."""
        return self.coords().reshape(self.dim, -1).T

    def shift_distances(self) -> np.ndarray:
        """Wrap-around distance |d| for every index shift d, shaped like the grid."""
        k = np.arange(self.n)
        per_axis = np.minimum(k, self.n - k) * self.spacing
        comps = np.meshgrid(*([per_axis] * self.dim), indexing="ij")
        return np.sqrt(sum(c**2 for c in comps))

    def field(self, values) -> "ScalarField":
        return ScalarField(self, np.asarray(values, dtype=float).reshape(self.shape))

    def sample(self, func: Callable[..., np.ndarray]) -> "ScalarField":
        """Evaluate ``func(x1, ..., xN)`` at the cell centres."""
        return self.field(np.broadcast_to(func(*self.coords()), self.shape))

    def constant(self, value: float) -> "ScalarField":
        return self.field(np.full(self.shape, float(value)))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridMismatchError(
                    f"field has {values.size} values, grid needs {self.grid.size}"
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("field contains NaN or inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, ScalarField):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __add__(self, other):
        return self.grid.field(self.values + _raw(other, self.grid))

    def __sub__(self, other):
        return self.grid.field(self.values - _raw(other, self.grid))

    def __mul__(self, scalar):
        return self.grid.field(self.values * _raw(scalar, self.grid))

    __rmul__ = __mul__

    def __neg__(self):
        return self.grid.field(-self.values)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_measure)

    def mean(self) -> float:
        # unit torus: integral and mean coincide
        return self.integral()

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def _raw(other, grid):
    if isinstance(other, ScalarField):
        _check_same_grid(grid, other.grid)
        return other.values
    return other


def _check_same_grid(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"grid mismatch: {first} vs {g}")


# --------------------------------------------------------------------------
# norms

def lp_norm(field: ScalarField, p: float) -> float:
    if not p >= 1:
        raise InvalidExponentError(f"L^p norm needs p >= 1, got {p}")
    absu = np.abs(field.values)
    if math.isinf(p):
        return float(absu.max())
    return float((field.grid.cell_measure * np.sum(absu**p)) ** (1.0 / p))


def shift_l1(field: ScalarField) -> np.ndarray:
    """``D[d] = sum_x |u(x) - u(x+d)| dx^N`` for every periodic index shift d."""
    u = field.values
    out = np.empty(field.grid.shape)
    for d in np.ndindex(*field.grid.shape):
        shifted = np.roll(u, shift=tuple(-s for s in d), axis=tuple(range(u.ndim)))
        out[d] = np.abs(u - shifted).sum()
    return out * field.grid.cell_measure


def _check_lambda(lam):
    if not 0.0 < lam < 1.0:
        raise InvalidExponentError(f"fractional exponent must lie in (0, 1), got {lam}")


def w_seminorm(field: ScalarField, lam: float, shifts: np.ndarray | None = None) -> float:
    """Discrete Gagliardo seminorm ``∬ |u(x)-u(y)| / |x-y|^(N+lam)`` on the torus.

    Self pairs are skipped; distances use the shortest wrap-around
    representative per axis. ``shifts`` may carry a precomputed
    :func:`shift_l1` table.
    """
    _check_lambda(lam)
    grid = field.grid
    table = shift_l1(field) if shifts is None else shifts
    dist = grid.shift_distances()
    weights = np.zeros_like(dist)
    nz = dist > 0
    weights[nz] = dist[nz] ** (-(grid.dim + lam))
    return float(np.sum(table * weights) * grid.cell_measure)


def default_tau_ladder(grid: TorusGrid, levels: int = 12) -> np.ndarray:
    return 2.0 * grid.diameter * 2.0 ** -np.arange(1, levels + 1)


def mollified_seminorm(
    field: ScalarField,
    lam: float,
    kernel_family: Callable[[float], "MollifierKernel"] | None = None,
    ladder: Sequence[float] | None = None,
    shifts: np.ndarray | None = None,
) -> float:
    """``sup_tau tau^-lam ∬ |u(x)-u(y)| rho_tau(x-y)`` over a finite tau ladder."""
    _check_lambda(lam)
    grid = field.grid
    if kernel_family is None:
        kernel_family = lambda w: MollifierKernel("spatial", w, grid.dim)  # noqa: E731
    taus = default_tau_ladder(grid) if ladder is None else np.asarray(ladder, dtype=float)
    if taus.size == 0:
        raise ConfigurationError("tau ladder is empty")
    table = shift_l1(field) if shifts is None else shifts
    best = 0.0
    for tau in taus:
        w = kernel_family(float(tau)).grid_weights(grid)
        best = max(best, float(tau) ** -lam * float(np.sum(table * w) * grid.cell_measure))
    return best


def h_negative_norm(field: ScalarField, s: float) -> float:
    """``(sum_k (1 + |2 pi k|^2)^-s |u_k|^2)^(1/2)`` with mean-normalised Fourier modes."""
    if not s > 0:
        raise InvalidExponentError(f"negative Sobolev order needs s > 0, got {s}")
    grid = field.grid
    coeffs = np.fft.fftn(field.values) / grid.size
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    ks = np.meshgrid(*([k] * grid.dim), indexing="ij")
    k2 = sum(kk**2 for kk in ks)
    weight = (1.0 + 4.0 * math.pi**2 * k2) ** (-s)
    return float(math.sqrt(np.sum(weight * np.abs(coeffs) ** 2)))


# --------------------------------------------------------------------------
# differential operators (second-order central differences)

def gradient(field: ScalarField, stencil: str = "central") -> tuple[ScalarField, ...]:
    u = field.values
    h = field.grid.spacing
    comps = []
    for ax in range(u.ndim):
        up = np.roll(u, -1, axis=ax)
        down = np.roll(u, 1, axis=ax)
        if stencil == "central":
            d = (up - down) / (2.0 * h)
        elif stencil == "forward":
            d = (up - u) / h
        elif stencil == "backward":
            d = (u - down) / h
        else:
            raise InvalidParameterError(f"unknown stencil {stencil!r}")
        comps.append(field.grid.field(d))
    return tuple(comps)


def divergence(vfield: Sequence[ScalarField]) -> ScalarField:
    if len(vfield) == 0:
        raise GridMismatchError("empty vector field")
    grid = vfield[0].grid
    _check_same_grid(*(c.grid for c in vfield))
    if len(vfield) != grid.dim:
        raise GridMismatchError(f"{len(vfield)} components on a {grid.dim}-d grid")
    h = grid.spacing
    total = np.zeros(grid.shape)
    for ax, comp in enumerate(vfield):
        v = comp.values
        total += (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * h)
    return grid.field(total)


# --------------------------------------------------------------------------
# mollifiers

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _bump_mass(dim: int) -> float:
    f = lambda r: math.exp(-1.0 / (1.0 - r * r)) if abs(r) < 1 else 0.0  # noqa: E731
    if dim == 1:
        return 2.0 * integrate.quad(f, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    return 2.0 * math.pi * integrate.quad(lambda r: f(r) * r, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


@lru_cache(maxsize=256)
def _periodic_weights(width: float, grid: TorusGrid) -> np.ndarray:
    base = np.arange(grid.n) * grid.spacing
    images = int(math.ceil(width)) + 1
    w = np.zeros(grid.shape)
    for img in np.ndindex(*([2 * images + 1] * grid.dim)):
        offs = [base + (m - images) for m in img]
        comps = np.meshgrid(*offs, indexing="ij")
        w += _bump(np.sqrt(sum(c**2 for c in comps)) / width)
    w = w / (w.sum() * grid.cell_measure)
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class MollifierKernel:
    """Compactly supported bump ``exp(-1/(1-|z/width|^2))`` of unit mass.

    ``kind`` is ``"spatial"`` (a kernel on the torus, dimension ``dim``) or
    ``"scalar"`` (a kernel on the real line). The support radius equals
    ``width``.
    """

    kind: str
    width: float
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("spatial", "scalar"):
            raise InvalidParameterError(f"unknown kernel kind {self.kind!r}")
        if not self.width > 0:
            raise InvalidParameterError(f"kernel width must be positive, got {self.width}")
        if self.kind == "scalar" and self.dim != 1:
            raise InvalidParameterError("scalar kernels are one-dimensional")

    def __call__(self, r) -> np.ndarray:
        """Continuous kernel value at distance ``r`` (normalised on R^dim)."""
        return _bump(np.asarray(r) / self.width) / (_bump_mass(self.dim) * self.width**self.dim)

    def grid_weights(self, grid: TorusGrid) -> np.ndarray:
        """Periodised kernel indexed by grid shift, discretely normalised."""
        if self.kind != "spatial" or self.dim != grid.dim:
            raise GridMismatchError("grid weights need a spatial kernel of the grid's dimension")
        return _periodic_weights(self.width, grid)

    def line_weights(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Offsets ``k*h`` inside the support and weights with ``sum(w)*h == 1``."""
        m = int(math.ceil(self.width / h))
        offsets = np.arange(-m, m + 1) * h
        w = _bump(offsets / self.width)
        return offsets, w / (w.sum() * h)

    def fourier(self, wavevectors: np.ndarray) -> np.ndarray:
        """``∫ rho(z) cos(2 pi j.z) dz`` for integer wavevectors ``j`` (shape ``(K, dim)``)."""
        wv = np.atleast_2d(np.asarray(wavevectors, dtype=float))
        norms = np.sqrt((wv**2).sum(axis=1))
        out = np.empty(len(norms))
        cache: dict[float, float] = {}
        for i, k in enumerate(norms):
            if k not in cache:
                cache[k] = self._radial_transform(k)
            out[i] = cache[k]
        return out

    def _radial_transform(self, k: float) -> float:
        if k == 0.0:
            return 1.0
        w = self.width
        if self.dim == 1:
            val = integrate.quad(lambda z: float(self(z)) * math.cos(2 * math.pi * k * z), 0.0, w, limit=200)[0]
            return 2.0 * val
        val = integrate.quad(
            lambda r: float(self(r)) * special.j0(2 * math.pi * k * r) * r, 0.0, w, limit=200
        )[0]
        return 2.0 * math.pi * val


def spatial_kernel_family(dim: int) -> Callable[[float], MollifierKernel]:
    def family(width: float) -> MollifierKernel:
        return MollifierKernel("spatial", width, dim)

    return family


def convolve(field: ScalarField, kernel: MollifierKernel) -> ScalarField:
    """Periodic convolution with the discretely normalised kernel."""
    grid = field.grid
    w = kernel.grid_weights(grid)
    spec = np.fft.fftn(field.values) * np.fft.fftn(w * grid.cell_measure)
    return grid.field(np.real(np.fft.ifftn(spec)))


# --------------------------------------------------------------------------
# snapshot files: header "N n time", then n^N values in row-major order

def write_field(path, field: ScalarField, time: float = 0.0) -> None:
    grid = field.grid
    lines = [f"{grid.dim} {grid.n} {float(time)!r}"]
    lines.extend(f"{v!r}" for v in field.flat().tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> tuple[ScalarField, float]:
    tokens = Path(path).read_text().split()
    if len(tokens) < 3:
        raise ConfigurationError(f"{path}: missing 'N n time' header")
    dim, n, time = int(tokens[0]), int(tokens[1]), float(tokens[2])
    grid = TorusGrid(dim, n)
    values = np.array([float(t) for t in tokens[3:]])
    if values.size != grid.size:
        raise GridMismatchError(f"{path}: expected {grid.size} values, found {values.size}")
    return grid.field(values), time
