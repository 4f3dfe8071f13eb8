"""Flux, diffusion matrix, truncation and their viscous regularisations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameterError, NotPSDError
from .torus import MollifierKernel, TorusGrid

SYMMETRY_TOL = 1e-12
PSD_CLAMP = 1e-10


# --------------------------------------------------------------------------
# scalar functions of the velocity variable (picklable for process pools)

class Quadratic:
    """``c * xi**2 / 2``."""

    def __init__(self, c=1.0):
        self.c = float(c)

    def __call__(self, xi):
        return 0.5 * self.c * np.asarray(xi, dtype=float) ** 2


class Linear:
    def __init__(self, c=1.0, offset=0.0):
        self.c = float(c)
        self.offset = float(offset)

    def __call__(self, xi):
        return self.c * np.asarray(xi, dtype=float) + self.offset


class Constant:
    def __init__(self, c=0.0):
        self.c = float(c)

    def __call__(self, xi):
        return np.full(np.shape(xi), self.c)


class Tabulated:
    """Piecewise-linear interpolant on a uniform grid, constant outside it."""

    def __init__(self, xi, values):
        self.xi = np.asarray(xi, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, xi):
        return np.interp(xi, self.xi, self.values)

    @property
    def spacing(self):
        return float(self.xi[1] - self.xi[0])


# --------------------------------------------------------------------------
# truncation

def _flat_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff(s):
    """Smooth cutoff: 1 on ``|s| <= 1/2``, 0 on ``|s| >= 1``."""
    a = np.abs(np.asarray(s, dtype=float))
    fa = _flat_exp(2.0 * (1.0 - a))
    fc = _flat_exp(2.0 * (a - 0.5))
    return fa / (fa + fc)


def cutoff_derivative(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    out = np.zeros_like(a)
    mid = (a > 0.5) & (a < 1.0)
    p, q = 2.0 * (1.0 - a[mid]), 2.0 * (a[mid] - 0.5)
    fp, fq = np.exp(-1.0 / p), np.exp(-1.0 / q)
    dfp, dfq = fp / p**2, fq / q**2
    out[mid] = -2.0 * (dfp * fq + fp * dfq) / (fp + fq) ** 2
    return np.sign(s) * out


@dataclass(frozen=True)
class Truncation:
    epsilon: float

    def __post_init__(self):
        _check_epsilon(self.epsilon)

    def __call__(self, xi):
        return cutoff(self.epsilon * np.asarray(xi, dtype=float))

    def derivative(self, xi):
        return self.epsilon * cutoff_derivative(self.epsilon * np.asarray(xi, dtype=float))


def _check_epsilon(eps):
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {eps}")


# --------------------------------------------------------------------------
# flux

@dataclass(frozen=True)
class FluxSpec:
    components: tuple[Callable, ...]
    derivatives: tuple[Callable, ...]
    growth_exponent: float = 2.0
    growth_constant: float = 1.0
    name: str = "custom"
    epsilon: float = 0.0

    def __post_init__(self):
        if len(self.components) != len(self.derivatives):
            raise InvalidParameterError("flux needs one derivative per component")
        if not self.growth_exponent > 1:
            raise InvalidParameterError("growth exponent must exceed 1")
        if not self.growth_constant > 0:
            raise InvalidParameterError("growth constant must be positive")

    @property
    def dim(self) -> int:
        return len(self.components)

    def flux(self, xi) -> np.ndarray:
        """Stacked components, shape ``(dim,) + shape(xi)``."""
        return np.stack([np.asarray(B(xi), dtype=float) for B in self.components])

    def speed(self, xi) -> np.ndarray:
        return np.stack([np.asarray(b(xi), dtype=float) for b in self.derivatives])

    def is_zero(self) -> bool:
        return all(isinstance(B, Constant) and B.c == 0.0 for B in self.components)

    def derivative_defect(self, xi, h=1e-4) -> float:
        """Largest ``|(B(xi+h)-B(xi-h))/2h - b(xi)|`` over the samples."""
        xi = np.asarray(xi, dtype=float)
        fd = (self.flux(xi + h) - self.flux(xi - h)) / (2 * h)
        return float(np.max(np.abs(fd - self.speed(xi))))

    def fitted_growth_constant(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        speed = np.sqrt((self.speed(xi) ** 2).sum(axis=0))
        return float(np.max(speed / (1.0 + np.abs(xi) ** (self.growth_exponent - 1))))


def regularize_flux(flux: FluxSpec, eps: float) -> FluxSpec:
    """Mollify each component in xi, then truncate to ``|xi| < 1/eps``.

    Convolutions are computed by quadrature on a grid of spacing ``eps/8``
    and returned as piecewise-linear tables; the derivative table is the
    product rule applied to the mollified flux and its mollified derivative.
    """
    _check_epsilon(eps)
    h = eps / 8.0
    half = int(math.ceil((1.0 / eps + 2 * eps) / h))
    xi = np.arange(-half, half + 1) * h
    offsets, weights = MollifierKernel("scalar", eps).line_weights(h)
    m = (len(offsets) - 1) // 2
    pad = np.arange(-half - m, half + m + 1) * h
    trunc = Truncation(eps)
    chi, dchi = trunc(xi), trunc.derivative(xi)

    comps, derivs = [], []
    for B, b in zip(flux.components, flux.derivatives):
        smooth_B = np.convolve(np.asarray(B(pad), dtype=float), weights, mode="valid") * h
        smooth_b = np.convolve(np.asarray(b(pad), dtype=float), weights, mode="valid") * h
        comps.append(Tabulated(xi, smooth_B * chi))
        derivs.append(Tabulated(xi, smooth_b * chi + smooth_B * dchi))
    return FluxSpec(
        tuple(comps),
        tuple(derivs),
        growth_exponent=flux.growth_exponent,
        growth_constant=flux.growth_constant,
        name=flux.name,
        epsilon=eps,
    )


def make_flux(name: str, dim: int, params: Sequence[float] = ()) -> FluxSpec:
    """Catalog fluxes: ``burgers`` (c xi^2/2 per axis), ``linear`` (c xi), ``zero``."""
    coeffs = list(params) or [1.0]
    if len(coeffs) == 1:
        coeffs = coeffs * dim
    if len(coeffs) != dim:
        raise InvalidParameterError(f"flux {name!r} needs 1 or {dim} coefficients")
    cmax = max(abs(c) for c in coeffs) * math.sqrt(dim) or 1.0
    if name == "burgers":
        return FluxSpec(
            tuple(Quadratic(c) for c in coeffs),
            tuple(Linear(c) for c in coeffs),
            growth_exponent=2.0,
            growth_constant=cmax,
            name=name,
        )
    if name == "linear":
        return FluxSpec(
            tuple(Linear(c) for c in coeffs),
            tuple(Constant(c) for c in coeffs),
            growth_exponent=2.0,
            growth_constant=cmax,
            name=name,
        )
    if name == "zero":
        return FluxSpec(
            tuple(Constant(0.0) for _ in range(dim)),
            tuple(Constant(0.0) for _ in range(dim)),
            name=name,
        )
    raise InvalidParameterError(f"unknown flux {name!r}")


# --------------------------------------------------------------------------
# diffusion

def sqrt_matrix(A) -> np.ndarray:
    """Symmetric PSD square root of a symmetric PSD matrix (or a stack of them).

    Eigenvalues in ``[-1e-10, 0)`` are treated as round-off and clamped.
    """
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > SYMMETRY_TOL * scale:
        raise NotPSDError("matrix is not symmetric")
    lam, vec = np.linalg.eigh(A)
    if np.min(lam, initial=0.0) < -PSD_CLAMP:
        raise NotPSDError(f"matrix has eigenvalue {np.min(lam):.3e} < -1e-10")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return np.einsum("...ik,...k,...jk->...ij", vec, root, vec)


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Cellwise diffusion matrices ``A(x) + epsilon I`` and their square roots.

    ``base_field`` keeps the unperturbed ``A(x)``; ``matrix_field`` is the
    perturbed matrix actually used for time stepping.
    """

    grid: TorusGrid
    base_field: np.ndarray
    epsilon: float = 0.0
    name: str = "custom"
    matrix_field: np.ndarray = field(init=False)
    sqrt_field: np.ndarray = field(init=False)

    def __post_init__(self):
        N = self.grid.dim
        base = np.asarray(self.base_field, dtype=float)
        if base.shape != self.grid.shape + (N, N):
            base = np.broadcast_to(base, self.grid.shape + (N, N)).copy()
        if self.epsilon < 0:
            raise InvalidParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        matrix = base + self.epsilon * np.eye(N)
        root = sqrt_matrix(matrix)
        for arr in (base, matrix, root):
            arr.setflags(write=False)
        object.__setattr__(self, "base_field", base)
        object.__setattr__(self, "matrix_field", matrix)
        object.__setattr__(self, "sqrt_field", root)

    def max_eigenvalue(self) -> float:
        return float(np.max(np.linalg.eigvalsh(self.matrix_field)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.matrix_field)))

    def sigma_lipschitz(self) -> float:
        """Largest ``|sigma(x) - sigma(y)|_F / |x - y|`` over nearest neighbours."""
        s = self.sqrt_field
        best = 0.0
        for ax in range(self.grid.dim):
            diff = s - np.roll(s, -1, axis=ax)
            best = max(best, float(np.max(np.sqrt((diff**2).sum(axis=(-1, -2))))))
        return best / self.grid.spacing

    def is_zero(self) -> bool:
        return not np.any(self.matrix_field)


def perturb_diffusion(spec: DiffusionSpec, eps: float) -> DiffusionSpec:
    """Add ``eps`` to every diagonal entry; square roots are recomputed."""
    if eps < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {eps}")
    return replace(spec, epsilon=spec.epsilon + eps)


def make_diffusion(name: str, grid: TorusGrid, params: Sequence[float] = ()) -> DiffusionSpec:
    """Catalog matrices: ``heat``, ``hyperbolic``, ``degenerate``, ``anisotropic``.

    ``degenerate`` is ``k * max(0, sin(2 pi x1))^2 * I``; it vanishes on half
    the torus. ``anisotropic`` is a constant rank-one matrix in 2-d.
    """
    kappa = float(params[0]) if params else 1.0
    N = grid.dim
    eye = np.eye(N)
    if name == "heat":
        base = kappa * eye
    elif name == "hyperbolic":
        base = np.zeros((N, N))
    elif name == "degenerate":
        x1 = grid.coords()[0]
        a = kappa * np.maximum(0.0, np.sin(2 * math.pi * x1)) ** 2
        base = a[..., None, None] * eye
    elif name == "anisotropic":
        base = kappa * (np.array([[1.0, 0.5], [0.5, 0.25]]) if N == 2 else eye)
    else:
        raise InvalidParameterError(f"unknown diffusion {name!r}")
    return DiffusionSpec(grid, np.broadcast_to(base, grid.shape + (N, N)), name=name)


# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Coefficients:
    flux: FluxSpec
    diffusion: DiffusionSpec

    @property
    def epsilon(self) -> float:
        return self.diffusion.epsilon


def regularize(coeffs: Coefficients, eps: float) -> Coefficients:
    """Viscous approximation at level ``eps``; ``eps == 0`` leaves coefficients untouched."""
    if eps == 0:
        return coeffs
    flux = coeffs.flux if coeffs.flux.is_zero() else regularize_flux(coeffs.flux, eps)
    return Coefficients(flux, perturb_diffusion(coeffs.diffusion, eps))
