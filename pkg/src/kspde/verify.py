"""Monte-Carlo harness: statistical verdicts for contraction, energy, regularity,
time continuity and convergence in the viscosity.

Expectations are plain path averages with standard errors. A one-sided
inequality with margin ``m`` (positive when it holds) and standard error
``se`` gets the verdict

* ``pass`` when ``m >= c * se``,
* ``fail`` when ``m < -c * se``,
* ``inconclusive`` otherwise,

where ``c`` is the ensemble's confidence multiplier.

Paths are split into contiguous chunks for the worker processes. Because the
solver is elementwise along its batch axis, every report is bit-identical
for any worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .coeffs import Coefficients, make_diffusion, make_flux
from .errors import ConfigurationError, InvalidExponentError, InvalidParameterError
from .noise import NoiseModel, derive_seed, increment_block, make_noise
from .solver import SolverConfig, Trajectory, check_ladder, integrate
from .torus import MollifierKernel, ScalarField, TorusGrid, convolve, mollified_seminorm, shift_l1

EXPERIMENTS = ("contraction", "energy", "regularity", "cauchy", "continuity")
PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass(frozen=True)
class EnsembleSpec:
    path_count: int
    root_seed: int = 0
    experiment: str = "contraction"
    confidence_multiplier: float = 3.0
    workers: int = 1

    def __post_init__(self):
        # a single path is allowed for deterministic setups; its standard error is zero
        if self.path_count < 1:
            raise ConfigurationError("path_count must be at least 1")
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if not self.confidence_multiplier > 0:
            raise ConfigurationError("confidence multiplier must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    def seeds(self) -> list[int]:
        return [derive_seed(self.root_seed, i) for i in range(self.path_count)]


@dataclass(frozen=True, eq=False)
class Setup:
    """Grid, base (unregularized) coefficients, noise and solver settings."""

    grid: TorusGrid
    coefficients: Coefficients
    noise: NoiseModel
    config: SolverConfig
    scheme_constant: float | None = None

    def metadata(self) -> dict:
        c = self.config
        return {
            "dim": self.grid.dim,
            "n": self.grid.n,
            "flux": self.coefficients.flux.name,
            "diffusion": self.coefficients.diffusion.name,
            "noise": self.noise.name,
            "alpha": self.noise.alpha,
            "max_modes": self.noise.max_modes,
            "epsilon": c.epsilon,
            "dt": c.dt,
            "t_end": c.t_end,
            "scheme": c.scheme,
            "flux_scheme": c.flux_scheme,
            "save_every": c.save_every,
        }


def catalog_setup(
    grid: TorusGrid,
    config: SolverConfig,
    flux: str = "burgers",
    diffusion: str = "hyperbolic",
    noise: str = "bounded",
    flux_params=(),
    diffusion_params=(),
    noise_params=(),
    alpha: float = 1.0,
    max_modes: int = 64,
) -> Setup:
    coeffs = Coefficients(make_flux(flux, grid.dim, flux_params), make_diffusion(diffusion, grid, diffusion_params))
    model = make_noise(noise, grid.dim, noise_params, max_modes=max_modes, alpha=alpha)
    return Setup(grid, coeffs, model, config)


# --------------------------------------------------------------------------
# reports

def mean_and_stderr(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error along axis 0; the error is 0 for one sample."""
    x = np.asarray(samples, dtype=float)
    mean = x.mean(axis=0)
    if len(x) < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(len(x))


def one_sided_verdict(margin, stderr, multiplier: float, atol: float = 1e-12) -> str:
    """Three-way verdict; ``atol`` absorbs round-off in margins and errors that are exactly zero in theory."""
    margin = np.atleast_1d(np.asarray(margin, dtype=float))
    band = multiplier * np.atleast_1d(np.asarray(stderr, dtype=float))
    if np.any(margin < -band - atol):
        return FAIL
    if np.all(margin >= band - atol):
        return PASS
    return INCONCLUSIVE


@dataclass
class RunReport:
    """Outcome of one experiment.

    ``rows`` hold ``(quantity, epsilon, time, mean, stderr)`` tuples.
    ``per_path`` maps a scalar name to one value per path.
    """

    experiment: str
    verdict: str
    rows: list[tuple[str, float, float, float, float]] = field(default_factory=list)
    per_path: dict[str, np.ndarray] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def curve(self, quantity: str, epsilon: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        sel = [r for r in self.rows if r[0] == quantity and (epsilon is None or r[1] == epsilon)]
        t = np.array([r[2] for r in sel])
        return t, np.array([r[3] for r in sel]), np.array([r[4] for r in sel])

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment}", f"verdict: {self.verdict}"]
        lines += [f"{k}: {_fmt(v)}" for k, v in self.summary.items()]
        lines.append("metadata:")
        lines += [f"  {k}: {_fmt(v)}" for k, v in self.metadata.items()]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["quantity,epsilon,time,mean,stderr"]
        lines += [f"{q},{e!r},{t!r},{m!r},{s!r}" for q, e, t, m, s in self.rows]
        return "\n".join(lines) + "\n"

    def paths_csv(self) -> str:
        names = sorted(self.per_path)
        lines = [",".join(["path", "seed"] + names)]
        for i, seed in enumerate(self.seeds):
            lines.append(",".join([str(i), str(seed)] + [repr(float(self.per_path[n][i])) for n in names]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "verdict": self.verdict,
            "summary": _plain(self.summary),
            "metadata": _plain(self.metadata),
            "seeds": list(self.seeds),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, directory, header: Sequence[str] = ()) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        head = "".join(f"# {h}\n" for h in header)
        files = {
            f"{self.experiment}_report.txt": head + self.to_text(),
            f"{self.experiment}_report.csv": head + self.to_csv(),
            f"{self.experiment}_paths.csv": head + self.paths_csv(),
            f"{self.experiment}_report.json": self.to_json(),
        }
        out = []
        for name, text in files.items():
            (directory / name).write_text(text)
            out.append(directory / name)
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# --------------------------------------------------------------------------
# ensemble simulation

def _path_increments(seeds, steps, dt, K):
    return np.stack([increment_block(s, K, dt, 0, steps) for s in seeds])


def _simulate_chunk(args):
    u0, grid, coeffs, noise, config, seeds, K = args
    inc = None if noise.is_zero() else _path_increments(seeds, config.steps, config.dt, K)
    trajs = integrate(u0, grid, coeffs, noise, inc, config, seeds)
    for t in trajs:
        t.coefficients = None
        t.noise = None
    return trajs


def simulate(
    initial: Sequence[np.ndarray],
    setup: Setup,
    config: SolverConfig,
    ensemble: EnsembleSpec,
) -> list[list[Trajectory]]:
    """Run every initial state in ``initial`` on every path; result[branch][path]."""
    seeds = ensemble.seeds()
    K = setup.noise.max_modes
    branches = len(initial)
    per_path = [np.asarray(u, dtype=float).reshape(setup.grid.shape) for u in initial]
    rows = [(b, i) for i in range(len(seeds)) for b in range(branches)]
    chunks = np.array_split(np.arange(len(seeds)), min(ensemble.workers, len(seeds)))
    jobs = []
    for chunk in chunks:
        idx = [i for i in chunk.tolist()]
        u0 = np.stack([per_path[b] for i in idx for b in range(branches)])
        chunk_seeds = [seeds[i] for i in idx for _ in range(branches)]
        jobs.append((u0, setup.grid, setup.coefficients, setup.noise, config, chunk_seeds, K))
    if ensemble.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=ensemble.workers) as pool:
            results = list(pool.map(_simulate_chunk, jobs))
    else:
        results = [_simulate_chunk(j) for j in jobs]
    flat = [t for r in results for t in r]
    out = [[None] * len(seeds) for _ in range(branches)]
    for (b, i), traj in zip(rows, flat):
        out[b][i] = traj
    return out


def _l1_series(traj_a: Trajectory, traj_b: Trajectory) -> np.ndarray:
    cell = traj_a.grid.cell_measure
    axes = tuple(range(1, traj_a.grid.dim + 1))
    return np.sum(np.abs(traj_a.values() - traj_b.values()), axis=axes) * cell


def _lp_series(traj: Trajectory, p: int) -> np.ndarray:
    axes = tuple(range(1, traj.grid.dim + 1))
    return np.sum(np.abs(traj.values()) ** p, axis=axes) * traj.grid.cell_measure


# --------------------------------------------------------------------------
# contraction

def calibrate_scheme_constant(grid: TorusGrid, config: SolverConfig) -> float:
    """Largest L1 distance increase per ``(dx + dt)`` on the deterministic heat case.

    The distance between ``sin(2 pi x)`` and ``0`` must not grow; any growth
    measured here is charged to the scheme. The heat coefficient is lowered
    when needed to keep the explicit step stable at the given ``dt``.
    """
    kappa = 1.0
    if config.scheme == "explicit":
        kappa = min(1.0, 0.5 * config.cfl_safety * grid.spacing**2 / (2 * grid.dim * config.dt))
    coeffs = Coefficients(make_flux("zero", grid.dim), make_diffusion("heat", grid, [kappa]))
    cfg = replace(config, epsilon=0.0, scheme=config.scheme)
    x = grid.coords()[0]
    u0 = np.sin(2 * math.pi * x)
    a, b = integrate(np.stack([u0, np.zeros_like(u0)]), grid, coeffs, make_noise("none", grid.dim), None, cfg)
    d = _l1_series(a, b)
    growth = float(np.max(d - d[0]))
    return max(growth, 0.0) / (grid.spacing + config.dt)


def contraction_test(u0_a: ScalarField, u0_b: ScalarField, setup: Setup, ensemble: EnsembleSpec) -> RunReport:
    if u0_a.grid != setup.grid or u0_b.grid != setup.grid:
        raise ConfigurationError("initial data must live on the setup grid")
    config = setup.config
    if config.epsilon <= 0 and not setup.noise.is_zero():
        raise ConfigurationError("contraction test needs epsilon > 0 for noisy setups")
    Cs = setup.scheme_constant
    if Cs is None:
        Cs = calibrate_scheme_constant(setup.grid, config)
    tol = Cs * (setup.grid.spacing + config.dt)
    a, b = simulate([u0_a.values, u0_b.values], setup, config, ensemble)
    dist = np.stack([_l1_series(x, y) for x, y in zip(a, b)])
    mean, se = mean_and_stderr(dist)
    initial = float(mean[0])
    margin = initial + tol - mean
    verdict = one_sided_verdict(margin, se, ensemble.confidence_multiplier)
    times = a[0].times
    rows = [("l1_distance", config.epsilon, float(t), float(m), float(s)) for t, m, s in zip(times, mean, se)]
    return RunReport(
        "contraction",
        verdict,
        rows,
        per_path={"max_distance": dist.max(axis=1), "final_distance": dist[:, -1]},
        seeds=ensemble.seeds(),
        summary={
            "initial_distance": initial,
            "scheme_constant": Cs,
            "scheme_tolerance": tol,
            "max_mean_distance": float(mean.max()),
            "min_margin_over_stderr": _min_ratio(margin, se),
        },
        metadata=setup.metadata() | {"paths": ensemble.path_count, "root_seed": ensemble.root_seed},
    )


def _min_ratio(margin, se):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(se > 0, margin / se, np.where(margin >= 0, np.inf, -np.inf))
    return float(np.min(r))


# --------------------------------------------------------------------------
# uniformity across the epsilon ladder

def ladder_slope(values: np.ndarray, abscissa: Sequence[float]) -> np.ndarray:
    """Per-path least-squares slope of ``values`` (paths x ladder) against ``abscissa``."""
    x = np.asarray(abscissa, dtype=float)
    xc = x - x.mean()
    v = np.asarray(values, dtype=float)
    return (v - v.mean(axis=1, keepdims=True)) @ xc / float(xc @ xc)


def _uniformity(per_eps: np.ndarray, epsilons, multiplier: float) -> tuple[str, dict, np.ndarray]:
    """Slope test on paired per-path values across the ladder.

    The verdict regresses against epsilon and passes unless the slope is
    significantly positive. Growth as epsilon decreases shows up as a
    negative slope there, so the slope against ``log2(1/eps)`` (positive
    means growth as epsilon decreases) is reported alongside.
    """
    eps = np.asarray(epsilons, dtype=float)
    slopes = ladder_slope(per_eps, eps)
    mean, se = mean_and_stderr(slopes)
    verdict = PASS if float(mean) <= multiplier * float(se) + 1e-12 else FAIL
    rev_mean, rev_se = mean_and_stderr(ladder_slope(per_eps, np.log2(1.0 / eps)))
    info = {
        "slope": float(mean),
        "slope_stderr": float(se),
        "slope_log_inverse_eps": float(rev_mean),
        "slope_log_inverse_eps_stderr": float(rev_se),
    }
    return verdict, info, slopes


def _ladder(setup: Setup, epsilons):
    if epsilons is None:
        return [setup.config.epsilon]
    eps = [float(e) for e in epsilons]
    if len(eps) > 1:
        check_ladder(eps)
    return eps


def energy_test(
    u0: ScalarField, setup: Setup, p: int, ensemble: EnsembleSpec, epsilons: Sequence[float] | None = None
) -> RunReport:
    """Sup-in-time ``E ||u(t)||_p^p`` across the epsilon ladder; pass iff no significant growth."""
    if p not in (2, 4, 6):
        raise InvalidExponentError(f"energy test supports p in {{2, 4, 6}}, got {p}")
    eps_list = _ladder(setup, epsilons)
    init = float(np.sum(np.abs(u0.values) ** p) * setup.grid.cell_measure)
    rows, sup_paths, means = [], [], []
    for eps in eps_list:
        (trajs,) = simulate([u0.values], setup, replace(setup.config, epsilon=eps), ensemble)
        series = np.stack([_lp_series(t, p) for t in trajs])
        mean, se = mean_and_stderr(series)
        rows += [(f"energy_p{p}", eps, float(t), float(m), float(s)) for t, m, s in zip(trajs[0].times, mean, se)]
        sup_paths.append(series.max(axis=1))
        means.append(float(mean.max()))
    sup = np.stack(sup_paths, axis=1)
    summary = {
        "p": p,
        "epsilons": eps_list,
        "max_mean_energy": means,
        "sup_mean_energy": [float(v) for v in sup.mean(axis=0)],
        "fitted_constant": max(means) / (1.0 + init),
        "initial_energy": init,
    }
    if p == 2:
        # Ito: d E||u||^2 <= E int G^2 <= L (1 + E||u||^2); flux and diffusion only dissipate
        L = setup.noise.growth_constant if not setup.noise.is_zero() else 0.0
        summary["gronwall_bound"] = (init + 1.0) * math.exp(L * setup.config.t_end) - 1.0
        summary["within_gronwall_bound"] = bool(max(means) <= summary["gronwall_bound"])
    per_path = {f"sup_energy_eps{i}": sup[:, i] for i in range(len(eps_list))}
    if len(eps_list) > 1:
        verdict, info, slopes = _uniformity(sup, eps_list, ensemble.confidence_multiplier)
        summary |= info
        per_path["slope"] = slopes
    else:
        verdict = PASS if np.all(np.isfinite(sup)) else FAIL
    return RunReport(
        "energy", verdict, rows, per_path, ensemble.seeds(), summary,
        setup.metadata() | {"paths": ensemble.path_count, "root_seed": ensemble.root_seed},
    )


def regularity_exponent(alpha: float) -> float:
    """``min(alpha / (alpha + 1), 1/2)``."""
    if not alpha > 0:
        raise InvalidParameterError(f"noise exponent alpha must be positive, got {alpha}")
    return min(alpha / (alpha + 1.0), 0.5)


def regularity_test(
    u0: ScalarField, setup: Setup, ensemble: EnsembleSpec, epsilons: Sequence[float] | None = None
) -> RunReport:
    """Mollified fractional seminorm of order ``sigma`` along trajectories and across the ladder."""
    sigma = regularity_exponent(setup.noise.alpha)
    grid = setup.grid
    eps_list = _ladder(setup, epsilons)
    p0 = mollified_seminorm(u0, sigma)
    rows, sup_paths, means = [], [], []
    for eps in eps_list:
        (trajs,) = simulate([u0.values], setup, replace(setup.config, epsilon=eps), ensemble)
        series = np.stack(
            [[mollified_seminorm(f, sigma, shifts=shift_l1(f)) for f in t.fields] for t in trajs]
        )
        mean, se = mean_and_stderr(series)
        rows += [("seminorm", eps, float(t), float(m), float(s)) for t, m, s in zip(trajs[0].times, mean, se)]
        sup_paths.append(series.max(axis=1))
        means.append(float(mean.max()))
    sup = np.stack(sup_paths, axis=1)
    summary = {
        "sigma": sigma,
        "alpha": setup.noise.alpha,
        "epsilons": eps_list,
        "initial_seminorm": p0,
        "max_mean_seminorm": means,
        "fitted_constant": max(means) / (1.0 + p0),
    }
    per_path = {f"sup_seminorm_eps{i}": sup[:, i] for i in range(len(eps_list))}
    if len(eps_list) > 1:
        verdict, info, slopes = _uniformity(sup, eps_list, ensemble.confidence_multiplier)
        summary |= info
        per_path["slope"] = slopes
    else:
        verdict = PASS if np.all(np.isfinite(sup)) else FAIL
    return RunReport(
        "regularity", verdict, rows, per_path, ensemble.seeds(), summary,
        setup.metadata() | {"paths": ensemble.path_count, "root_seed": ensemble.root_seed},
    )


# --------------------------------------------------------------------------
# time continuity

MIN_SNAPSHOTS_PER_UNIT_TIME = 32


def holder_quotient(traj: Trajectory, s: float, lam: float) -> float:
    """``max_{i<j} ||u(t_j) - u(t_i)||_{H^-s} / |t_j - t_i|^lam`` over snapshot pairs."""
    grid = traj.grid
    vals = traj.values()
    coeffs = np.fft.fftn(vals, axes=tuple(range(1, grid.dim + 1))) / grid.size
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    k2 = sum(kk**2 for kk in np.meshgrid(*([k] * grid.dim), indexing="ij"))
    weight = np.sqrt((1.0 + 4.0 * math.pi**2 * k2) ** (-s))
    flat = (coeffs * weight).reshape(len(vals), -1)
    # squared distances between all snapshot pairs through the Gram matrix
    norms = np.sum(np.abs(flat) ** 2, axis=1)
    gram = np.real(flat @ flat.conj().T)
    d2 = np.maximum(norms[:, None] + norms[None, :] - 2 * gram, 0.0)
    t = traj.times
    dt = np.abs(t[:, None] - t[None, :])
    iu = np.triu_indices(len(t), 1)
    return float(np.max(np.sqrt(d2[iu]) / dt[iu] ** lam)) if len(iu[0]) else 0.0


def continuity_test(
    trajectories, s: float = 2.0, lam: float = 0.25, ensemble: EnsembleSpec | None = None
) -> RunReport:
    """Hölder quotients in ``H^-s``; ``trajectories`` is a list or a ``{epsilon: list}`` ladder."""
    if not 0.0 < lam < 0.5:
        raise InvalidExponentError(f"Hölder exponent must lie in (0, 1/2), got {lam}")
    ladder = trajectories if isinstance(trajectories, dict) else {None: list(trajectories)}
    eps_list = list(ladder)
    multiplier = ensemble.confidence_multiplier if ensemble else 3.0
    per_eps, rows = [], []
    for eps in eps_list:
        trajs = ladder[eps]
        for t in trajs:
            span = t.times[-1] - t.times[0]
            if (len(t.times) - 1) / span < MIN_SNAPSHOTS_PER_UNIT_TIME:
                raise ConfigurationError(
                    f"need at least {MIN_SNAPSHOTS_PER_UNIT_TIME} snapshots per unit time, "
                    f"got {(len(t.times) - 1) / span:.3g}"
                )
        q = np.array([holder_quotient(t, s, lam) for t in trajs])
        mean, se = mean_and_stderr(q)
        rows.append(("holder_quotient", float("nan") if eps is None else eps, 0.0, float(mean), float(se)))
        per_eps.append(q)
    summary = {"s": s, "lambda": lam, "mean_quotient": [r[3] for r in rows]}
    per_path = {f"quotient_{i}": q for i, q in enumerate(per_eps)}
    if len(eps_list) > 1 and None not in eps_list:
        verdict, info, _ = _uniformity(np.stack(per_eps, axis=1), eps_list, multiplier)
        summary |= info
    else:
        verdict = PASS if all(np.all(np.isfinite(q)) for q in per_eps) else FAIL
    seeds = [t.path_seed for t in ladder[eps_list[0]]]
    meta = {"confidence": multiplier, "paths": len(seeds)}
    return RunReport("continuity", verdict, rows, per_path, seeds, summary, meta)


# --------------------------------------------------------------------------
# convergence in the viscosity

def mollify_initial(u0: ScalarField, width: float) -> ScalarField:
    """Convolution with the unit-mass spatial bump of radius ``width``."""
    return convolve(u0, MollifierKernel("spatial", width, u0.grid.dim))


def cauchy_test(
    u0: ScalarField,
    setup: Setup,
    ensemble: EnsembleSpec,
    epsilons: Sequence[float],
    widths: Sequence[float] | None = None,
) -> RunReport:
    """Consecutive ``L1(0,T; L1)`` distances along the ladder on shared paths.

    Each epsilon starts from ``u0`` mollified at the matching width (the
    epsilon itself by default). Pass iff every consecutive mean distance is
    significantly smaller than the one before.
    """
    eps_list = check_ladder(epsilons)
    widths = list(eps_list if widths is None else widths)
    if len(widths) != len(eps_list):
        raise ConfigurationError("one mollification width per epsilon required")
    trajs = []
    for eps, w in zip(eps_list, widths):
        start = mollify_initial(u0, w) if w > 0 else u0
        (t,) = simulate([start.values], setup, replace(setup.config, epsilon=eps), ensemble)
        trajs.append(t)
    dist = np.stack(
        [[float(np.trapezoid(_l1_series(a, b), a.times)) for a, b in zip(ta, tb)] for ta, tb in zip(trajs, trajs[1:])],
        axis=1,
    )
    mean, se = mean_and_stderr(dist)
    rows = [("l1_time_distance", eps_list[i + 1], 0.0, float(mean[i]), float(se[i])) for i in range(len(mean))]
    summary = {
        "epsilons": eps_list,
        "widths": widths,
        "mean_distances": [float(m) for m in mean],
        "strictly_decreasing": bool(np.all(np.diff(mean) < 0)),
    }
    if dist.shape[1] > 1:
        drops = dist[:, :-1] - dist[:, 1:]
        dmean, dse = mean_and_stderr(drops)
        verdict = one_sided_verdict(dmean, dse, ensemble.confidence_multiplier)
        summary["mean_drops"] = [float(v) for v in dmean]
    else:
        verdict = PASS if np.isfinite(mean[0]) else FAIL
    per_path = {f"distance_{i}": dist[:, i] for i in range(dist.shape[1])}
    return RunReport(
        "cauchy", verdict, rows, per_path, ensemble.seeds(), summary,
        setup.metadata() | {"paths": ensemble.path_count, "root_seed": ensemble.root_seed},
    )
