"""Command line entry point: flat ``key = value`` configs, experiment dispatch, artifact files.

Usage::

    kspde <command> [experiment] [--config FILE] [--out DIR] [--seed U64] [--paths M]

Exit status is 0 on pass/complete (and inconclusive verdicts), 1 on a fail
verdict and 2 on any error. An ``INCOMPLETE`` marker stays in the output
directory when a run stops early.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .coeffs import Coefficients, make_diffusion, make_flux
from .errors import ConfigurationError, KspdeError
from .kinetic import XiGrid, accumulate_measures, default_battery, kinetic_residual, tail_mass, write_measure
from .noise import derive_seed, make_noise, root_seed_from_env, sample_path
from .solver import (
    SolverConfig,
    comparison_run,
    run,
    viscosity_sweep,
    write_diagnostics,
    write_snapshots,
)
from .torus import ScalarField, TorusGrid
from .verify import (
    EXPERIMENTS,
    FAIL,
    EnsembleSpec,
    Setup,
    cauchy_test,
    continuity_test,
    contraction_test,
    energy_test,
    regularity_test,
    simulate,
)

COMMANDS = ("solve", "sweep", "compare", "measure", "verify")
FLUXES = ("burgers", "linear", "zero")
DIFFUSIONS = ("heat", "hyperbolic", "degenerate", "anisotropic")
NOISES = ("additive", "linear", "bounded", "none")
INITIALS = ("sine", "cosine", "half", "constant", "zero")
MARKER = "INCOMPLETE"


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class Key:
    kind: str  # int | float | str | floats | range
    default: object
    check: object = None  # callable returning an error message or None
    choices: tuple = ()


def _between(lo, hi, lo_open=False, hi_open=True, what=""):
    def check(v):
        ok = (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
        if not ok:
            left = "(" if lo_open else "["
            right = ")" if hi_open else "]"
            return f"{what} must lie in {left}{lo}, {hi}{right}"
        return None

    return check


def _positive(what):
    return lambda v: None if v > 0 else f"{what} must be positive"


def _at_least(lo, what):
    return lambda v: None if v >= lo else f"{what} must be at least {lo}"


def _ladder_check(v):
    if any(not 0 < e < 1 for e in v):
        return "epsilons must lie in (0, 1)"
    return None


KEYS: dict[str, Key] = {
    "dim": Key("int", 1, lambda v: None if v in (1, 2) else "dim must be 1 or 2"),
    "n": Key("int", 128, _at_least(4, "n")),
    "flux": Key("str", "burgers", choices=FLUXES),
    "flux_params": Key("floats", ()),
    "diffusion": Key("str", "hyperbolic", choices=DIFFUSIONS),
    "diffusion_params": Key("floats", ()),
    "noise": Key("str", "bounded", choices=NOISES),
    "noise_params": Key("floats", ()),
    "noise_modes": Key("int", 64, _at_least(1, "noise_modes")),
    "alpha": Key("float", 1.0, _positive("alpha")),
    "initial": Key("str", "sine", choices=INITIALS),
    "initial_params": Key("floats", ()),
    "initial_b": Key("str", "zero", choices=INITIALS),
    "initial_b_params": Key("floats", ()),
    "epsilon": Key("float", 0.05, _between(0.0, 1.0, what="epsilon")),
    "epsilons": Key("floats", (0.1, 0.05, 0.025), _ladder_check),
    "dt": Key("float", 2.5e-4, _positive("dt")),
    "t_end": Key("float", 0.2, _positive("t_end")),
    "scheme": Key("str", "explicit", choices=("explicit", "semi_implicit")),
    "flux_scheme": Key("str", "upwind", choices=("upwind", "central")),
    "cfl_safety": Key("float", 0.9, _between(0.0, 1.0, lo_open=True, hi_open=False, what="cfl_safety")),
    "save_every": Key("int", 40, _at_least(1, "save_every")),
    "paths": Key("int", 16, _at_least(1, "paths")),
    "seed": Key("int", 0, lambda v: None if 0 <= v < 2**64 else "seed must be an unsigned 64-bit integer"),
    "confidence": Key("float", 3.0, _positive("confidence")),
    "workers": Key("int", 1, _at_least(1, "workers")),
    "xi_bins": Key("int", 128, _at_least(8, "xi_bins")),
    "xi_range": Key("range", "auto"),
    "experiment": Key("str", "contraction", choices=EXPERIMENTS),
    "p": Key("int", 2, lambda v: None if v in (2, 4, 6) else "p must be 2, 4 or 6"),
    "holder_lambda": Key("float", 0.25, _between(0.0, 0.5, lo_open=True, what="holder_lambda")),
    "hneg_s": Key("float", 2.0, _positive("hneg_s")),
    "mollify_widths": Key("floats", ()),
    "out": Key("str", "kspde_out"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    values: tuple  # (key, value) pairs in KEYS order
    explicit: frozenset = field(default=frozenset(), compare=False)

    def __getattr__(self, name):
        if name in KEYS:
            return dict(self.values)[name]
        raise AttributeError(name)

    def as_dict(self) -> dict:
        return dict(self.values)

    def with_values(self, **updates) -> "ExperimentConfig":
        d = self.as_dict()
        for k, v in updates.items():
            if k not in KEYS:
                raise ConfigurationError(f"unknown key {k!r}")
            d[k] = _convert(k, v, None) if isinstance(v, str) else v
            _validate(k, d[k], None)
        return ExperimentConfig(self.command, tuple((k, d[k]) for k in KEYS), self.explicit | set(updates))

    @property
    def defaulted(self) -> list[str]:
        return [k for k in KEYS if k not in self.explicit]


def _where(line):
    return f"line {line}: " if line is not None else ""


def _convert(key, raw, line):
    spec = KEYS[key]
    text = raw.strip()
    try:
        if spec.kind == "int":
            return int(text)
        if spec.kind == "float":
            value = float(text)
            if not math.isfinite(value):
                raise ValueError
            return value
        if spec.kind == "floats":
            return tuple(float(t) for t in text.replace(",", " ").split()) if text else ()
        if spec.kind == "range":
            if text == "auto":
                return "auto"
            lo, hi = (float(t) for t in text.replace(",", " ").split())
            if not hi > lo:
                raise ConfigurationError(f"{_where(line)}xi_range upper bound must exceed the lower")
            return (lo, hi)
        if spec.choices and text not in spec.choices:
            raise ConfigurationError(f"{_where(line)}{key} must be one of {', '.join(spec.choices)}, got {text!r}")
        return text
    except ConfigurationError:
        raise
    except ValueError:
        expected = {"int": "an integer", "float": "a number", "floats": "a list of numbers", "range": "'auto' or two numbers"}
        raise ConfigurationError(f"{_where(line)}{key} expects {expected[spec.kind]}, got {text!r}") from None


def _validate(key, value, line):
    check = KEYS[key].check
    msg = check(value) if check else None
    if msg:
        raise ConfigurationError(f"{_where(line)}{key} = {_emit_value(value)} rejected: {msg}")


def parse_config(text: str, command: str = "solve") -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Defaults fill missing keys."""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    values = {k: spec.default for k, spec in KEYS.items()}
    explicit = set()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"line {number}: unknown key {key!r}")
        if key in explicit:
            raise ConfigurationError(f"line {number}: key {key!r} given twice")
        values[key] = _convert(key, value, number)
        _validate(key, values[key], number)
        explicit.add(key)
    return ExperimentConfig(command, tuple((k, values[k]) for k in KEYS), frozenset(explicit))


def _emit_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(config: ExperimentConfig) -> str:
    """Every key, defaults included, in a fixed order."""
    return "".join(f"{k} = {_emit_value(v)}\n" for k, v in config.values)


def config_hash(config: ExperimentConfig) -> str:
    body = f"command = {config.command}\n" + "".join(
        f"{k} = {_emit_value(v)}\n" for k, v in config.values if k not in ("out", "workers")
    )
    return hashlib.sha256(body.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# building blocks from a config

def initial_field(grid: TorusGrid, name: str, params: Sequence[float]) -> ScalarField:
    amp = float(params[0]) if params else 1.0
    x = grid.coords()[0]
    if name == "sine":
        return grid.field(amp * np.sin(2 * math.pi * x))
    if name == "cosine":
        return grid.field(amp * np.cos(2 * math.pi * x))
    if name == "half":
        return grid.field(amp * (x < 0.5).astype(float))
    if name == "constant":
        return grid.constant(amp)
    return grid.constant(0.0)


def build_setup(cfg: ExperimentConfig, epsilon: float | None = None) -> Setup:
    grid = TorusGrid(cfg.dim, cfg.n)
    coeffs = Coefficients(make_flux(cfg.flux, cfg.dim, cfg.flux_params), make_diffusion(cfg.diffusion, grid, cfg.diffusion_params))
    noise = make_noise(cfg.noise, cfg.dim, cfg.noise_params, max_modes=cfg.noise_modes, alpha=cfg.alpha)
    solver = SolverConfig(
        epsilon=cfg.epsilon if epsilon is None else epsilon,
        dt=cfg.dt,
        t_end=cfg.t_end,
        scheme=cfg.scheme,
        flux_scheme=cfg.flux_scheme,
        save_every=cfg.save_every,
        cfl_safety=cfg.cfl_safety,
    )
    return Setup(grid, coeffs, noise, solver)


def _path(setup: Setup, root: int):
    if setup.noise.is_zero():
        return None
    return sample_path(derive_seed(root, 0), setup.config.steps, setup.config.dt, setup.noise.max_modes)


def _write_curve(path: Path, t, values, header):
    lines = [f"# {h}" for h in header] + [f"{float(a)!r} {float(b)!r}" for a, b in zip(t, values)]
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# commands

def _solve(cfg, setup, root, out, header):
    grid = setup.grid
    u0 = initial_field(grid, cfg.initial, cfg.initial_params)
    traj = run(u0, setup.coefficients, setup.noise, _path(setup, root), setup.config)
    write_snapshots(traj, out / "snapshots", header=header)
    write_diagnostics(traj, out / "diagnostics.csv", header)
    d = traj.diagnostics
    for name in ("l2", "max_abs_u", "mean"):
        _write_curve(out / f"{name}.dat", d["time"], d[name], header)
    return 0


def _sweep(cfg, setup, root, out, header):
    grid = setup.grid
    u0 = initial_field(grid, cfg.initial, cfg.initial_params)
    report = viscosity_sweep(u0, setup.coefficients, setup.noise, _path(setup, root), cfg.epsilons, setup.config)
    lines = [f"# {h}" for h in header] + ["epsilon_a,epsilon_b,distance"]
    for a, b, d in zip(report.epsilons, report.epsilons[1:], report.distances):
        lines.append(f"{a!r},{b!r},{d!r}")
    for flag in report.flags:
        lines.insert(len(header), f"# flag {flag}")
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    _write_curve(out / "sweep_distance.dat", report.epsilons[1:], report.distances, header)
    return 0


def _compare(cfg, setup, root, out, header):
    grid = setup.grid
    a = initial_field(grid, cfg.initial, cfg.initial_params)
    b = initial_field(grid, cfg.initial_b, cfg.initial_b_params)
    report = comparison_run(a, b, setup.coefficients, setup.noise, _path(setup, root), setup.config)
    lines = [f"# {h}" for h in header] + ["time,distance"]
    lines += [f"{float(t)!r},{float(d)!r}" for t, d in zip(report.times, report.distances)]
    (out / "comparison.csv").write_text("\n".join(lines) + "\n")
    _write_curve(out / "distance.dat", report.times, report.distances, header)
    return 0


def _measure(cfg, setup, root, out, header):
    grid = setup.grid
    u0 = initial_field(grid, cfg.initial, cfg.initial_params)
    path = _path(setup, root)
    if cfg.xi_range == "auto":
        # a first pass fixes the velocity range, the second carries the battery
        probe = run(u0, setup.coefficients, setup.noise, path, setup.config)
        xi = XiGrid.from_trajectories([probe], cfg.xi_bins)
    else:
        xi = XiGrid(cfg.xi_range[0], cfg.xi_range[1], cfg.xi_bins)
    battery = default_battery(grid, xi)
    traj = run(u0, setup.coefficients, setup.noise, path, setup.config, battery=battery)
    n1, n2 = accumulate_measures(traj, traj.coefficients, setup.config.epsilon, xi)
    write_measure(out / "n1.measure", n1, header)
    write_measure(out / "n2.measure", n2, header)
    residual = kinetic_residual(traj, traj.coefficients, traj.noise, path, [n1, n2], battery)
    residual.write_csv(out / "residual.csv", header)
    radii = np.linspace(0.0, float(np.max(np.abs(xi.edges))), 33)
    total = n1 + n2
    _write_curve(out / "tail_mass.dat", radii, [tail_mass(total, r) for r in radii], header)
    lines = [f"# {h}" for h in header] + ["quantity,value"]
    lines += [
        f"n1_total_mass,{n1.total_mass()!r}",
        f"n2_total_mass,{n2.total_mass()!r}",
        f"residual_max,{residual.max!r}",
        f"residual_l2,{residual.l2!r}",
    ]
    (out / "measure_summary.csv").write_text("\n".join(lines) + "\n")
    return 0


def _verify(cfg, setup, root, out, header):
    grid = setup.grid
    ens = EnsembleSpec(cfg.paths, root, cfg.experiment, cfg.confidence, cfg.workers)
    u0 = initial_field(grid, cfg.initial, cfg.initial_params)
    exp = cfg.experiment
    if exp == "contraction":
        u0_b = initial_field(grid, cfg.initial_b, cfg.initial_b_params)
        report = contraction_test(u0, u0_b, setup, ens)
    elif exp == "energy":
        report = energy_test(u0, setup, cfg.p, ens, cfg.epsilons)
    elif exp == "regularity":
        report = regularity_test(u0, setup, ens, cfg.epsilons)
    elif exp == "cauchy":
        report = cauchy_test(u0, setup, ens, cfg.epsilons, cfg.mollify_widths or None)
    else:
        ladder = {}
        for eps in cfg.epsilons:
            (trajs,) = simulate([u0.values], setup, replace(setup.config, epsilon=eps), ens)
            ladder[eps] = trajs
        report = continuity_test(ladder, cfg.hneg_s, cfg.holder_lambda, ens)
    report.metadata |= {"config_hash": config_hash(cfg), "seed": root, "workers": cfg.workers}
    report.write(out, header)
    quantities = sorted({(r[0], r[1]) for r in report.rows}, key=lambda q: (q[0], -q[1] if q[1] == q[1] else 0))
    for q, eps in quantities:
        t, m, _ = report.curve(q, eps)
        tag = "" if eps != eps else f"_eps{eps:g}"
        _write_curve(out / f"{q}{tag}.dat", t, m, header)
    print(f"{exp}: {report.verdict}")
    return 1 if report.verdict == FAIL else 0


DISPATCH = {"solve": _solve, "sweep": _sweep, "compare": _compare, "measure": _measure, "verify": _verify}


def execute(cfg: ExperimentConfig, out: str | Path | None = None, seed: int | None = None) -> int:
    """Run ``cfg`` and write its artifacts; returns the exit status."""
    out = Path(out if out is not None else cfg.out)
    root = seed if seed is not None else root_seed_from_env(cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / MARKER
    marker.write_text("run did not finish\n")
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    header = [f"kspde {__version__} {cfg.command}", f"config_hash {config_hash(cfg)}", f"seed {root}", f"created {stamp}"]
    try:
        if cfg.command == "sweep" and len(cfg.epsilons) < 2:
            raise ConfigurationError("a sweep needs at least two epsilons")
        (out / "config.txt").write_text(
            "".join(f"# {h}\n" for h in header)
            + f"# defaulted: {', '.join(cfg.defaulted)}\n"
            + emit_config(cfg)
        )
        status = DISPATCH[cfg.command](cfg, build_setup(cfg), root, out, header)
    except (KspdeError, ValueError, OSError, FloatingPointError) as exc:
        (marker).write_text(f"{type(exc).__name__}: {exc}\n")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    marker.unlink()
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="kspde", description="Viscous approximations of degenerate parabolic SPDEs on the torus.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("experiment", nargs="?", choices=EXPERIMENTS, help="experiment for the verify command")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="root seed (overrides config and KSPDE_SEED)")
    parser.add_argument("--paths", type=int, help="Monte-Carlo path count")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text, args.command)
        updates = {}
        if args.experiment:
            updates["experiment"] = args.experiment
        if args.paths is not None:
            updates["paths"] = args.paths
        if args.seed is not None:
            updates["seed"] = args.seed
        if updates:
            cfg = cfg.with_values(**updates)
    except (KspdeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return execute(cfg, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
