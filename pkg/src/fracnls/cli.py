"""Batch front door: reproducible experiment runs from JSON configs.

Experiments are described by a config file, not flags; flags only pick
paths, thread counts and verbosity.  Every artifact embeds a short hash
of the canonicalized config so outputs can be matched to the exact run
that produced them, and reruns with the same config, seed and thread
count are byte-identical.

Exit codes: 0 success, 1 check failure, 2 config or usage error,
3 solver non-convergence or blow-up.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import spaces
from .dependence import (PerturbationFamily, choose_horizon,
                         default_direction, fit_slope, lipschitz_constant,
                         loglog_fit, remainder_decay_experiment,
                         run_dependence, static_remainder_decay)
from .exponents import (HypothesisViolation, ProblemParams, canonical_pair,
                        critical_pair, derive, dual, is_admissible, nu,
                        validate)
from .grid import (Field, Grid, free_propagate, gaussian, lebesgue_norm,
                   plane_wave, translate)
from .nonlinearity import PowerNonlinearity, count_pointwise_violations
from .solver import (BlowUpError, NonConvergenceError, PicardConfig,
                     TimeGrid, picard_duhamel, split_step)
from .spaces import NormSpec, ShellQuadrature, evaluate_norm, sobolev_norm

__all__ = ["ConfigError", "RunConfig", "config_hash", "main"]


class ConfigError(Exception):
    """A config file is missing, malformed, or violates a precondition."""


def config_hash(config: dict) -> str:
    """Short stable digest of the canonicalized config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------- config parsing


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing key {where}.{key}")
    return block[key]


def _as_complex(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, (int, float)) for v in value)):
        return complex(value[0], value[1])
    raise ConfigError(f"{where} must be a number or [re, im], got {value!r}")


def _build_params(config: dict) -> ProblemParams:
    block = _require(config, "problem", "config")
    params = ProblemParams(
        dimension=int(_require(block, "dimension", "problem")),
        regularity=float(_require(block, "regularity", "problem")),
        power=float(_require(block, "power", "problem")),
        coupling=_as_complex(block.get("coupling", 1.0), "problem.coupling"),
        growth_const=float(block.get("growth_const", 0.0)),
        growth_coeff=float(block.get("growth_coeff", 1.0)))
    validate(params)
    return params


def _build_grid(config: dict, params: ProblemParams) -> Grid:
    block = _require(config, "grid", "config")
    return Grid(dim=params.dimension,
                points=int(_require(block, "points", "grid")),
                period=float(_require(block, "period", "grid")))


def _build_timegrid(config: dict) -> TimeGrid:
    block = _require(config, "time", "config")
    horizon = float(_require(block, "horizon", "time"))
    if "slices" in block:
        return TimeGrid(horizon, int(block["slices"]))
    if "dt" in block:
        return TimeGrid(horizon, max(2, int(round(horizon
                                                  / float(block["dt"])))))
    raise ConfigError("time needs either slices or dt")


def _build_solver(config: dict, params: ProblemParams) -> PicardConfig:
    block = config.get("solver", {})
    return PicardConfig(
        metric_pair=canonical_pair(params),
        tol=float(block.get("tol", 1e-10)),
        max_iter=int(block.get("max_iter", 40)),
        smallness_delta=float(block.get("smallness_delta", 0.1)))


def _build_field(block: dict, grid: Grid, where: str,
                 seed: Optional[int]) -> Field:
    kind = _require(block, "kind", where)
    if kind == "gaussian":
        return gaussian(grid,
                        amplitude=_as_complex(block.get("amplitude", 1.0),
                                              f"{where}.amplitude"),
                        width=float(block.get("width", 1.0)),
                        center=block.get("center", 0.0))
    if kind == "plane_wave":
        return plane_wave(grid, mode=block.get("mode", 1),
                          amplitude=_as_complex(block.get("amplitude", 1.0),
                                                f"{where}.amplitude"))
    if kind == "random":
        if seed is None:
            raise ConfigError(f"{where}.kind random needs a top-level seed")
        rng = np.random.default_rng(seed)
        return _band_limited_field(grid, rng, int(block.get("band", 6)))
    raise ConfigError(f"unknown field kind {kind!r} at {where}")


def _band_limited_field(grid: Grid, rng, band: int) -> Field:
    coefs = (rng.standard_normal(grid.shape)
             + 1j * rng.standard_normal(grid.shape))
    idx = np.fft.fftfreq(grid.points, d=1.0 / grid.points)
    axis_ok = np.abs(idx) <= band
    mask = np.ones(grid.shape, dtype=bool)
    for a in range(grid.dim):
        shape = [1] * grid.dim
        shape[a] = grid.points
        mask &= axis_ok.reshape(shape)
    values = np.fft.ifftn(coefs * mask)
    top = np.abs(values).max()
    return Field(grid, values / top if top > 0 else values)


def _build_direction(config: dict, base: Field,
                     params: ProblemParams, seed: Optional[int]) -> Field:
    block = config.get("direction", {"kind": "default"})
    if block.get("kind", "default") == "default":
        return default_direction(base, params.regularity,
                                 center=float(block.get("center", 3.0)),
                                 width=float(block.get("width", 1.5)))
    raw = _build_field(block, base.grid, "direction", seed)
    size = sobolev_norm(raw, params.regularity)
    if size == 0.0:
        raise ConfigError("direction has zero Sobolev norm")
    return (1.0 / size) * raw


def _build_family(config: dict, grid: Grid, params: ProblemParams,
                  seed: Optional[int]) -> PerturbationFamily:
    base = _build_field(_require(config, "datum", "config"), grid,
                        "datum", seed)
    fam = _require(config, "family", "config")
    return PerturbationFamily(
        base=base,
        direction=_build_direction(config, base, params, seed),
        initial_scale=float(_require(fam, "initial_scale", "family")),
        depth=int(_require(fam, "depth", "family")),
        regularity=params.regularity)


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment description plus its provenance hash."""

    raw: dict
    digest: str
    params: ProblemParams
    grid: Grid
    solver: PicardConfig
    seed: Optional[int]
    threads: int
    output_dir: Path

    @classmethod
    def load(cls, path: str, output: Optional[str],
             threads: Optional[int]) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: "
                              f"{exc}") from exc
        if not isinstance(raw, dict) or not raw:
            raise ConfigError("config must be a non-empty JSON object")
        params = _build_params(raw)
        env = os.environ.get("FRACNLS_THREADS")
        if env is not None:
            try:
                resolved = int(env)
            except ValueError as exc:
                raise ConfigError(
                    f"FRACNLS_THREADS must be an integer, got {env!r}"
                ) from exc
        elif threads is not None:
            resolved = threads
        else:
            resolved = int(raw.get("threads", 1))
        if resolved < 1:
            raise ConfigError(f"thread count must be >= 1, got {resolved}")
        out = Path(output if output is not None
                   else raw.get("output_dir", "."))
        seed = raw.get("seed")
        return cls(raw=raw, digest=config_hash(raw), params=params,
                   grid=_build_grid(raw, params),
                   solver=_build_solver(raw, params),
                   seed=None if seed is None else int(seed),
                   threads=resolved, output_dir=out)


# ------------------------------------------------------------ file writers


def _format_cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.16e" % float(value)


def _write_csv(path: Path, digest: str, columns, rows):
    lines = [f"# config_hash={digest}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(cell) for cell in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, digest: str, payload: dict):
    payload = dict(payload)
    payload["config_hash"] = digest
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


# -------------------------------------------------------------- subcommands


def cmd_exponents(args) -> int:
    params = ProblemParams(dimension=args.dimension,
                           regularity=args.regularity, power=args.power)
    payload = derive(params).to_dict()
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_verify_pointwise(args) -> int:
    rng = np.random.default_rng(args.seed)
    failed = 0
    for alpha in (0.5, 1.0, 2.0, 3.0):
        spread = rng.uniform(0.2, 4.0, size=2)
        z1 = spread[0] * (rng.standard_normal(args.pairs)
                          + 1j * rng.standard_normal(args.pairs))
        z2 = spread[1] * (rng.standard_normal(args.pairs)
                          + 1j * rng.standard_normal(args.pairs))
        modulus, phase = count_pointwise_violations(z1, z2, alpha)
        failed += modulus + phase
        print(f"alpha {alpha}: modulus violations {modulus}, "
              f"phase violations {phase} of {args.pairs} pairs")
    return 1 if failed else 0


# --- selftest suites: quick deterministic invariants, no pytest involved


def _selftest_grid():
    return Grid(1, 128, 32.0)


def _selftest_field(grid):
    return _band_limited_field(grid, np.random.default_rng(7), band=8)


def _check_exponents():
    params = ProblemParams(dimension=2, regularity=0.5, power=1.0)
    gamma, rho = canonical_pair(params)
    assert abs(2.0 / gamma - 2.0 * (0.5 - 1.0 / rho)) < 1e-12
    assert is_admissible(gamma, rho, 2)
    crit = ProblemParams(dimension=3, regularity=0.5, power=2.0)
    assert validate(crit) == "critical"
    q0, r0 = critical_pair(crit)
    assert is_admissible(q0, r0, 3)
    assert abs(nu(r0, 3, 0.5) - 4.0) < 1e-12
    assert abs(dual(dual(8.0 / 3.0)) - 8.0 / 3.0) < 1e-12


def _check_partition_profile():
    assert float(spaces.transition_profile(0.25)) == 1.0
    assert float(spaces.transition_profile(2.0)) == 0.0
    mid = float(spaces.transition_profile(0.75))
    assert 0.0 < mid < 1.0


def _check_plancherel():
    grid = _selftest_grid()
    f = _selftest_field(grid)
    a = sobolev_norm(f, 0.0)
    b = lebesgue_norm(f, 2.0)
    assert abs(a - b) <= 1e-12 * b


def _check_besov_matches_multiplier():
    # ratio to the multiplier norm is an equivalence constant: stable
    # across full-spectrum random data and order one
    grid = _selftest_grid()
    rng = np.random.default_rng(3)
    spec = NormSpec("besov_lp", s=0.4, p=2.0, q=2.0, homogeneous=True)
    ratios = []
    for _ in range(10):
        coefs = (rng.standard_normal(grid.shape)
                 + 1j * rng.standard_normal(grid.shape))
        f = Field(grid, np.fft.ifftn(coefs))
        ratios.append(evaluate_norm(f, spec)
                      / sobolev_norm(f, 0.4, homogeneous=True))
    ratios = np.asarray(ratios)
    mean = ratios.mean()
    assert mean > 0 and ratios.std() / mean < 0.05
    assert 0.5 < ratios.min() and ratios.max() < 2.0


def _check_multiplier_invariance():
    grid = _selftest_grid()
    f = _selftest_field(grid)
    base = sobolev_norm(f, 0.4)
    moved = sobolev_norm(free_propagate(f, 0.37), 0.4)
    shifted = sobolev_norm(translate(f, 1.7), 0.4)
    assert abs(moved - base) <= 1e-10 * base
    assert abs(shifted - base) <= 1e-10 * base


def _check_free_group():
    grid = _selftest_grid()
    f = _selftest_field(grid)
    mass = lebesgue_norm(f, 2.0)
    assert abs(lebesgue_norm(free_propagate(f, 0.9), 2.0)
               - mass) <= 1e-12 * mass
    two_step = free_propagate(free_propagate(f, 0.2), 0.3)
    one_step = free_propagate(f, 0.5)
    assert np.abs(two_step.values - one_step.values).max() < 1e-12


def _check_translation_commutes():
    grid = _selftest_grid()
    f = _selftest_field(grid)
    a = translate(free_propagate(f, 0.4), 1.25)
    b = free_propagate(translate(f, 1.25), 0.4)
    assert np.abs(a.values - b.values).max() < 1e-12


def _check_pointwise_small():
    rng = np.random.default_rng(11)
    for alpha in (0.5, 2.0):
        z1 = 2.0 * (rng.standard_normal(10000)
                    + 1j * rng.standard_normal(10000))
        z2 = 0.7 * (rng.standard_normal(10000)
                    + 1j * rng.standard_normal(10000))
        assert count_pointwise_violations(z1, z2, alpha) == (0, 0)


def _plane_wave_setup():
    grid = Grid(1, 64, 32.0)
    amp, mode = 0.5, 2
    phi = plane_wave(grid, mode, amp)
    k0 = 2.0 * np.pi * mode / grid.period
    def exact(t):
        return (amp * np.exp(1j * k0 * grid.axis_coordinates)
                * np.exp(-1j * k0 ** 2 * t) * np.exp(1j * amp ** 2 * t))
    return grid, phi, exact


def _check_split_plane_wave():
    _, phi, exact = _plane_wave_setup()
    traj = split_step(phi, PowerNonlinearity(1.0, 2.0), 0.5, 1e-2)
    last = traj.timegrid.slices
    assert np.abs(traj.field(last).values - exact(0.5)).max() < 1e-8


def _check_picard_plane_wave():
    grid, phi, exact = _plane_wave_setup()
    params = ProblemParams(dimension=1, regularity=0.4, power=2.0)
    cfg = PicardConfig(metric_pair=canonical_pair(params))
    traj, report = picard_duhamel(phi, PowerNonlinearity(1.0, 2.0),
                                  TimeGrid(0.5, 64), cfg)
    assert report.converged
    assert np.abs(traj.field(64).values - exact(0.5)).max() < 1e-6


def _check_split_mass():
    grid = Grid(1, 64, 32.0)
    phi = gaussian(grid, 1.0, 2.0)
    traj = split_step(phi, PowerNonlinearity(-1.0, 2.0), 0.5, 1e-2)
    masses = [lebesgue_norm(traj.field(m), 2.0)
              for m in range(traj.timegrid.slices + 1)]
    assert abs(masses[-1] - masses[0]) < 1e-10


_SELFTEST_SUITES = (
    ("exponents", (("canonical_and_critical", _check_exponents),)),
    ("norms", (("partition_profile", _check_partition_profile),
               ("plancherel", _check_plancherel),
               ("besov_vs_multiplier", _check_besov_matches_multiplier),
               ("multiplier_invariance", _check_multiplier_invariance))),
    ("propagator", (("free_group", _check_free_group),
                    ("translation_commutes", _check_translation_commutes))),
    ("pointwise", (("difference_bounds", _check_pointwise_small),)),
    ("plane_wave", (("split_step_oracle", _check_split_plane_wave),
                    ("picard_oracle", _check_picard_plane_wave),
                    ("mass_conservation", _check_split_mass))),
)


def cmd_selftest(args) -> int:
    any_failed = False
    for suite, checks in _SELFTEST_SUITES:
        passed, failures = 0, []
        for name, check in checks:
            try:
                check()
                passed += 1
            except Exception as exc:
                failures.append((name, exc))
        print(f"suite {suite}: {passed} passed, {len(failures)} failed")
        for name, exc in failures:
            any_failed = True
            detail = str(exc) or exc.__class__.__name__
            print(f"  FAIL {name}: {detail}")
    return 1 if any_failed else 0


# --- experiment commands


def _slice_norm_rows(traj, params, rho):
    sup = NormSpec("sobolev_multiplier", s=params.regularity)
    besov = NormSpec("besov_lp", s=params.regularity, p=rho, q=2.0,
                     homogeneous=True)
    rows = []
    for m in range(traj.timegrid.slices + 1):
        f = traj.field(m)
        rows.append((traj.timegrid.times[m], lebesgue_norm(f, 2.0),
                     evaluate_norm(f, sup), evaluate_norm(f, besov)))
    return rows


def cmd_solve(args) -> int:
    rc = RunConfig.load(args.config, args.output, args.threads)
    tg = _build_timegrid(rc.raw)
    phi = _build_field(_require(rc.raw, "datum", "config"), rc.grid,
                       "datum", rc.seed)
    nl = PowerNonlinearity.from_params(rc.params)
    integrator = rc.raw.get("integrator", "picard")
    if integrator == "picard":
        traj, report = picard_duhamel(phi, nl, tg, rc.solver)
        print(f"picard converged in {report.iterations} sweeps")
    elif integrator == "split_step":
        traj = split_step(phi, nl, tg.horizon, tg.dt)
    else:
        raise ConfigError(f"unknown integrator {integrator!r}")
    rho = rc.solver.metric_pair[1]
    _write_csv(rc.output_dir / "solve.csv", rc.digest,
               ("t", "l2", "sobolev", "besov"),
               _slice_norm_rows(traj, rc.params, rho))
    for m in rc.raw.get("snapshots", ()):
        values = traj.field(int(m)).values.ravel()
        _write_csv(rc.output_dir / f"solve_snapshot_{int(m)}.csv", rc.digest,
                   ("index", "re", "im"),
                   [(i, v.real, v.imag) for i, v in enumerate(values)])
    print(f"wrote {rc.output_dir / 'solve.csv'}")
    return 0


def _running_slopes(rows) -> list:
    slopes = []
    for i in range(len(rows)):
        usable = [row for row in rows[:i + 1] if row.valid]
        if len(usable) < 2:
            slopes.append(None)
            continue
        try:
            slope, _, _ = loglog_fit(
                [row.input_distance for row in usable],
                [row.sup_sobolev for row in usable])
            slopes.append(slope)
        except ValueError:
            slopes.append(None)
    return slopes


def cmd_dependence(args) -> int:
    rc = RunConfig.load(args.config, args.output, args.threads)
    family = _build_family(rc.raw, rc.grid, rc.params, rc.seed)
    auto = rc.raw.get("auto_horizon")
    if auto is not None:
        tg = choose_horizon(rc.params, family, rc.solver,
                            float(_require(auto, "start", "auto_horizon")),
                            int(_require(auto, "slices", "auto_horizon")))
    else:
        tg = _build_timegrid(rc.raw)
    report = run_dependence(rc.params, family, rc.solver, tg,
                            cross_check=bool(rc.raw.get("cross_check",
                                                        False)),
                            cross_tol=float(rc.raw.get("cross_tol", 1e-4)),
                            threads=rc.threads)
    slopes = _running_slopes(report.rows)
    csv_rows = [(k, row.scale, row.input_distance, row.sup_sobolev,
                 row.spacetime_besov, row.spacetime_lebesgue, slopes[k])
                for k, row in enumerate(report.rows)]
    _write_csv(rc.output_dir / "dependence.csv", rc.digest,
               ("k", "eps", "in_Hs", "out_sup_Hs", "out_Lgamma_Besov",
                "out_Lgamma_Lsigma", "slope_running"), csv_rows)
    flags = [k for k, row in enumerate(report.rows) if not row.valid]
    summary = report.to_dict()
    summary["flags"] = flags
    valid = report.valid_rows()
    summary["lipschitz_constant"] = (lipschitz_constant(report)
                                     if valid else None)
    _write_json(rc.output_dir / "dependence_summary.json", rc.digest,
                summary)
    print(f"wrote {rc.output_dir / 'dependence.csv'} "
          f"({len(report.rows)} rows, {len(flags)} flagged)")
    return 0


def cmd_remainder(args) -> int:
    rc = RunConfig.load(args.config, args.output, args.threads)
    family = _build_family(rc.raw, rc.grid, rc.params, rc.seed)
    tg = _build_timegrid(rc.raw)
    block = rc.raw.get("remainder", {})
    quad = ShellQuadrature(shells=int(block.get("shells", 16)))
    theta = int(block.get("theta_nodes", 32))
    if block.get("static", False):
        gamma, rho = rc.solver.metric_pair
        rows = static_remainder_decay(
            family.base, family.direction, family.scales,
            PowerNonlinearity.from_params(rc.params),
            rc.params.regularity, dual(rho), 2.0, rho,
            theta_nodes=theta, quad=quad)
    else:
        rows = remainder_decay_experiment(rc.params, family, rc.solver, tg,
                                          theta_nodes=theta, quad=quad,
                                          threads=rc.threads)
    _write_csv(rc.output_dir / "remainder.csv", rc.digest,
               ("k", "eps", "integrated_K", "converged"),
               [(k, row.scale, row.integrated, row.converged)
                for k, row in enumerate(rows)])
    print(f"wrote {rc.output_dir / 'remainder.csv'} ({len(rows)} rows)")
    return 0


# ------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracnls",
        description="Dispersive model problem: exponents, norms, "
                    "integrators and dependence experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exponents", help="derive the exponent set")
    p.add_argument("dimension", type=int)
    p.add_argument("regularity", type=float)
    p.add_argument("power", type=float)
    p.set_defaults(func=cmd_exponents)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("verify-pointwise",
                       help="sweep the pointwise difference inequalities")
    p.add_argument("--pairs", type=int, default=200000)
    p.add_argument("--seed", type=int, default=20260822)
    p.set_defaults(func=cmd_verify_pointwise)

    for name, func in (("solve", cmd_solve), ("dependence", cmd_dependence),
                       ("remainder", cmd_remainder)):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--output", default=None,
                       help="output directory (default: config output_dir)")
        p.add_argument("--threads", type=int, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HypothesisViolation as exc:
        print(f"config error [hypothesis={exc.hypothesis}]: {exc}",
              file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return 3
    except BlowUpError as exc:
        print(f"solution blew up: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
