"""Dependence-lab tests: family plumbing, fits, decay experiments."""

import json
import math

import numpy as np
import pytest

import fracnls.dependence as dep
from fracnls.dependence import (DependenceReport, DependenceRow,
                                PerturbationFamily, choose_horizon,
                                default_direction, fit_slope,
                                lipschitz_constant, loglog_fit,
                                remainder_decay_experiment, run_dependence,
                                static_remainder_decay)
from fracnls.exponents import ProblemParams, canonical_pair
from fracnls.grid import Grid, gaussian, inner_product
from fracnls.nonlinearity import PowerNonlinearity
from fracnls.solver import (IterationReport, NonConvergenceError,
                            PicardConfig, TimeGrid, free_trajectory,
                            picard_duhamel, smallness_check)
from fracnls.spaces import ShellQuadrature, sobolev_norm

PARAMS = ProblemParams(dimension=1, regularity=0.4, power=2.0)
FREE = ProblemParams(dimension=1, regularity=0.4, power=2.0, coupling=0.0)
PAIR = canonical_pair(PARAMS)
CUBIC = PowerNonlinearity(1.0, 2.0)
GRID = Grid(1, 128, 32.0)
BASE = gaussian(GRID, 0.08, 2.0)
LIGHT_QUAD = ShellQuadrature(shells=12)


def _config(**kw):
    return PicardConfig(metric_pair=PAIR, **kw)


@pytest.fixture(scope="module")
def direction():
    return default_direction(BASE, 0.4)


@pytest.fixture(scope="module")
def family(direction):
    return PerturbationFamily(BASE, direction, 0.01, 8, 0.4)


@pytest.fixture(scope="module")
def subcritical_report(family):
    return run_dependence(PARAMS, family, _config(), TimeGrid(0.25, 32))


@pytest.fixture(scope="module")
def free_report(family):
    return run_dependence(FREE, family, _config(), TimeGrid(0.25, 32))


# ------------------------------------------------------------------ family


def test_default_direction_is_unit_and_transverse(direction):
    assert sobolev_norm(direction, 0.4) == pytest.approx(1.0, rel=1e-12)
    assert abs(inner_product(BASE, direction)) < 1e-14


def test_family_validation(direction):
    other = Grid(1, 64, 32.0)
    with pytest.raises(ValueError, match="different grids"):
        PerturbationFamily(gaussian(other, 0.1, 2.0), direction, 0.01, 4, 0.4)
    with pytest.raises(ValueError, match="unit Sobolev"):
        PerturbationFamily(BASE, 2.0 * direction, 0.01, 4, 0.4)
    with pytest.raises(ValueError, match="initial_scale"):
        PerturbationFamily(BASE, direction, -1.0, 4, 0.4)
    with pytest.raises(ValueError, match="depth"):
        PerturbationFamily(BASE, direction, 0.01, -1, 0.4)


def test_family_scales_and_data(direction):
    fam = PerturbationFamily(BASE, direction, 0.01, 3, 0.4)
    assert fam.scales == (0.01, 0.005, 0.0025, 0.00125)
    expected = BASE + 0.005 * direction
    assert np.array_equal(fam.datum(1).values, expected.values)


def test_family_zero_scale_allowed(direction):
    fam = PerturbationFamily(BASE, direction, 0.0, 2, 0.4)
    assert fam.scales == (0.0, 0.0, 0.0)


# ----------------------------------------------------------------- horizon


def test_choose_horizon_keeps_passing_grid(family):
    tg = choose_horizon(PARAMS, family, _config(), 0.25, 32)
    assert tg.horizon == 0.25 and tg.slices == 32


def test_choose_horizon_shrinks_marginal_datum(direction):
    base = gaussian(GRID, 0.11, 2.0)
    fam = PerturbationFamily(base, default_direction(base, 0.4),
                             0.005, 4, 0.4)
    cfg = _config()
    tg = choose_horizon(PARAMS, fam, cfg, 1.0, 128)
    assert tg.horizon < 1.0
    assert smallness_check(fam.datum(0), tg, cfg, PARAMS) < 0.1
    assert smallness_check(base, tg, cfg, PARAMS) < 0.1


def test_choose_horizon_gives_up_on_large_datum(direction):
    fam = PerturbationFamily(gaussian(GRID, 0.5, 2.0), direction,
                             0.005, 4, 0.4)
    with pytest.raises(RuntimeError, match="too large"):
        choose_horizon(PARAMS, fam, _config(), 1.0, 128, max_halvings=20)


# -------------------------------------------------------------- experiment


def test_run_dependence_enforces_smallness(direction):
    fam = PerturbationFamily(gaussian(GRID, 0.5, 2.0), direction,
                             0.01, 4, 0.4)
    with pytest.raises(ValueError, match="shrink"):
        run_dependence(PARAMS, fam, _config(), TimeGrid(0.25, 16))


def test_run_dependence_zero_family(direction):
    fam = PerturbationFamily(BASE, direction, 0.0, 4, 0.4)
    report = run_dependence(PARAMS, fam, _config(), TimeGrid(0.25, 16))
    assert len(report.rows) == 5
    for row in report.rows:
        assert row.converged
        assert row.input_distance == 0.0
        assert row.sup_sobolev == 0.0
        assert row.spacetime_besov == 0.0
        assert row.spacetime_lebesgue == 0.0
    assert report.slope is None


def test_run_dependence_free_flow_is_isometry(free_report):
    for row in free_report.rows:
        assert row.sup_sobolev == pytest.approx(row.input_distance,
                                                rel=1e-10)
    slope, r2 = fit_slope(free_report)
    assert slope == pytest.approx(1.0, abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-10)
    assert lipschitz_constant(free_report) == pytest.approx(1.0, abs=1e-10)


def test_run_dependence_columns_monotone(subcritical_report):
    rows = subcritical_report.rows
    assert all(row.converged for row in rows)
    for column in ("sup_sobolev", "spacetime_besov", "spacetime_lebesgue"):
        values = [getattr(row, column) for row in rows]
        assert all(b < a for a, b in zip(values, values[1:]))


def test_run_dependence_slopes_near_lipschitz(subcritical_report):
    assert subcritical_report.slope == pytest.approx(
        fit_slope(subcritical_report)[0])
    for column in ("sup_sobolev", "spacetime_besov", "spacetime_lebesgue"):
        slope, r2 = fit_slope(subcritical_report, column)
        assert 0.85 <= slope <= 1.15
        assert r2 >= 0.99


def test_run_dependence_ratios_bounded(subcritical_report):
    # power >= 1: no upward trend in output/input as the scale shrinks
    for column in ("sup_sobolev", "spacetime_besov", "spacetime_lebesgue"):
        ratios = [getattr(row, column) / row.input_distance
                  for row in subcritical_report.rows]
        half = len(ratios) // 2
        assert max(ratios[half:]) <= 1.25 * max(ratios[:half])


def test_run_dependence_cross_check_agrees(direction):
    fam = PerturbationFamily(BASE, direction, 0.01, 3, 0.4)
    report = run_dependence(PARAMS, fam, _config(), TimeGrid(0.25, 32),
                            cross_check=True)
    for row in report.rows:
        assert row.oracle_agrees is True
        assert row.oracle_gap < 1e-4
    assert report.slope is not None


def test_run_dependence_cross_check_can_flag(direction):
    fam = PerturbationFamily(BASE, direction, 0.01, 3, 0.4)
    report = run_dependence(PARAMS, fam, _config(), TimeGrid(0.25, 32),
                            cross_check=True, cross_tol=0.0)
    assert all(row.oracle_agrees is False for row in report.rows)
    assert report.slope is None
    with pytest.raises(ValueError, match="valid rows"):
        fit_slope(report)


def test_run_dependence_flags_forced_nonconvergence(family, monkeypatch):
    calls = {"n": 0}
    real = picard_duhamel

    def flaky(phi, nl, tg, cfg):
        calls["n"] += 1
        if calls["n"] == 4:  # base solve is call 1, so this is row k = 2
            raise NonConvergenceError(
                "forced", IterationReport((1.0,), False),
                free_trajectory(phi, tg))
        return real(phi, nl, tg, cfg)

    monkeypatch.setattr(dep, "picard_duhamel", flaky)
    report = run_dependence(PARAMS, family, _config(), TimeGrid(0.25, 16))
    flagged = [row for row in report.rows if not row.converged]
    assert len(flagged) == 1
    assert len(report.rows) == 9
    assert len(report.valid_rows()) == 8
    assert report.slope is not None


def test_run_dependence_threads_match_serial(direction):
    fam = PerturbationFamily(BASE, direction, 0.01, 4, 0.4)
    tg = TimeGrid(0.25, 32)
    serial = run_dependence(PARAMS, fam, _config(), tg, threads=1)
    parallel = run_dependence(PARAMS, fam, _config(), tg, threads=3)
    assert serial.rows == parallel.rows
    assert serial.slope == parallel.slope


# -------------------------------------------------------------------- fits


def _synthetic_report(exponent):
    rows = []
    for k in range(9):
        eps = 0.01 * 0.5 ** k
        out = eps ** exponent
        rows.append(DependenceRow(scale=eps, input_distance=eps,
                                  sup_sobolev=out, spacetime_besov=out,
                                  spacetime_lebesgue=out, converged=True,
                                  iterations=1))
    return DependenceReport(timegrid=TimeGrid(0.25, 16), rows=tuple(rows))


def test_fit_slope_recovers_synthetic_exponent():
    report = _synthetic_report(0.5)
    for column in ("sup_sobolev", "spacetime_besov", "spacetime_lebesgue"):
        slope, r2 = fit_slope(report, column)
        assert slope == pytest.approx(0.5, abs=1e-10)
        assert r2 == pytest.approx(1.0, abs=1e-10)


def test_fit_slope_needs_four_valid_rows():
    report = _synthetic_report(1.0)
    short = DependenceReport(timegrid=report.timegrid, rows=report.rows[:3])
    with pytest.raises(ValueError, match="4 valid rows"):
        fit_slope(short)
    with pytest.raises(ValueError, match="column"):
        fit_slope(report, "no_such_column")


def test_lipschitz_constant_validation():
    report = _synthetic_report(1.0)
    assert lipschitz_constant(report) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError, match="column"):
        lipschitz_constant(report, "no_such_column")
    empty = DependenceReport(timegrid=report.timegrid, rows=())
    with pytest.raises(ValueError, match="no valid rows"):
        lipschitz_constant(empty)


def test_loglog_fit_validation():
    with pytest.raises(ValueError, match="2 points"):
        loglog_fit([1.0], [1.0])
    with pytest.raises(ValueError, match="degenerate"):
        loglog_fit([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def test_report_rows_must_be_sorted():
    rows = _synthetic_report(1.0).rows
    with pytest.raises(ValueError, match="decreasing"):
        DependenceReport(timegrid=TimeGrid(0.25, 16), rows=rows[::-1])


def test_report_serializes_to_json(subcritical_report):
    blob = json.dumps(subcritical_report.to_dict())
    back = json.loads(blob)
    assert len(back["rows"]) == 9
    assert back["slices"] == 32
    assert 0.85 <= back["slope"] <= 1.15


# --------------------------------------------------------- remainder decay


def test_remainder_decay_identical_trajectories(direction):
    fam = PerturbationFamily(BASE, direction, 0.0, 3, 0.4)
    rows = remainder_decay_experiment(PARAMS, fam, _config(),
                                      TimeGrid(0.25, 8), theta_nodes=8,
                                      quad=ShellQuadrature(shells=8))
    assert all(row.integrated == 0.0 for row in rows)


def test_remainder_decay_along_solved_trajectories(direction):
    fam = PerturbationFamily(BASE, direction, 0.01, 6, 0.4)
    rows = remainder_decay_experiment(PARAMS, fam, _config(),
                                      TimeGrid(0.25, 8), theta_nodes=16,
                                      quad=LIGHT_QUAD, threads=2)
    values = [row.integrated for row in rows]
    assert all(row.converged for row in rows)
    assert all(v > 0 for v in values)
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 0.05 * values[0]


def test_remainder_decay_on_linear_flow(direction):
    # the flow is free; the functional still sees the model map
    fam = PerturbationFamily(BASE, direction, 0.01, 6, 0.4)
    rows = remainder_decay_experiment(FREE, fam, _config(),
                                      TimeGrid(0.25, 8),
                                      remainder_map=CUBIC, theta_nodes=16,
                                      quad=LIGHT_QUAD)
    values = [row.integrated for row in rows]
    assert all(v > 0 for v in values)
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 0.05 * values[0]


def test_static_remainder_decay(direction):
    base = gaussian(GRID, 1.0, 2.0)
    scales = [0.5 * 2.0 ** -k for k in range(9)]
    rows = static_remainder_decay(base, direction, scales, CUBIC,
                                  0.4, 2.0, 2.0, 20.0 / 9.0,
                                  theta_nodes=16, quad=LIGHT_QUAD)
    values = [row.integrated for row in rows]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-2 * values[0]
    assert rows[0].scale == 0.5
