from __future__ import annotations

import numpy as np
import pytest

from fracnls.grid import Field, Grid, gaussian, lebesgue_norm
from fracnls.nonlinearity import (
    DifferenceExponents,
    GeneralNonlinearity,
    PowerNonlinearity,
    SplitNonlinearity,
    apply_g,
    as_general,
    besov_difference_report,
    check_pointwise_power,
    count_pointwise_violations,
    derivative_envelope,
    difference_identity_residual,
    remainder_K,
    split,
    wirtinger,
)
from fracnls.spaces import NormSpec, ShellQuadrature, besov_norm_fd

CUBIC = PowerNonlinearity(coupling=1.0, power=2.0)


def _scalar_g(nl, z):
    return complex(nl.g(np.asarray(z, dtype=complex).reshape(-1))[0])


def _cubic_plus_linear():
    """g(z) = z + |z|^2 z with its exact derivative pair and envelope."""
    return GeneralNonlinearity(
        gfun=lambda z: z * (1.0 + np.abs(z) ** 2),
        dzfun=lambda z: 1.0 + 2.0 * np.abs(z) ** 2 + 0.0j,
        dzbarfun=lambda z: z * z,
        power=2.0, growth_const=1.0, growth_coeff=3.0)


# ------------------------------------------------------------------- apply_g

def test_apply_g_zero_and_constant(line_grid):
    zero = Field(line_grid, np.zeros(line_grid.shape, dtype=complex))
    assert np.all(apply_g(zero, CUBIC).values == 0.0)
    nl = PowerNonlinearity(coupling=0.5 - 2.0j, power=1.5)
    c = 1.0 + 2.0j
    const = Field(line_grid, np.full(line_grid.shape, c))
    image = apply_g(const, nl)
    expected = nl.coupling * abs(c) ** nl.power * c
    assert np.allclose(image.values, expected, rtol=1e-14)


def test_apply_g_modulus_identity(line_grid, rng):
    from conftest import smooth_random_field
    f = smooth_random_field(line_grid, rng)
    nl = PowerNonlinearity(coupling=-1.5j, power=0.7)
    image = apply_g(f, nl)
    expected = abs(nl.coupling) * np.abs(f.values) ** (nl.power + 1.0)
    assert np.allclose(np.abs(image.values), expected, rtol=1e-13)


# ----------------------------------------------------------------- wirtinger

def test_wirtinger_worked_example():
    dz, dzbar = wirtinger(1.0, CUBIC)
    assert dz == pytest.approx(2.0, rel=1e-15)
    assert dzbar == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_wirtinger_zero_extension(alpha):
    dz, dzbar = wirtinger(0.0, PowerNonlinearity(1.0, alpha))
    assert dz == 0.0
    assert dzbar == 0.0


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_wirtinger_matches_finite_differences(alpha, rng):
    nl = PowerNonlinearity(coupling=0.7 - 0.3j, power=alpha)
    h = 1e-7
    for _ in range(20):
        z = complex(rng.normal(), rng.normal())
        if abs(z) < 0.3:
            z += 0.5 + 0.5j
        dx = (_scalar_g(nl, z + h) - _scalar_g(nl, z - h)) / (2.0 * h)
        dy = (_scalar_g(nl, z + 1j * h) - _scalar_g(nl, z - 1j * h)) / (2.0 * h)
        dz, dzbar = wirtinger(z, nl)
        assert abs(dz - 0.5 * (dx - 1j * dy)) < 1e-6 * (1.0 + abs(dz))
        assert abs(dzbar - 0.5 * (dx + 1j * dy)) < 1e-6 * (1.0 + abs(dzbar))


def test_power_envelope_is_exact(rng):
    nl = PowerNonlinearity(coupling=2.0j, power=1.3)
    z = rng.normal(size=100) + 1j * rng.normal(size=100)
    measured = derivative_envelope(nl, z)
    expected = abs(nl.coupling) * (1.0 + nl.power) * np.abs(z) ** nl.power
    assert np.allclose(measured, expected, rtol=1e-13)


# -------------------------------------------------------------- general maps

def test_general_rejects_nonvanishing_origin():
    with pytest.raises(ValueError, match="origin"):
        GeneralNonlinearity(gfun=lambda z: z + 1.0,
                            dzfun=lambda z: np.ones_like(z),
                            dzbarfun=lambda z: np.zeros_like(z),
                            power=1.0)


def test_general_growth_check(rng):
    nl = _cubic_plus_linear()
    z = rng.normal(size=10_000) + 1j * rng.normal(size=10_000)
    assert nl.check_growth(z) == 0
    understated = GeneralNonlinearity(
        gfun=nl.gfun, dzfun=nl.dzfun, dzbarfun=nl.dzbarfun,
        power=2.0, growth_const=1.0, growth_coeff=2.5)
    assert understated.check_growth(z) > 0


def test_as_general_wraps_power(rng):
    nl = PowerNonlinearity(coupling=1.0 - 1.0j, power=2.5)
    wrapped = as_general(nl)
    z = rng.normal(size=50) + 1j * rng.normal(size=50)
    assert np.allclose(wrapped.g(z), nl.g(z), rtol=1e-15)
    assert wrapped.growth_const == 0.0
    assert wrapped.check_growth(z) == 0


# --------------------------------------------------------- segment identity

def test_difference_identity_trivial_pair():
    assert difference_identity_residual(0.3 + 1j, 0.3 + 1j, CUBIC) == 0.0


def test_difference_identity_worked_example():
    # straight path from 0 to 1: the theta integrand is (alpha+1) theta^alpha,
    # polynomial for alpha = 2, so Gauss quadrature is exact
    residual = difference_identity_residual(1.0, 0.0, CUBIC, n_theta=64)
    assert residual < 1e-10


def _min_segment_distance(z1, z2):
    gap = z1 - z2
    denom = abs(gap) ** 2
    if denom == 0.0:
        return abs(z2)
    t = min(max((-z2.real * gap.real - z2.imag * gap.imag) / denom, 0.0), 1.0)
    return abs(z2 + t * gap)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_difference_identity_random_pairs(alpha, rng):
    nl = PowerNonlinearity(coupling=1.0 + 0.5j, power=alpha)
    done = 0
    while done < 50:
        z1 = complex(rng.normal(), rng.normal())
        z2 = complex(rng.normal(), rng.normal())
        # fractional powers lose smoothness at the origin; the identity is
        # integrated along the segment, so keep the path clear of it
        if _min_segment_distance(z1, z2) < 0.2:
            continue
        assert difference_identity_residual(z1, z2, nl, n_theta=128) < 1e-8
        done += 1


def test_difference_identity_needs_two_nodes():
    with pytest.raises(ValueError):
        difference_identity_residual(1.0, 0.0, CUBIC, n_theta=1)


# ---------------------------------------------------------- pointwise bounds

def test_pointwise_boundary_case_is_equality():
    report = check_pointwise_power(1.0, 0.0, 0.5)
    assert report.modulus_lhs == pytest.approx(1.0)
    assert report.modulus_bound == pytest.approx(1.0)
    assert report.satisfied


def test_pointwise_worked_example():
    report = check_pointwise_power(2.0, 1.0, 2.0)
    assert report.modulus_lhs == pytest.approx(3.0)
    assert report.modulus_bound == pytest.approx(6.0)  # alpha * (2 + 1) * 1
    assert report.phase_lhs == pytest.approx(3.0)
    assert report.phase_bound == pytest.approx(15.0)
    assert report.satisfied


def test_pointwise_rejects_bad_power():
    with pytest.raises(ValueError):
        check_pointwise_power(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        count_pointwise_violations([1.0], [0.0], -1.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_pointwise_sweep_no_violations(alpha, rng):
    n = 10_000
    z1 = rng.normal(size=n) + 1j * rng.normal(size=n)
    z2 = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert count_pointwise_violations(z1, z2, alpha) == (0, 0)
    # stress the near-antipodal configuration where the segment crosses 0
    t = rng.uniform(0.5, 2.0, size=n)
    assert count_pointwise_violations(z1, -t * z1, alpha) == (0, 0)
    # and exact zeros on one side
    assert count_pointwise_violations(z1, np.zeros(n), alpha) == (0, 0)


# ------------------------------------------------------- remainder functional

@pytest.fixture
def bump_pair(line_grid):
    u = gaussian(line_grid, amplitude=1.0, width=2.0)
    shifted = gaussian(line_grid, amplitude=0.5, width=1.5, center=3.0)
    return u, u + shifted


def test_remainder_vanishes_on_diagonal(bump_pair):
    u, _ = bump_pair
    assert remainder_K(u, u, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0) == 0.0


def test_remainder_vanishes_for_zero_base(bump_pair, line_grid):
    _, v = bump_pair
    zero = Field(line_grid, np.zeros(line_grid.shape, dtype=complex))
    assert remainder_K(zero, v, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0) == 0.0


def test_remainder_positive_off_diagonal(bump_pair):
    u, v = bump_pair
    assert remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0) > 0.0


def test_remainder_validates_exponents(bump_pair):
    u, v = bump_pair
    with pytest.raises(ValueError, match="p < r"):
        remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=2.0, r=2.0)
    with pytest.raises(ValueError, match="0 < s < 1"):
        remainder_K(u, v, CUBIC, s=1.2, p=2.0, q=2.0, r=6.0)
    with pytest.raises(ValueError, match="summability"):
        remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=np.inf, r=6.0)


def test_remainder_self_convergence(bump_pair):
    u, v = bump_pair
    coarse = remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0,
                         theta_nodes=32, quad=ShellQuadrature(shells=32))
    fine = remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0,
                       theta_nodes=64, quad=ShellQuadrature(shells=64))
    assert abs(coarse - fine) < 0.01 * fine


def test_remainder_decays_along_perturbations(line_grid):
    u = gaussian(line_grid, amplitude=1.0, width=2.0)
    psi = gaussian(line_grid, amplitude=1.0, width=1.5, center=2.0)
    quad = ShellQuadrature(shells=16)
    values = []
    for k in range(11):
        v = u + (2.0 ** -k) * psi
        values.append(remainder_K(u, v, CUBIC, s=0.5, p=2.0, q=2.0, r=6.0,
                                  theta_nodes=16, quad=quad))
    values = np.array(values)
    assert np.all(np.diff(values) < 0.0)
    assert values[-1] < 1e-3 * values[0]


# ----------------------------------------------------------- difference report

def test_difference_exponents_sigma():
    exps = DifferenceExponents(s=0.5, p=2.0, q=2.0, r=6.0)
    assert exps.sigma(2.0) == pytest.approx(6.0)
    assert exps.sigma(0.5) == pytest.approx(1.5)
    assert DifferenceExponents(s=0.5, p=2.0, q=2.0, r=np.inf).sigma(1.0) \
        == pytest.approx(2.0)


def test_difference_report_diagonal(bump_pair):
    u, _ = bump_pair
    exps = DifferenceExponents(s=0.5, p=2.0, q=2.0, r=6.0)
    report = besov_difference_report(u, u, CUBIC, exps)
    assert report.lhs == 0.0
    assert report.k_term == 0.0
    assert report.lipschitz_term == 0.0


def test_difference_report_zero_base(bump_pair, line_grid):
    _, v = bump_pair
    zero = Field(line_grid, np.zeros(line_grid.shape, dtype=complex))
    exps = DifferenceExponents(s=0.5, p=2.0, q=2.0, r=6.0)
    quad = ShellQuadrature()
    report = besov_difference_report(zero, v, CUBIC, exps, quad=quad)
    assert report.k_term == 0.0
    direct = besov_norm_fd(apply_g(v, CUBIC),
                           NormSpec("besov_fd", s=0.5, p=2.0, q=2.0,
                                    homogeneous=True), quad)
    assert report.lhs == pytest.approx(direct, rel=1e-12)
    assert report.sigma == pytest.approx(6.0)
    # with no base field the refined form collapses onto the Lipschitz term
    assert report.refined_term == pytest.approx(report.lipschitz_term)


def test_difference_report_lipschitz_ratio_bounded(line_grid):
    # power >= 1: lhs / ||v - u|| at (s, r, q) must not blow up as v -> u
    u = gaussian(line_grid, amplitude=1.0, width=2.0)
    psi = gaussian(line_grid, amplitude=1.0, width=1.5, center=2.0)
    exps = DifferenceExponents(s=0.5, p=2.0, q=2.0, r=6.0)
    quad = ShellQuadrature(shells=16)
    spec_r = NormSpec("besov_fd", s=0.5, p=6.0, q=2.0, homogeneous=True)
    ratios = []
    for k in range(8):
        v = u + (2.0 ** -k) * psi
        report = besov_difference_report(u, v, CUBIC, exps, theta_nodes=16,
                                         quad=quad)
        gap = besov_norm_fd(v - u, spec_r, quad)
        ratios.append(report.lhs / gap)
    first = max(ratios[:4])
    second = max(ratios[4:])
    assert second <= 1.25 * first


def test_difference_report_general_map_has_no_refinement(bump_pair):
    u, v = bump_pair
    exps = DifferenceExponents(s=0.5, p=2.0, q=2.0, r=6.0)
    report = besov_difference_report(u, v, _cubic_plus_linear(), exps)
    assert report.refined_term is None
    assert report.lhs > 0.0


# ------------------------------------------------------------------ splitting

def test_split_pure_power_is_trivial(rng):
    parts = split(CUBIC, cutoff=1.0)
    z = rng.normal(size=200) + 1j * rng.normal(size=200)
    assert np.all(parts.bounded_part.g(z) == 0.0)
    assert np.allclose(parts.power_part.g(z), CUBIC.g(z), rtol=1e-15)
    assert np.allclose(parts.g(z), CUBIC.g(z), rtol=1e-15)


def test_split_rejects_bad_cutoff():
    with pytest.raises(ValueError):
        split(_cubic_plus_linear(), cutoff=0.0)


def test_split_reconstructs_general_map(rng):
    nl = _cubic_plus_linear()
    parts = split(nl, cutoff=1.0)
    mag = rng.lognormal(mean=0.0, sigma=2.0, size=100_000)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=100_000)
    z = mag * np.exp(1j * phase)
    recon = parts.g(z)
    exact = nl.g(z)
    scale = np.maximum(np.abs(exact), 1.0)
    assert np.max(np.abs(recon - exact) / scale) < 1e-12
    assert complex(parts.bounded_part.g(np.zeros(1, complex))[0]) == 0.0
    assert complex(parts.power_part.g(np.zeros(1, complex))[0]) == 0.0


def test_split_bounded_part_has_small_derivative(rng):
    parts = split(_cubic_plus_linear(), cutoff=1.0)
    mag = rng.uniform(0.0, 1000.0, size=50_000)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=50_000)
    z = mag * np.exp(1j * phase)
    # concentrate extra samples on the transition band, where the
    # derivative of the window peaks
    band = rng.uniform(0.4, 1.1, size=50_000) * np.exp(
        1j * rng.uniform(0.0, 2.0 * np.pi, size=50_000))
    z = np.concatenate([z, band])
    measured = derivative_envelope(parts.bounded_part, z)
    assert float(measured.max()) <= 10.0
    assert parts.bounded_part.check_growth(z) == 0
    assert parts.bounded_part.growth_coeff == 0.0


def test_split_power_part_vanishes_near_origin(rng):
    parts = split(_cubic_plus_linear(), cutoff=1.0)
    z = 0.5 * rng.uniform(0.0, 1.0, size=1000) * np.exp(
        1j * rng.uniform(0.0, 2.0 * np.pi, size=1000))
    assert np.all(parts.power_part.g(z) == 0.0)
    assert np.all(derivative_envelope(parts.power_part, z) == 0.0)
    wide = rng.lognormal(0.0, 2.0, size=20_000) * np.exp(
        1j * rng.uniform(0.0, 2.0 * np.pi, size=20_000))
    assert parts.power_part.check_growth(wide) == 0
    assert parts.power_part.growth_const == 0.0


def test_split_derivatives_sum_to_original(rng):
    nl = _cubic_plus_linear()
    parts = split(nl, cutoff=1.0)
    z = rng.lognormal(0.0, 1.0, size=5000) * np.exp(
        1j * rng.uniform(0.0, 2.0 * np.pi, size=5000))
    assert np.allclose(parts.dz(z), nl.dz(z), rtol=1e-12, atol=1e-12)
    assert np.allclose(parts.dzbar(z), nl.dzbar(z), rtol=1e-12, atol=1e-12)
