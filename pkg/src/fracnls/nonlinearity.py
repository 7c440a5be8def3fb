"""Pointwise nonlinear maps and their fractional-smoothness differences.

The model map is the power nonlinearity g(u) = coupling |u|^power u;
general C1 maps enter through sampled callables under the growth envelope
|g'(u)| <= A + B |u|^power.  The derivative of a C -> C map is carried as
the pair of its Wirtinger derivatives, and |g'| below always means
|dz g| + |dzbar g|, which majorizes the Jacobian operator norm.

Differences g(z1) - g(z2) are reconstructed by integrating the derivative
pair along the straight segment between the points.  Applying the same
segment integral to translation increments of two fields isolates the
lower-order remainder of the difference bound in the finite-difference
Besov norm; the remainder vanishes identically on the diagonal and decays
as the two fields approach each other in the companion Lebesgue norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .grid import Field, lebesgue_norm
from .spaces import (
    NormSpec,
    ShellQuadrature,
    besov_norm_fd,
    transition_profile,
    transition_profile_derivative,
)


def _phase_square(values: np.ndarray, power: float) -> np.ndarray:
    """|z|^(power-2) z^2 = (z/|z|)^2 |z|^power, extended by 0 at z = 0."""
    values = np.asarray(values, dtype=complex)
    mag = np.abs(values)
    out = np.zeros_like(values)
    mask = mag > 0.0
    if np.any(mask):
        unit = values[mask] / mag[mask]
        out[mask] = unit * unit * mag[mask] ** power
    return out


@dataclass(frozen=True)
class PowerNonlinearity:
    """g(u) = coupling |u|^power u.

    The derivative pair is dz g = coupling (1 + power/2) |u|^power and
    dzbar g = coupling (power/2) |u|^(power-2) u^2, both extended by zero
    at the origin, so |g'(u)| = |coupling| (1 + power) |u|^power exactly.
    """

    coupling: complex = 1.0
    power: float = 2.0

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")

    @classmethod
    def from_params(cls, params) -> "PowerNonlinearity":
        return cls(coupling=complex(params.coupling),
                   power=float(params.power))

    @property
    def growth_const(self) -> float:
        return 0.0

    @property
    def growth_coeff(self) -> float:
        return abs(complex(self.coupling)) * (1.0 + self.power)

    def g(self, values):
        values = np.asarray(values, dtype=complex)
        return self.coupling * np.abs(values) ** self.power * values

    def dz(self, values):
        values = np.asarray(values, dtype=complex)
        scale = self.coupling * (1.0 + 0.5 * self.power)
        return scale * np.abs(values) ** self.power + 0.0j

    def dzbar(self, values):
        scale = self.coupling * 0.5 * self.power
        return scale * _phase_square(values, self.power)


@dataclass(frozen=True)
class GeneralNonlinearity:
    """C1 map C -> C with g(0) = 0, given by sampled callables.

    gfun, dzfun and dzbarfun evaluate the map and its Wirtinger derivative
    pair on complex arrays.  growth_const and growth_coeff are the envelope
    constants A and B in |g'(u)| <= A + B |u|^power; they are stored claims,
    checked by sampling (`check_growth`), not derived from the callables.
    """

    gfun: Callable
    dzfun: Callable
    dzbarfun: Callable
    power: float
    growth_const: float = 0.0
    growth_coeff: float = 1.0

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if self.growth_const < 0 or self.growth_coeff < 0:
            raise ValueError("envelope constants must be nonnegative")
        origin = np.abs(np.asarray(self.gfun(np.zeros(1, dtype=complex))))
        if not float(origin[0]) <= 1e-12:
            raise ValueError("the map must vanish at the origin")

    def g(self, values):
        values = np.asarray(values, dtype=complex)
        return np.asarray(self.gfun(values), dtype=complex)

    def dz(self, values):
        values = np.asarray(values, dtype=complex)
        return np.asarray(self.dzfun(values), dtype=complex)

    def dzbar(self, values):
        values = np.asarray(values, dtype=complex)
        return np.asarray(self.dzbarfun(values), dtype=complex)

    def check_growth(self, samples, slack: float = 1e-12) -> int:
        """Number of samples where |g'| exceeds the stored envelope."""
        z = np.asarray(samples, dtype=complex)
        bound = self.growth_const + self.growth_coeff * np.abs(z) ** self.power
        return int(np.count_nonzero(
            derivative_envelope(self, z) > bound * (1.0 + slack)))


Nonlinearity = Union[PowerNonlinearity, GeneralNonlinearity]


def as_general(nl: Nonlinearity) -> GeneralNonlinearity:
    """View any nonlinearity through the sampled-callable interface."""
    if isinstance(nl, GeneralNonlinearity):
        return nl
    return GeneralNonlinearity(gfun=nl.g, dzfun=nl.dz, dzbarfun=nl.dzbar,
                               power=nl.power,
                               growth_const=nl.growth_const,
                               growth_coeff=nl.growth_coeff)


@dataclass(frozen=True)
class SplitNonlinearity:
    """A map written as bounded_part + power_part.

    bounded_part has a globally bounded derivative pair (envelope with
    growth_coeff = 0); power_part's derivative vanishes near the origin
    and obeys a pure-power envelope (growth_const = 0).  The sum quacks
    like a single nonlinearity.
    """

    bounded_part: GeneralNonlinearity
    power_part: GeneralNonlinearity

    @property
    def power(self) -> float:
        return self.power_part.power

    @property
    def growth_const(self) -> float:
        return self.bounded_part.growth_const

    @property
    def growth_coeff(self) -> float:
        return self.power_part.growth_coeff

    def g(self, values):
        return self.bounded_part.g(values) + self.power_part.g(values)

    def dz(self, values):
        return self.bounded_part.dz(values) + self.power_part.dz(values)

    def dzbar(self, values):
        return self.bounded_part.dzbar(values) + self.power_part.dzbar(values)


def apply_g(f: Field, nl: Nonlinearity) -> Field:
    """Pointwise image of a field under the nonlinearity."""
    return Field(f.grid, nl.g(f.values))


def derivative_envelope(nl, values) -> np.ndarray:
    """|dz g| + |dzbar g| pointwise: the derivative magnitude that the
    growth hypothesis bounds."""
    return np.abs(nl.dz(values)) + np.abs(nl.dzbar(values))


def wirtinger(z: complex, nl: Nonlinearity) -> tuple[complex, complex]:
    """Derivative pair (dz g, dzbar g) at one point."""
    arr = np.asarray(z, dtype=complex).reshape(-1)
    return complex(nl.dz(arr)[0]), complex(nl.dzbar(arr)[0])


@lru_cache(maxsize=8)
def _gauss_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1], read-only."""
    if n < 2:
        raise ValueError(f"need at least 2 quadrature nodes, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def difference_identity_residual(z1: complex, z2: complex, nl: Nonlinearity,
                                 n_theta: int = 64) -> float:
    """Residual of the segment-integral reconstruction of g(z1) - g(z2):

        g(z1) - g(z2) = (z1-z2) int_0^1 dz g(z2 + t(z1-z2)) dt
                      + conj(z1-z2) int_0^1 dzbar g(z2 + t(z1-z2)) dt,

    with the integrals evaluated by Gauss-Legendre quadrature.  The
    residual decays at the quadrature's rate when the segment stays away
    from the origin (where fractional powers lose smoothness)."""
    nodes, weights = _gauss_unit(n_theta)
    gap = complex(z1) - complex(z2)
    path = complex(z2) + nodes * gap
    rhs = gap * np.sum(weights * nl.dz(path)) \
        + np.conj(gap) * np.sum(weights * nl.dzbar(path))
    lhs = complex(nl.g(np.asarray(z1, dtype=complex).reshape(-1))[0]) \
        - complex(nl.g(np.asarray(z2, dtype=complex).reshape(-1))[0])
    return abs(lhs - rhs)


# -------------------------------------------------- pointwise power bounds

def _pointwise_sides(z1, z2, alpha: float):
    """Left sides and bounds of the two pointwise power inequalities.

    modulus part:  | |z1|^a - |z2|^a |
    phase part:    | |z1|^(a-2) z1^2 - |z2|^(a-2) z2^2 |
    against |z1-z2|^a with constants 1 and 9 for a <= 1, and against
    (|z1|^(a-1) + |z2|^(a-1)) |z1-z2| with constants a and 5 for a >= 1.
    """
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    m1 = np.abs(z1)
    m2 = np.abs(z2)
    modulus_lhs = np.abs(m1 ** alpha - m2 ** alpha)
    phase_lhs = np.abs(_phase_square(z1, alpha) - _phase_square(z2, alpha))
    gap = np.abs(z1 - z2)
    if alpha <= 1.0:
        base = gap ** alpha
        return modulus_lhs, base, phase_lhs, 9.0 * base
    base = (m1 ** (alpha - 1.0) + m2 ** (alpha - 1.0)) * gap
    return modulus_lhs, alpha * base, phase_lhs, 5.0 * base


@dataclass(frozen=True)
class PointwiseReport:
    """Both pointwise inequalities evaluated at one pair."""

    modulus_lhs: float
    modulus_bound: float
    phase_lhs: float
    phase_bound: float

    @property
    def satisfied(self) -> bool:
        slack = 1.0 + 1e-12  # equality cases up to roundoff
        return (self.modulus_lhs <= self.modulus_bound * slack
                and self.phase_lhs <= self.phase_bound * slack)


def check_pointwise_power(z1: complex, z2: complex,
                          alpha: float) -> PointwiseReport:
    """Evaluate the two pointwise power inequalities at a pair of points."""
    if not alpha > 0:
        raise ValueError(f"power must be positive, got {alpha}")
    ml, mb, pl, pb = _pointwise_sides(z1, z2, alpha)
    return PointwiseReport(modulus_lhs=float(ml), modulus_bound=float(mb),
                           phase_lhs=float(pl), phase_bound=float(pb))


def count_pointwise_violations(z1, z2, alpha: float,
                               slack: float = 1e-12) -> tuple[int, int]:
    """Violation counts (modulus part, phase part) over paired samples."""
    if not alpha > 0:
        raise ValueError(f"power must be positive, got {alpha}")
    ml, mb, pl, pb = _pointwise_sides(z1, z2, alpha)
    return (int(np.count_nonzero(ml > mb * (1.0 + slack))),
            int(np.count_nonzero(pl > pb * (1.0 + slack))))


# ------------------------------------------------------ remainder functional

def _check_difference_exponents(s: float, p: float, q: float, r: float,
                                power: float) -> float:
    """Validate the exponent quadruple and return the companion Lebesgue
    order sigma defined by power/sigma = 1/p - 1/r."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"difference smoothness needs 0 < s < 1, got {s}")
    if not 1.0 <= q < np.inf:
        raise ValueError(f"summability needs 1 <= q < inf, got {q}")
    if not 1.0 <= p < np.inf:
        raise ValueError(f"inner exponent needs 1 <= p < inf, got {p}")
    if not p < r:
        raise ValueError(
            f"need p < r so the companion order is positive, got ({p}, {r})")
    inv_gap = 1.0 / p - (0.0 if np.isinf(r) else 1.0 / r)
    return power / inv_gap


def remainder_K(u: Field, v: Field, nl: Nonlinearity, s: float, p: float,
                q: float, r: float, theta_nodes: int = 64,
                quad: Optional[ShellQuadrature] = None) -> float:
    """Lower-order remainder of the Besov difference bound.

    For each offset y, the integrand is u's translation increment times
    the gap between the segment-averaged derivative pairs of v and of u;
    its L^p norms are combined across offsets with the |y|^(-N-sq) kernel
    exactly like the finite-difference norm of smoothness s.  The result
    is zero when v = u (the gap vanishes identically) and also when u = 0
    (the increment does), and it decays as v -> u in the companion
    Lebesgue norm of order power/(1/p - 1/r)."""
    if u.grid is not v.grid and u.grid != v.grid:
        raise ValueError("fields live on different grids")
    _check_difference_exponents(s, p, q, r, nl.power)
    grid = u.grid
    if quad is None:
        quad = ShellQuadrature()
    offsets, weights, radii = quad.offsets_weights(grid)
    nodes, wts = _gauss_unit(theta_nodes)
    theta = nodes.reshape((-1,) + (1,) * grid.dim)
    uhat = np.fft.fftn(u.values)
    vhat = np.fft.fftn(v.values)
    norms = np.empty(len(offsets))
    for i, y in enumerate(offsets):
        phase = np.zeros(grid.shape)
        for ka, ya in zip(grid.wavenumber_arrays, y):
            phase = phase + ka * ya
        shift = np.exp(-1j * phase)
        inc_u = np.fft.ifftn(uhat * shift) - u.values
        inc_v = np.fft.ifftn(vhat * shift) - v.values
        path_u = u.values[None] + theta * inc_u[None]
        path_v = v.values[None] + theta * inc_v[None]
        dz_gap = np.tensordot(wts, nl.dz(path_v) - nl.dz(path_u), axes=(0, 0))
        dzbar_gap = np.tensordot(wts, nl.dzbar(path_v) - nl.dzbar(path_u),
                                 axes=(0, 0))
        residual = inc_u * dz_gap + np.conj(inc_u) * dzbar_gap
        norms[i] = lebesgue_norm(Field(grid, residual), p)
    top = float(norms.max())
    if top == 0.0:
        return 0.0
    kernel = radii ** (-grid.dim - s * q) * weights
    total = float(np.sum((norms / top) ** q * kernel))
    return top * total ** (1.0 / q)


@dataclass(frozen=True)
class DifferenceExponents:
    """Exponent bundle (s, p, q, r) for the difference bound.

    p < r is required; the companion Lebesgue order for a map of a given
    power is sigma(power) = power / (1/p - 1/r), possibly below one (the
    quasi-norm convention applies there).
    """

    s: float
    p: float
    q: float
    r: float

    def sigma(self, power: float) -> float:
        return _check_difference_exponents(self.s, self.p, self.q, self.r,
                                           power)


@dataclass(frozen=True)
class DifferenceReport:
    """Both sides of the difference bound in the finite-difference norm.

    lhs is the smoothness norm of g(v) - g(u) at integrability p; the
    bound's shape is C * lipschitz_term + k_term with a single calibrated
    constant C (the coupling and derivative constants are absorbed by C).
    refined_term carries the sharper power-map right-hand side when it
    applies, without its own constant.
    """

    lhs: float
    lipschitz_term: float
    k_term: float
    sigma: float
    refined_term: Optional[float] = None


def besov_difference_report(u: Field, v: Field, nl: Nonlinearity,
                            exps: DifferenceExponents,
                            theta_nodes: int = 64,
                            quad: Optional[ShellQuadrature] = None
                            ) -> DifferenceReport:
    """Evaluate the difference bound's pieces on one pair of fields:

        lhs            = || g(v) - g(u) ||  at (s, p, q),
        lipschitz_term = ||v||_sigma^power * || v - u ||  at (s, r, q),
        k_term         = the remainder functional.

    All smoothness norms are finite-difference norms sharing one offset
    quadrature, so the three numbers are directly comparable.  For the
    power map the refined right-hand side is evaluated too: the extra
    term is ||u|| at (s, r, q) times ||v - u||_sigma^power for power <= 1,
    and times (||u||_sigma^(power-1) + ||v||_sigma^(power-1)) ||v - u||_sigma
    for power >= 1."""
    sigma = exps.sigma(nl.power)
    if quad is None:
        quad = ShellQuadrature()
    spec_p = NormSpec("besov_fd", s=exps.s, p=exps.p, q=exps.q,
                      homogeneous=True)
    spec_r = NormSpec("besov_fd", s=exps.s, p=exps.r, q=exps.q,
                      homogeneous=True)
    image_gap = apply_g(v, nl) - apply_g(u, nl)
    lhs = besov_norm_fd(image_gap, spec_p, quad)
    gap_smooth = besov_norm_fd(v - u, spec_r, quad)
    v_sigma = lebesgue_norm(v, sigma)
    lipschitz_term = v_sigma ** nl.power * gap_smooth
    k_term = remainder_K(u, v, nl, exps.s, exps.p, exps.q, exps.r,
                         theta_nodes=theta_nodes, quad=quad)
    refined = None
    if isinstance(nl, PowerNonlinearity):
        u_smooth = besov_norm_fd(u, spec_r, quad)
        gap_sigma = lebesgue_norm(v - u, sigma)
        if nl.power <= 1.0:
            extra = u_smooth * gap_sigma ** nl.power
        else:
            u_sigma = lebesgue_norm(u, sigma)
            extra = u_smooth * (u_sigma ** (nl.power - 1.0)
                                + v_sigma ** (nl.power - 1.0)) * gap_sigma
        refined = lipschitz_term + extra
    return DifferenceReport(lhs=lhs, lipschitz_term=lipschitz_term,
                            k_term=k_term, sigma=sigma, refined_term=refined)


# ------------------------------------------------------------------ splitting

@lru_cache(maxsize=1)
def _profile_slope() -> float:
    """Sampled sup of |d/dr transition_profile| over the transition."""
    r = np.linspace(0.5, 1.0, 8193)
    return float(np.max(np.abs(transition_profile_derivative(r))))


def _windowed(general: GeneralNonlinearity, cutoff: float,
              keep_inside: bool):
    """Callable triple for g times the radial window chi(|z|/cutoff)
    (keep_inside) or its complement 1 - chi."""
    sign = 1.0 if keep_inside else -1.0

    def window(t):
        chi = transition_profile(t)
        return chi if keep_inside else 1.0 - chi

    def gfun(z):
        z = np.asarray(z, dtype=complex)
        return general.g(z) * window(np.abs(z) / cutoff)

    def correction(z, out, conjugate):
        # d/dz of the window contributes g * chi' * zbar / (2 c |z|);
        # d/dzbar the same with z in place of zbar.  chi' vanishes off
        # the transition band, which keeps |z| safely positive.
        t = np.abs(z) / cutoff
        dchi = transition_profile_derivative(t)
        mask = dchi != 0.0
        if np.any(mask):
            zm = z[mask]
            factor = np.conj(zm) if conjugate else zm
            out[mask] = out[mask] + sign * general.g(zm) * dchi[mask] \
                * factor / (2.0 * cutoff * np.abs(zm))
        return out

    def dzfun(z):
        z = np.asarray(z, dtype=complex)
        out = general.dz(z) * window(np.abs(z) / cutoff)
        return correction(z, out, conjugate=True)

    def dzbarfun(z):
        z = np.asarray(z, dtype=complex)
        out = general.dzbar(z) * window(np.abs(z) / cutoff)
        return correction(z, out, conjugate=False)

    return gfun, dzfun, dzbarfun


def split(nl: Nonlinearity, cutoff: float) -> SplitNonlinearity:
    """Write g as a bounded-slope part plus a pure-power part.

    A smooth radial switch at scale `cutoff` (one below cutoff/2, zero
    above cutoff) multiplies g to give the bounded part; the complement's
    derivative is supported on |z| >= cutoff/2, where the constant part of
    the envelope is dominated by a multiple of |z|^power.  Both parts
    vanish at the origin and sum back to g exactly.  The stored envelope
    constants are provable bounds, not sampled fits.  A map already in
    pure-power form (growth_const = 0) splits into zero plus itself."""
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    general = as_general(nl)
    if general.growth_const == 0.0:
        zero = GeneralNonlinearity(
            gfun=lambda z: np.zeros_like(z),
            dzfun=lambda z: np.zeros_like(z),
            dzbarfun=lambda z: np.zeros_like(z),
            power=general.power, growth_const=0.0, growth_coeff=0.0)
        return SplitNonlinearity(bounded_part=zero, power_part=general)
    slope = _profile_slope()
    a, b = general.growth_const, general.growth_coeff
    alpha = general.power
    g1fun, dz1, dzbar1 = _windowed(general, cutoff, keep_inside=True)
    bounded = GeneralNonlinearity(
        gfun=g1fun, dzfun=dz1, dzbarfun=dzbar1, power=alpha,
        growth_const=(a + b * cutoff ** alpha) * (1.0 + slope),
        growth_coeff=0.0)
    g2fun, dz2, dzbar2 = _windowed(general, cutoff, keep_inside=False)
    power_part = GeneralNonlinearity(
        gfun=g2fun, dzfun=dz2, dzbarfun=dzbar2, power=alpha,
        growth_const=0.0,
        growth_coeff=(a * (2.0 / cutoff) ** alpha + b) * (1.0 + slope))
    return SplitNonlinearity(bounded_part=bounded, power_part=power_part)
