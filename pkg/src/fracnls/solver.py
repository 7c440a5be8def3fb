"""Time integrators for the periodic model problem.

Two routes to a numerical solution of i u_t + Lap u + g(u) = 0:

* `picard_duhamel` iterates the integral form u = e^{itLap} phi
  + i int_0^t e^{i(t-s)Lap} g(u(s)) ds to a fixed point, measuring
  successive iterates in the mixed space-time metric L^gamma L^rho that
  the contraction argument is phrased in.  It converges only while the
  free evolution of the datum is small over the horizon, which is the
  regime the well-posedness theory covers; outside it the iteration
  diverges and says so.

* `split_step` is an independent reference integrator: Strang
  composition of the exact free flow with an exact closed-form solution
  of i u_t + g(u) = 0 for the power map.  It has no smallness
  restriction and serves as the oracle the fixed point is checked
  against.

Blow-up is only ever detected, never resolved: `detect_blowup` scans a
trajectory for the first Sobolev-norm threshold crossing.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .exponents import is_admissible
from .grid import Field, Grid
from .nonlinearity import Nonlinearity, PowerNonlinearity
from .spaces import NormSpec, sobolev_norm, spacetime_norm

__all__ = [
    "TimeGrid", "Trajectory", "PicardConfig", "IterationReport",
    "BlowUpError", "NonConvergenceError", "free_trajectory",
    "contraction_distance", "picard_duhamel", "split_step",
    "smallness_check", "detect_blowup",
]


class BlowUpError(RuntimeError):
    """An integrator left the finite range.

    `time` is the substep time at which the closed-form modulus equation
    degenerated, or None when the failure has no single time attached
    (overflow inside a fixed-point sweep).
    """

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class NonConvergenceError(RuntimeError):
    """The fixed-point iteration hit its cap before the tolerance.

    Carries the per-iteration `report` and the last iterate as
    `trajectory` so callers can inspect or flag the run.
    """

    def __init__(self, message: str, report: "IterationReport",
                 trajectory: "Trajectory"):
        super().__init__(message)
        self.report = report
        self.trajectory = trajectory


# ------------------------------------------------------------ time lattice


@dataclass(frozen=True)
class TimeGrid:
    """Uniform slices of [0, horizon]: t_m = m * dt, m = 0 .. slices."""

    horizon: float
    slices: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not isinstance(self.slices, (int, np.integer)) or self.slices < 2:
            raise ValueError(
                f"need an integer slice count >= 2, got {self.slices!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.slices

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.slices + 1)


@dataclass(frozen=True)
class Trajectory:
    """A field per time slice; slice 0 is the initial datum, bit for bit."""

    timegrid: TimeGrid
    slices: tuple

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        if len(self.slices) != self.timegrid.slices + 1:
            raise ValueError(
                f"expected {self.timegrid.slices + 1} slices, "
                f"got {len(self.slices)}")
        grid = self.slices[0].grid
        if any(f.grid != grid for f in self.slices):
            raise ValueError("all slices must share one grid")

    @property
    def grid(self) -> Grid:
        return self.slices[0].grid

    def field(self, m: int) -> Field:
        return self.slices[m]

    def stack(self) -> np.ndarray:
        """Slices as one array of shape (slices + 1,) + grid.shape."""
        return np.stack([f.values for f in self.slices])

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        if other.timegrid != self.timegrid:
            raise ValueError("trajectories live on different time grids")
        return Trajectory(self.timegrid,
                          tuple(a - b for a, b in zip(self.slices,
                                                      other.slices)))


def _free_stack(phi: Field, tg: TimeGrid) -> np.ndarray:
    """Free evolution of phi at every slice, slice 0 forced to the datum."""
    grid = phi.grid
    tcol = tg.times.reshape((-1,) + (1,) * grid.dim)
    phases = np.exp(-1j * tcol * grid.wavenumber_square)
    axes = tuple(range(1, grid.dim + 1))
    out = np.fft.ifftn(phases * np.fft.fftn(phi.values), axes=axes)
    out[0] = phi.values
    return out


def _wrap(grid: Grid, tg: TimeGrid, stacked: np.ndarray) -> Trajectory:
    return Trajectory(tg, tuple(Field(grid, row) for row in stacked))


def free_trajectory(phi: Field, tg: TimeGrid) -> Trajectory:
    """Trajectory of the free group e^{itLap} phi on the slice times."""
    return _wrap(phi.grid, tg, _free_stack(phi, tg))


# -------------------------------------------------------------- fixed point


@dataclass(frozen=True)
class PicardConfig:
    """Knobs of the fixed-point iteration.

    metric_pair is the (gamma, rho) of the contraction metric
    L^gamma((0,T), L^rho); it must be admissible in the grid dimension.
    The stopping rule is relative to the first increment: iterate until
    d(u^{k+1}, u^k) <= tol * max(1, d(u^1, u^0)).  smallness_delta is the
    free-evolution threshold callers compare `smallness_check` against
    before trusting the iteration with a horizon.
    """

    metric_pair: tuple
    tol: float = 1e-10
    max_iter: int = 40
    smallness_delta: float = 0.1

    def __post_init__(self):
        gamma, rho = self.metric_pair
        object.__setattr__(self, "metric_pair", (float(gamma), float(rho)))
        if not (gamma >= 2 and rho >= 2):
            raise ValueError(
                f"metric pair must sit in [2, inf), got {self.metric_pair}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.smallness_delta > 0:
            raise ValueError("smallness_delta must be positive, "
                             f"got {self.smallness_delta}")


@dataclass(frozen=True)
class IterationReport:
    """Per-iteration contraction distances d(u^{k+1}, u^k)."""

    distances: tuple
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(self.distances))

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> tuple:
        """Consecutive distance quotients; geometric once contraction sets in."""
        return tuple(b / a for a, b in zip(self.distances, self.distances[1:])
                     if a > 0.0)


def contraction_distance(u: Trajectory, v: Trajectory, pair) -> float:
    """d(u, v) = || u - v ||_{L^gamma((0,T), L^rho)}."""
    gamma, rho = pair
    return spacetime_norm(u - v, gamma, NormSpec("lebesgue", p=rho))


def picard_duhamel(phi: Field, nl: Nonlinearity, tg: TimeGrid,
                   cfg: PicardConfig):
    """Fixed point of the integral form, iterated from the free evolution.

    Each sweep evaluates u^{k+1}(t_m) = e^{i t_m Lap} phi
    + i int_0^{t_m} e^{i (t_m - s) Lap} g(u^k(s)) ds with trapezoidal
    quadrature over the stored slices; the running sums share one set of
    spectral multipliers, so a sweep costs O(slices) transforms.  The
    two-thirds rule is applied to g(u^k) to keep the quadratic and
    higher interactions from aliasing back into the resolved band.

    Returns (trajectory, report).  Raises NonConvergenceError when
    max_iter sweeps do not reach the relative tolerance (the usual cause
    is a horizon too large for the contraction regime) and BlowUpError
    when an iterate overflows into non-finite values.
    """
    grid = phi.grid
    gamma, rho = cfg.metric_pair
    if not is_admissible(gamma, rho, grid.dim):
        raise ValueError(
            f"metric pair {cfg.metric_pair} is not admissible in "
            f"dimension {grid.dim}")
    axes = tuple(range(1, grid.dim + 1))
    tcol = tg.times.reshape((-1,) + (1,) * grid.dim)
    unwind = np.exp(1j * tcol * grid.wavenumber_square)
    rewind = np.exp(-1j * tcol * grid.wavenumber_square)
    keep = grid.dealias_mask
    phihat = np.fft.fftn(phi.values)

    current = np.fft.ifftn(rewind * phihat, axes=axes)
    current[0] = phi.values
    distances = []
    first = None
    converged = False
    for _ in range(cfg.max_iter):
        # divergence is detected below, not warned about mid-sweep
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            ghat = np.fft.fftn(nl.g(current), axes=axes) * keep
            integrand = unwind * ghat
            running = np.cumsum(integrand, axis=0)
            integral = tg.dt * (running
                                - 0.5 * integrand[0] - 0.5 * integrand)
            new = np.fft.ifftn(rewind * (phihat + 1j * integral), axes=axes)
        new[0] = phi.values
        if not np.all(np.isfinite(new.view(float))):
            raise BlowUpError("fixed-point iterate overflowed; the datum "
                              "or horizon is outside the contraction regime")
        dist = spacetime_norm(_wrap(grid, tg, new - current), gamma,
                              NormSpec("lebesgue", p=rho))
        distances.append(dist)
        if first is None:
            first = dist
        current = new
        if dist <= cfg.tol * max(1.0, first):
            converged = True
            break
    report = IterationReport(tuple(distances), converged)
    trajectory = _wrap(grid, tg, current)
    if not converged:
        raise NonConvergenceError(
            f"no contraction after {cfg.max_iter} sweeps "
            f"(last increment {distances[-1]:.3e}); shrink the horizon",
            report, trajectory)
    return trajectory, report


# --------------------------------------------------------------- split step


def _power_substep(values: np.ndarray, lam: complex, alpha: float,
                   dt: float, at_time: float) -> np.ndarray:
    """Exact solution of i u_t + lam |u|^alpha u = 0 over one substep.

    The modulus obeys d|u|^2/dt = -2 Im(lam) |u|^(alpha+2), a separable
    equation with closed form |u(dt)| = |u0| (1 + w)^(-1/alpha) for
    w = alpha Im(lam) |u0|^alpha dt; the phase advances by
    Re(lam) |u0|^alpha dt * log1p(w)/w.  Im(lam) < 0 pumps the modulus
    and reaches the pole when 1 + w <= 0.
    """
    mag = np.abs(values) ** alpha
    if lam.imag == 0.0:
        return values * np.exp(1j * (lam.real * dt) * mag)
    w = (alpha * lam.imag * dt) * mag
    floor = 1.0 + w
    if np.any(floor <= 0.0):
        raise BlowUpError("modulus equation blew up inside a substep",
                          time=at_time)
    out = values * floor ** (-1.0 / alpha)
    if lam.real != 0.0:
        safe = np.where(w == 0.0, 1.0, w)
        ramp = np.where(w == 0.0, 1.0, np.log1p(w) / safe)
        out = out * np.exp(1j * (lam.real * dt) * mag * ramp)
    return out


def split_step(phi: Field, nl: PowerNonlinearity, horizon: float,
               dt: float) -> Trajectory:
    """Strang splitting: half free flow, exact power substep, half free flow.

    Both substeps are exact, so the only error is the order-2 splitting
    error; for a single Fourier mode the two flows commute and the
    composition is exact.  The requested dt is rounded to an integer
    number of slices of the horizon.  For real coupling the power
    substep leaves the modulus untouched pointwise and the free flow is
    unitary, so the L^2 norm is conserved to rounding.
    """
    if not isinstance(nl, PowerNonlinearity):
        raise TypeError("the closed-form substep needs the pure power map")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tg = TimeGrid(horizon, max(2, int(round(horizon / dt))))
    h = tg.dt
    grid = phi.grid
    half = np.exp(-0.5j * h * grid.wavenumber_square)
    lam = complex(nl.coupling)
    alpha = float(nl.power)
    work = np.array(phi.values, dtype=complex)
    rows = [work.copy()]
    for m in range(tg.slices):
        work = np.fft.ifftn(half * np.fft.fftn(work))
        work = _power_substep(work, lam, alpha, h, (m + 0.5) * h)
        work = np.fft.ifftn(half * np.fft.fftn(work))
        rows.append(work.copy())
    return _wrap(grid, tg, np.stack(rows))


# ---------------------------------------------------------------- heuristics


def smallness_check(phi: Field, tg: TimeGrid, cfg: PicardConfig,
                    params) -> float:
    """Size of the free evolution in L^gamma((0, T), B^s_{rho, 2}).

    The fixed point is guaranteed on [0, T] only while this stays below
    the configured smallness threshold; the value is monotone
    nondecreasing in T and exactly degree-1 homogeneous in phi.  params
    supplies the smoothness order s (ProblemParams.regularity).
    """
    gamma, rho = cfg.metric_pair
    spec = NormSpec("besov_lp", s=float(params.regularity), p=rho, q=2.0)
    return spacetime_norm(free_trajectory(phi, tg), gamma, spec)


def detect_blowup(traj: Trajectory, threshold: float,
                  regularity: float) -> Optional[float]:
    """First slice time with Sobolev norm above threshold, if any.

    A heuristic proxy for leaving the maximal existence interval; the
    threshold must exceed the initial norm so a constant-norm flow never
    triggers.
    """
    norms = [sobolev_norm(traj.field(m), regularity)
             for m in range(traj.timegrid.slices + 1)]
    if not threshold > norms[0]:
        raise ValueError(
            f"threshold {threshold} does not exceed the initial norm "
            f"{norms[0]:.6g}")
    for t, val in zip(traj.timegrid.times, norms):
        if val > threshold:
            return float(t)
    return None
