"""The theta integral, the asymptotic laws for mu_N and N_mu, and residual fits."""

import logging
import math
from dataclasses import dataclass, asdict
from typing import Callable, Iterable, List, Sequence

import numpy as np
from scipy import integrate

from sections.errors import PreconditionError, QuadratureError
from sections.recursion import section_constant
from sections.weights import WeightConstants, WeightSequence

logger = logging.getLogger(__name__)

EPSABS = 1e-10
CUTOFF = 40.0
SQRT2_PI = math.sqrt(2.0) * math.pi


def _denominator(x, mu: float, M: float):
    return np.exp(x) / mu - x + M - 1.0


def _check_window(mu: float, M: float, strict_upper: bool) -> None:
    lo, hi = math.exp(M - 1.0), math.exp(M)
    upper_ok = mu < hi if strict_upper else mu <= hi
    if not (mu > lo and upper_ok):
        bound = "<" if strict_upper else "<="
        raise PreconditionError(f"need e^(M-1) < mu {bound} e^M, got mu={mu!r}, M={M!r}")


def _integrate(a: float, b: float, mu: float, M: float, epsabs: float) -> float:
    """Integral of 1/denominator over [a, b], split at its peak x = log mu."""
    if b <= a:
        return 0.0
    peak = math.log(mu)
    x_min = min(max(peak, a), b)
    d_min = _denominator(x_min, mu, M)
    if not d_min > 0:
        raise QuadratureError(
            f"denominator e^x/mu - x + M - 1 reaches {d_min!r} at x={x_min!r}")
    pieces = [a, x_min, b] if a < x_min < b else [a, b]
    total = 0.0
    for left, right in zip(pieces, pieces[1:]):
        value, _ = integrate.quad(lambda x: 1.0 / _denominator(x, mu, M), left, right,
                                  epsabs=epsabs, epsrel=1e-12, limit=500)
        total += value
    return total


def theta(y: float, mu: float, M: float, epsabs: float = EPSABS) -> float:
    """Integral from 0 to y of dx / (e^x/mu - x + M - 1)."""
    if not y >= 0:
        raise PreconditionError(f"y must be >= 0, got {y!r}")
    _check_window(mu, M, strict_upper=False)
    return _integrate(0.0, float(y), mu, M, epsabs)


def theta_infinity(mu: float, M: float, epsabs: float = EPSABS, cutoff: float = CUTOFF) -> float:
    """theta(inf): quadrature to log mu + cutoff plus the e^{-x} tail beyond it."""
    _check_window(mu, M, strict_upper=True)
    x_star = max(math.log(mu), 0.0) + cutoff
    return _integrate(0.0, x_star, mu, M, epsabs) + mu * math.exp(-x_star)


def quadratic_surrogate(mu: float, M: float) -> float:
    """sqrt(2) pi (log(e^M/mu))^{-1/2}, the closed form theta(inf) approaches."""
    gap = M - math.log(mu)
    if not gap > 0:
        raise PreconditionError(f"need mu < e^M, got mu={mu!r}, M={M!r}")
    return SQRT2_PI / math.sqrt(gap)


@dataclass
class AsymptoticPrediction:
    M: float
    C: float
    N: int
    mu_predicted: float
    leading_gap_coefficient: float

    def to_dict(self) -> dict:
        return asdict(self)


def predicted_mu(consts: WeightConstants, N: int) -> AsymptoticPrediction:
    if N < 2:
        raise PreconditionError(f"N must be >= 2, got {N}")
    coefficient = 2.0 * math.pi ** 2 * consts.e_M / consts.C ** 2
    mu = consts.e_M - coefficient / math.log(N) ** 2
    return AsymptoticPrediction(consts.M, consts.C, N, mu, coefficient)


def predicted_log_breakdown(consts: WeightConstants, mu: float) -> float:
    """(sqrt(2) pi / C) (log(e^M/mu))^{-1/2}, the predicted log N_mu."""
    if not mu > 0:
        raise PreconditionError(f"mu must be positive, got {mu!r}")
    return quadratic_surrogate(mu, consts.M) / consts.C


def _check_grid(grid: Sequence[int]) -> List[int]:
    grid = [int(n) for n in grid]
    if len(grid) < 4:
        raise PreconditionError(f"grid needs at least 4 values, got {len(grid)}")
    if grid[0] < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError("grid must be strictly increasing with N >= 2")
    if grid[-1] < 1000 * grid[0]:
        raise PreconditionError("grid must span at least three decades")
    return grid


def _section_mus(seq, consts, grid, map_fn, section_kwargs) -> np.ndarray:
    def solve(N: int) -> float:
        return section_constant(seq, consts, N, **section_kwargs).mu_N
    return np.array(list(map_fn(solve, grid)))


@dataclass
class ResidualFit:
    grid: np.ndarray
    mu_values: np.ndarray
    r_values: np.ndarray
    fitted_A: float
    fitted_B: float
    fit_rms: float
    target: float
    decreasing_gap: bool

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "mu_values": self.mu_values.tolist(),
            "r_values": self.r_values.tolist(),
            "fitted_A": self.fitted_A,
            "fitted_B": self.fitted_B,
            "fit_rms": self.fit_rms,
            "target": self.target,
            "decreasing_gap": self.decreasing_gap,
        }


def fit_residual(seq: WeightSequence, consts: WeightConstants, grid: Iterable[int],
                 map_fn: Callable = map, **section_kwargs) -> ResidualFit:
    """Least-squares fit of r(N) = (e^M - mu_N)(log N)^2 to A + B/log N.

    ``map_fn`` evaluates the grid points; pass an executor's ``map`` to run
    them in parallel.
    """
    grid = _check_grid(list(grid))
    mus = _section_mus(seq, consts, grid, map_fn, section_kwargs)
    logs = np.log(np.asarray(grid, dtype=float))
    r = (consts.e_M - mus) * logs ** 2
    design = np.column_stack([np.ones_like(logs), 1.0 / logs])
    (A, B), *_ = np.linalg.lstsq(design, r, rcond=None)
    rms = float(np.sqrt(np.mean((design @ np.array([A, B]) - r) ** 2)))
    target = 2.0 * math.pi ** 2 * consts.e_M / consts.C ** 2
    late = np.abs(r[np.asarray(grid) >= 1000] - target)
    decreasing = bool(late.size < 2 or np.all(np.diff(late) < 0))
    logger.info(f"[ASYMPTOTICS] {seq.spec}: A={A:.6g} B={B:.6g} rms={rms:.3g} target={target:.6g}")
    return ResidualFit(np.asarray(grid), mus, r, float(A), float(B), rms, target, decreasing)


@dataclass
class ThetaBand:
    grid: np.ndarray
    mu_values: np.ndarray
    theta_values: np.ndarray
    c_log_n: np.ndarray
    gaps: np.ndarray
    band_width: float
    monotone_growth: bool

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "mu_values": self.mu_values.tolist(),
            "theta_values": self.theta_values.tolist(),
            "c_log_n": self.c_log_n.tolist(),
            "gaps": self.gaps.tolist(),
            "band_width": self.band_width,
            "monotone_growth": self.monotone_growth,
        }


def theta_band(seq: WeightSequence, consts: WeightConstants, grid: Iterable[int],
               map_fn: Callable = map, epsabs: float = EPSABS, cutoff: float = CUTOFF,
               **section_kwargs) -> ThetaBand:
    """theta(inf; mu_N) against C log N along a grid of section lengths."""
    grid = [int(n) for n in grid]
    if not grid or any(n < 2 for n in grid):
        raise PreconditionError("grid needs section lengths N >= 2")
    mus = _section_mus(seq, consts, grid, map_fn, section_kwargs)
    thetas = np.array([theta_infinity(mu, consts.M, epsabs, cutoff) for mu in mus])
    c_log_n = consts.C * np.log(np.asarray(grid, dtype=float))
    gaps = thetas - c_log_n
    growth = bool(gaps.size > 1 and np.all(np.diff(np.abs(gaps)) > 0))
    return ThetaBand(np.asarray(grid), mus, thetas, c_log_n, gaps,
                     float(gaps.max() - gaps.min()), growth)
