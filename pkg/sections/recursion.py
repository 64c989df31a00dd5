"""The h-recurrence, breakdown detection and the section constants mu_N."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from sections import kernels
from sections.errors import BracketError, PreconditionError
from sections.weights import DEFAULT_BLOCK, WeightConstants, WeightSequence

logger = logging.getLogger(__name__)

TOL_FACTOR = 1e-14
MAX_ITERATIONS = 200
UPPER_BACKOFF = 2.0 ** -40

_NO_RECORD = np.empty(0)


def _check_mu(mu: float) -> None:
    if not (math.isfinite(mu) and mu > 0):
        raise PreconditionError(f"mu must be a positive finite number, got {mu!r}")


def _threshold(seq: WeightSequence, k: int, log_mu: float) -> float:
    return log_mu + math.log(seq.prefix(k) / seq.lam(k))


def h_step(seq: WeightSequence, k: int, h_k: float, mu: float) -> Optional[float]:
    """h_{k+1} from h_k, or ``None`` when h_k has reached the breakdown threshold."""
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    if not math.isfinite(h_k):
        raise PreconditionError(f"h_{k} is not finite: {h_k!r}")
    _check_mu(mu)
    threshold = _threshold(seq, k, math.log(mu))
    if h_k >= threshold:
        return None
    lam_k, lam_next = seq.lam(k), seq.lam(k + 1)
    shrink = seq.prefix(k) / seq.prefix(k + 1)
    return shrink * (h_k - math.log(lam_next / lam_k) - math.log(-math.expm1(h_k - threshold)))


@dataclass
class HTrace:
    mu: float
    values: np.ndarray
    breakdown_at: Optional[int] = None
    cap_reached: bool = False

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "values": self.values.tolist(),
            "breakdown_at": self.breakdown_at,
            "cap_reached": self.cap_reached,
        }


def h_trace(seq: WeightSequence, mu: float, m: int) -> HTrace:
    """h_1..h_m at ``mu``, truncated at the first breakdown index."""
    if m < 1:
        raise PreconditionError(f"m must be >= 1, got {m}")
    _check_mu(mu)
    log_mu = math.log(mu)
    lam, Lam = seq.arrays(m)
    out = np.empty(m)
    i, h = kernels.advance(lam, Lam, log_mu, 0.0, out)
    if i < m - 1:
        return HTrace(mu, out[:i + 1].copy(), breakdown_at=i + 1)
    if h >= log_mu + math.log(Lam[m - 1] / lam[m - 1]):
        return HTrace(mu, out, breakdown_at=m)
    return HTrace(mu, out, cap_reached=True)


@dataclass
class BreakdownResult:
    mu: float
    index: Optional[int]
    cap: int

    @property
    def infinite(self) -> bool:
        return self.index is None

    def to_dict(self) -> dict:
        return {"mu": self.mu, "index": self.index, "infinite": self.infinite, "cap": self.cap}


def _scan(seq: WeightSequence, log_mu: float, stop: int,
          block_size: int) -> Tuple[Optional[int], float, float]:
    """Run the recurrence over 1..stop.

    Returns ``(index, h, threshold)``: the breakdown index (or ``None``), and
    h with its breakdown threshold at that index, or at ``stop`` when none.
    """
    h = 0.0
    threshold = log_mu
    for k0, lam, Lam in seq.blocks(stop, block_size):
        i, h = kernels.advance(lam, Lam, log_mu, h, _NO_RECORD)
        if i < lam.shape[0] - 1:
            return k0 + i, h, log_mu + math.log(Lam[i] / lam[i])
        threshold = log_mu + math.log(Lam[-1] / lam[-1])
    if h >= threshold:
        return stop, h, threshold
    return None, h, threshold


def breakdown_index(seq: WeightSequence, mu: float, cap: int,
                    block_size: int = DEFAULT_BLOCK) -> BreakdownResult:
    """Smallest k <= cap at which the recurrence breaks down at ``mu``."""
    if cap < 1:
        raise PreconditionError(f"cap must be >= 1, got {cap}")
    _check_mu(mu)
    if mu <= 1:
        return BreakdownResult(mu, 1, cap)
    stop = cap if seq.length is None else min(cap, seq.length)
    index, _, _ = _scan(seq, math.log(mu), stop, block_size)
    logger.debug(f"[RECURSION] breakdown {seq.spec} mu={mu!r}: {index if index else 'INF'} (cap {cap})")
    return BreakdownResult(mu, index, cap)


def h_final(seq: WeightSequence, mu: float, N: int, block_size: int = DEFAULT_BLOCK) -> float:
    """Sign function h_N(mu) - log(mu Lambda_N / lambda_N); +inf on breakdown before N."""
    if N < 1:
        raise PreconditionError(f"N must be >= 1, got {N}")
    _check_mu(mu)
    index, h, threshold = _scan(seq, math.log(mu), N, block_size)
    if index is not None and index < N:
        return math.inf
    return h - threshold


@dataclass
class SectionConstant:
    N: int
    mu_N: float
    residual: float
    bracket_width: float
    iterations: int
    lower: float = 1.0
    upper: float = 1.0
    history: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self, with_history: bool = False) -> dict:
        d = {
            "N": self.N,
            "mu_N": self.mu_N,
            "residual": self.residual,
            "bracket_width": self.bracket_width,
            "iterations": self.iterations,
            "lower": self.lower,
            "upper": self.upper,
        }
        if with_history:
            d["history"] = [list(pair) for pair in self.history]
        return d


def section_constant(seq: WeightSequence, consts: WeightConstants, N: int, lower: float = None,
                     tol_factor: float = TOL_FACTOR, max_iterations: int = MAX_ITERATIONS,
                     upper_backoff: float = UPPER_BACKOFF,
                     block_size: int = DEFAULT_BLOCK) -> SectionConstant:
    """Best constant mu_N of the N-term section, by bisection on the sign function.

    ``lower`` replaces 1 as the lower bracket end; it must lie below the root.
    """
    if N < 1:
        raise PreconditionError(f"N must be >= 1, got {N}")
    if N == 1:
        return SectionConstant(N=1, mu_N=1.0, residual=0.0, bracket_width=0.0, iterations=0)

    def sign(mu: float) -> float:
        return h_final(seq, mu, N, block_size)

    lo = 1.0 if lower is None else float(lower)
    hi = consts.e_M * (1.0 - upper_backoff)
    tol = tol_factor * consts.e_M
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo!r}, {hi!r}] for N={N}")
    s_hi = sign(hi)
    if not s_hi < 0:
        raise BracketError(
            f"sign function is {s_hi!r} >= 0 at the upper end {hi!r} for N={N} ({seq.spec})")
    s_lo = sign(lo)
    if not s_lo > 0:
        raise BracketError(
            f"sign function is {s_lo!r} <= 0 at the lower end {lo!r} for N={N} ({seq.spec})")

    best_mu, best_s = hi, s_hi
    if math.isfinite(s_lo) and abs(s_lo) < abs(best_s):
        best_mu, best_s = lo, s_lo
    history = [(lo, hi)]
    iterations = 0
    logger.debug(f"[RECURSION] bisecting {seq.spec} N={N} on [{lo!r}, {hi!r}]")
    while hi - lo > tol and iterations < max_iterations:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        s = sign(mid)
        iterations += 1
        if math.isfinite(s) and abs(s) < abs(best_s):
            best_mu, best_s = mid, s
        if s == 0:
            lo = hi = mid
        elif s > 0:
            lo = mid
        else:
            hi = mid
        history.append((lo, hi))

    result = SectionConstant(N=N, mu_N=best_mu, residual=best_s, bracket_width=hi - lo,
                             iterations=iterations, lower=lo, upper=hi, history=history)
    logger.info(f"[RECURSION] {seq.spec} mu_{N} = {best_mu:.17g} "
                f"(residual {best_s:.3g}, {iterations} iterations)")
    return result


def critical_sequence(seq: WeightSequence, consts: WeightConstants, K: int,
                      **kwargs) -> List[SectionConstant]:
    """mu_1..mu_K; each bisection starts from the previous lower bracket end."""
    if K < 1:
        raise PreconditionError(f"K must be >= 1, got {K}")
    out = [section_constant(seq, consts, 1, **kwargs)]
    for N in range(2, K + 1):
        previous = out[-1]
        out.append(section_constant(seq, consts, N, lower=previous.lower if N > 2 else None,
                                    **kwargs))
    return out
