"""Extremal vectors of the N-term section: reconstruction, stationarity and an oracle."""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from sections import kernels
from sections.errors import ExtremalError, PreconditionError
from sections.recursion import h_trace
from sections.weights import WeightSequence

logger = logging.getLogger(__name__)


@dataclass
class OracleSettings:
    max_n: int = 8
    grid_n: int = 3
    coarse_mesh: float = 1e-2
    fine_mesh: float = 1e-4
    stall_window: int = 100
    stall_tol: float = 1e-12
    max_iter: int = 20000

    @classmethod
    def from_dict(cls, data: dict) -> "OracleSettings":
        known = {k: v for k, v in (data or {}).items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class ExtremalVector:
    N: int
    a: np.ndarray
    G: np.ndarray
    objective: float
    mu: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "a": self.a.tolist(),
            "G": self.G.tolist(),
            "objective": self.objective,
            "mu": self.mu,
        }


def _geometric_means(lam: np.ndarray, Lam: np.ndarray, log_a: np.ndarray) -> np.ndarray:
    """G_n = exp(sum_{k<=n} lambda_k log a_k / Lambda_n), summed with compensation."""
    cum = np.empty_like(log_a)
    kernels.compensated_cumsum(lam * log_a, 0.0, 0.0, cum)
    return np.exp(cum / Lam)


def _tail_sums(G: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    """sum_{n>=k} G_n / Lambda_n for every k."""
    return np.cumsum((G / Lam)[::-1])[::-1]


def _positive_log(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise PreconditionError("a must be a non-empty vector")
    if not np.all(np.isfinite(a) & (a > 0)):
        raise PreconditionError("every a_k must be positive and finite")
    return np.log(a)


def _from_log(seq: WeightSequence, log_a: np.ndarray, mu: float = None) -> ExtremalVector:
    log_a = log_a - logsumexp(log_a)
    N = log_a.size
    lam, Lam = seq.arrays(N)
    G = _geometric_means(lam, Lam, log_a)
    return ExtremalVector(N=N, a=np.exp(log_a), G=G, objective=math.fsum(G), mu=mu)


def extremal_from_weights(seq: WeightSequence, a) -> ExtremalVector:
    """Normalise a positive vector onto the simplex and evaluate its geometric means."""
    return _from_log(seq, _positive_log(a))


def carleman_quotient(seq: WeightSequence, a) -> float:
    """sum G_n(a) / sum a_n for any positive a."""
    log_a = _positive_log(a)
    lam, Lam = seq.arrays(log_a.size)
    return math.fsum(_geometric_means(lam, Lam, log_a)) / math.fsum(np.exp(log_a))


def reconstruct_extremal(seq: WeightSequence, mu_N: float, N: int) -> ExtremalVector:
    """Optimising vector at mu_N, propagated forward from the h-trace.

    Uses G_k = a_k e^{h_k}, so a_{k+1}/lambda_{k+1} = a_k/lambda_k - G_k/(mu_N Lambda_k)
    becomes a step in log a_k that never forms the products of small a_k.
    """
    if N < 1:
        raise PreconditionError(f"N must be >= 1, got {N}")
    trace = h_trace(seq, mu_N, N)
    if trace.breakdown_at is not None and trace.breakdown_at < N:
        raise ExtremalError(
            f"recurrence breaks down at k={trace.breakdown_at} < N={N} for mu={mu_N!r}; "
            f"a_{trace.breakdown_at + 1} would be non-positive")
    lam, Lam = seq.arrays(N)
    h = trace.values
    threshold = math.log(mu_N) + np.log(Lam[:-1] / lam[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.log(lam[1:] / lam[:-1]) + np.log(-np.expm1(h[:-1] - threshold))
    if not np.all(np.isfinite(steps)):
        k = int(np.flatnonzero(~np.isfinite(steps))[0]) + 2
        raise ExtremalError(f"a_{k} is non-positive at mu={mu_N!r}")
    log_a = np.concatenate([[0.0], np.cumsum(steps)])
    vector = _from_log(seq, log_a, mu=mu_N)
    logger.debug(f"[EXTREMAL] {seq.spec} N={N}: objective {vector.objective:.17g} vs mu {mu_N:.17g}")
    return vector


def verify_stationarity(seq: WeightSequence, v: ExtremalVector, mu: float) -> float:
    """max_k |mu a_k - lambda_k sum_{n>=k} G_n/Lambda_n| / mu."""
    lam, Lam = seq.arrays(v.N)
    rhs = lam * _tail_sums(v.G, Lam)
    return float(np.max(np.abs(mu * v.a - rhs)) / mu)


def _objective_rows(lam: np.ndarray, Lam: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return np.exp(np.cumsum(lam * np.log(rows), axis=1) / Lam).sum(axis=1)


def _ascend(lam: np.ndarray, Lam: np.ndarray, a: np.ndarray, settings: OracleSettings):
    """Entropic mirror ascent on the simplex with step backtracking."""
    log_a = np.log(a)
    G = _geometric_means(lam, Lam, log_a)
    obj = math.fsum(G)
    eta = 1.0
    trail = deque([obj], maxlen=settings.stall_window + 1)
    for _ in range(settings.max_iter):
        grad = lam / a * _tail_sums(G, Lam)
        while True:
            step = a * np.exp(eta * (grad - grad.max()))
            cand = step / step.sum()
            # components that underflow to 0 give -inf logs; backtracking rejects them
            with np.errstate(divide="ignore"):
                cand_G = _geometric_means(lam, Lam, np.log(cand))
            cand_obj = math.fsum(cand_G)
            if cand_obj >= obj or eta < 1e-14:
                break
            eta *= 0.5
        if cand_obj < obj:
            break
        a, G, obj = cand, cand_G, cand_obj
        eta *= 1.5
        trail.append(obj)
        if len(trail) == trail.maxlen and obj - trail[0] < settings.stall_tol:
            break
    return a, obj


def _grid_best(lam: np.ndarray, Lam: np.ndarray, N: int, settings: OracleSettings) -> np.ndarray:
    fine = settings.fine_mesh
    if N == 2:
        x = np.arange(1, int(round(1 / fine))) * fine
        rows = np.column_stack([x, 1 - x])
        return rows[int(np.argmax(_objective_rows(lam, Lam, rows)))]

    def best_of(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        X, Y = np.meshgrid(x, y)
        X, Y = X.ravel(), Y.ravel()
        Z = 1 - X - Y
        keep = (X > 0) & (Y > 0) & (Z > 1e-15)
        rows = np.column_stack([X[keep], Y[keep], Z[keep]])
        return rows[int(np.argmax(_objective_rows(lam, Lam, rows)))]

    coarse = settings.coarse_mesh
    ticks = np.arange(1, int(round(1 / coarse))) * coarse
    b = best_of(ticks, ticks)
    offsets = np.arange(-int(round(coarse / fine)), int(round(coarse / fine)) + 1) * fine
    return best_of(b[0] + offsets, b[1] + offsets)


def oracle_maximize(seq: WeightSequence, N: int, restarts: int = 8, seed: int = 0,
                    settings: OracleSettings = None) -> ExtremalVector:
    """Brute-force maximiser of sum G_n over the simplex, independent of the recurrence."""
    settings = settings or OracleSettings()
    if N < 1 or N > settings.max_n:
        raise PreconditionError(f"oracle needs 1 <= N <= {settings.max_n}, got {N}")
    if restarts < 0:
        raise PreconditionError(f"restarts must be >= 0, got {restarts}")
    if N == 1:
        return extremal_from_weights(seq, [1.0])
    lam, Lam = seq.arrays(N)
    rng = np.random.default_rng(seed)
    starts = [np.full(N, 1.0 / N)] + [rng.dirichlet(np.ones(N)) for _ in range(restarts)]
    best_a, best_obj = None, -math.inf
    for start in starts:
        a, obj = _ascend(lam, Lam, start, settings)
        if obj > best_obj:
            best_a, best_obj = a, obj
    if N <= settings.grid_n:
        a, obj = _ascend(lam, Lam, _grid_best(lam, Lam, N, settings), settings)
        if obj > best_obj:
            best_a, best_obj = a, obj
    logger.debug(f"[EXTREMAL] oracle {seq.spec} N={N}: best objective {best_obj:.17g}")
    return extremal_from_weights(seq, best_a)
