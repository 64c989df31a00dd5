"""Weight sequences, their derived constants M and C, and hypothesis checks."""

import logging
import math
import threading
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from sections import kernels
from sections.errors import NonConvergenceError, PreconditionError, WeightError

logger = logging.getLogger(__name__)

DEFAULT_MAX_CACHE = 1 << 24
DEFAULT_BLOCK = 1 << 20
_MIN_GROWTH = 1024
# Relative slack tolerated before an inequality counts as violated.
_REL_TOL = 64 * np.finfo(float).eps


class Family(str, Enum):
    UNIT = "unit"
    POWER = "power"
    EXPLICIT = "explicit"


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not_applicable"


class WeightSequence:
    """Positive weights lambda_k with cached compensated prefix sums Lambda_k.

    Indices are 1-based. The cache grows under a lock; readers get read-only
    snapshots that stay valid after later growth.
    """

    def __init__(self, family: Family, alpha: float = None, values: Sequence[float] = None,
                 max_cache: int = DEFAULT_MAX_CACHE, source: str = None):
        self.family = Family(family)
        self.alpha = None
        self.max_cache = int(max_cache)
        self.source = source
        self._lock = threading.Lock()
        self._lam = np.empty(0)
        self._Lam = np.empty(0)
        self._state = (0.0, 0.0)
        self._explicit = None

        if self.family is Family.POWER:
            if alpha is None or not math.isfinite(alpha) or alpha < 1:
                raise WeightError(f"power family needs a finite alpha >= 1, got {alpha!r}")
            self.alpha = float(alpha)
        elif self.family is Family.EXPLICIT:
            arr = np.asarray(values if values is not None else [], dtype=float)
            if arr.ndim != 1 or arr.size == 0:
                raise WeightError("explicit family needs a non-empty list of weights")
            bad = np.flatnonzero(~np.isfinite(arr) | (arr <= 0))
            if bad.size:
                k = int(bad[0]) + 1
                raise WeightError(f"weight lambda_{k} = {arr[bad[0]]!r} is not positive")
            self._explicit = arr
            self._extend(arr.size)

    @classmethod
    def unit(cls, **kwargs) -> "WeightSequence":
        return cls(Family.UNIT, **kwargs)

    @classmethod
    def power(cls, alpha: float, **kwargs) -> "WeightSequence":
        return cls(Family.POWER, alpha=alpha, **kwargs)

    @classmethod
    def explicit(cls, values: Sequence[float], **kwargs) -> "WeightSequence":
        return cls(Family.EXPLICIT, values=values, **kwargs)

    @classmethod
    def from_file(cls, path, **kwargs) -> "WeightSequence":
        """One positive decimal weight per line, UTF-8, no header."""
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise WeightError(f"cannot read weight file {path}: {e}")
        values = []
        for lineno, line in enumerate(lines, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise WeightError(f"{path}:{lineno}: not a decimal weight: {text!r}")
        return cls(Family.EXPLICIT, values=values, source=str(path), **kwargs)

    @classmethod
    def parse(cls, spec: str, **kwargs) -> "WeightSequence":
        """Parse ``unit``, ``power:alpha=<float>`` or ``file:<path>``."""
        spec = (spec or "").strip()
        if spec == "unit":
            return cls.unit(**kwargs)
        if spec.startswith("power:"):
            key, sep, value = spec[len("power:"):].partition("=")
            if key.strip() != "alpha" or not sep:
                raise WeightError(f"expected power:alpha=<float>, got {spec!r}")
            try:
                alpha = float(value)
            except ValueError:
                raise WeightError(f"alpha is not a number in {spec!r}")
            return cls.power(alpha, **kwargs)
        if spec.startswith("file:"):
            path = spec[len("file:"):]
            if not path:
                raise WeightError("file: spec needs a path")
            return cls.from_file(path, **kwargs)
        raise WeightError(f"unknown weight spec {spec!r}")

    @property
    def spec(self) -> str:
        if self.family is Family.UNIT:
            return "unit"
        if self.family is Family.POWER:
            return f"power:alpha={self.alpha:g}"
        return f"file:{self.source}" if self.source else f"explicit[{self.length}]"

    @property
    def length(self) -> Optional[int]:
        """Number of available weights, ``None`` for the infinite families."""
        return None if self._explicit is None else int(self._explicit.size)

    @property
    def cached(self) -> int:
        return int(self._lam.size)

    def _check_index(self, k: int) -> None:
        if k < 1:
            raise PreconditionError(f"weight index must be >= 1, got {k}")
        if self.length is not None and k > self.length:
            raise WeightError(
                f"index {k} beyond the {self.length} weights of {self.spec}", reason="out_of_range")

    def _generate(self, k0: int, k1: int) -> np.ndarray:
        """lambda_k for k0 <= k <= k1 of a closed-form family."""
        if self.family is Family.UNIT:
            return np.ones(k1 - k0 + 1)
        return np.arange(k0, k1 + 1, dtype=float) ** self.alpha

    def _extend(self, k: int) -> None:
        with self._lock:
            size = self._lam.size
            if k <= size:
                return
            if self._explicit is not None:
                new_size = self._explicit.size
                lam_ext = self._explicit[size:new_size]
            else:
                new_size = max(k, min(2 * size, self.max_cache), size + _MIN_GROWTH)
                lam_ext = self._generate(size + 1, new_size)
            Lam_ext = np.empty_like(lam_ext)
            s, c = kernels.compensated_cumsum(lam_ext, self._state[0], self._state[1], Lam_ext)
            lam = np.concatenate([self._lam, lam_ext])
            Lam = np.concatenate([self._Lam, Lam_ext])
            lam.flags.writeable = False
            Lam.flags.writeable = False
            self._lam, self._Lam, self._state = lam, Lam, (s, c)
            logger.debug(f"[WEIGHTS] cache for {self.spec} grown {size} -> {new_size}")

    def ensure(self, k: int) -> None:
        """Make lambda_1..lambda_k available in the cache."""
        self._check_index(k)
        if k > self._lam.size:
            self._extend(k)

    def arrays(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Read-only snapshots of lambda_1..lambda_n and Lambda_1..Lambda_n."""
        self.ensure(n)
        lam, Lam = self._lam, self._Lam
        return lam[:n], Lam[:n]

    def lam(self, k: int) -> float:
        self._check_index(k)
        if self._explicit is None and k > self._lam.size:
            return float(self._generate(k, k)[0])
        self.ensure(k)
        return float(self._lam[k - 1])

    def prefix(self, k: int) -> float:
        self._check_index(k)
        if k <= max(self._lam.size, self.max_cache):
            self.ensure(k)
            return float(self._Lam[k - 1])
        total = 0.0
        for _, _, Lam in self.blocks(k):
            total = float(Lam[-1])
        return total

    def blocks(self, stop: int, size: int = DEFAULT_BLOCK) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
        """Windows ``(k0, lam, Lam)`` covering indices 1..stop.

        Each window holds indices k0..k0+len-1; consecutive windows share their
        boundary index. Indices beyond ``max_cache`` are streamed without being
        stored.
        """
        self._check_index(stop)
        if self._explicit is not None or stop <= max(self.max_cache, self._lam.size):
            self.ensure(stop)
        else:
            self.ensure(self.max_cache)
        with self._lock:
            lam, Lam, state = self._lam, self._Lam, self._state
        cached_stop = min(stop, lam.size)
        k0 = 1
        while True:
            k1 = min(k0 + size, cached_stop)
            yield k0, lam[k0 - 1:k1], Lam[k0 - 1:k1]
            if k1 >= cached_stop:
                break
            k0 = k1
        if cached_stop >= stop:
            return
        # Streamed tail: continue the compensated sum from the cache state.
        s, c = state
        last_lam, last_Lam = lam[cached_stop - 1], Lam[cached_stop - 1]
        k0 = cached_stop
        while k0 < stop:
            k1 = min(k0 + size, stop)
            lam_ext = self._generate(k0 + 1, k1)
            Lam_ext = np.empty_like(lam_ext)
            s, c = kernels.compensated_cumsum(lam_ext, s, c, Lam_ext)
            yield k0, np.concatenate([[last_lam], lam_ext]), np.concatenate([[last_Lam], Lam_ext])
            last_lam, last_Lam = lam_ext[-1], Lam_ext[-1]
            k0 = k1

    def __repr__(self):
        return f"WeightSequence({self.spec!r})"


@dataclass
class WeightConstants:
    M: float
    M_source: str
    C: float
    C_source: str
    C_error_estimate: float = 0.0
    M_argmax: Optional[int] = None
    M_tail_limit: bool = False

    def __post_init__(self):
        if not self.M > 0:
            raise NonConvergenceError(f"M must be positive, got {self.M!r}", reason="non_positive_M")
        if not self.C > 0:
            raise NonConvergenceError(f"C must be positive, got {self.C!r}", reason="non_positive_C")

    @property
    def e_M(self) -> float:
        return math.exp(self.M)

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_(seq: WeightSequence, k: int) -> float:
    return seq.lam(k)


def prefix_sum(seq: WeightSequence, k: int) -> float:
    return seq.prefix(k)


def _gap_from_arrays(lam: np.ndarray, Lam: np.ndarray) -> np.ndarray:
    # Lambda_{k+1}/lambda_{k+1} - Lambda_k/lambda_k without cancellation.
    r = Lam[:-1] / lam[:-1]
    return 1.0 + r * (lam[:-1] - lam[1:]) / lam[1:]


def ratio_terms(seq: WeightSequence, n_max: int) -> np.ndarray:
    """Terms n = 1..n_max of the supremum defining M."""
    lam, Lam = seq.arrays(n_max + 1)
    r = Lam[:-1] / lam[:-1]
    return r * np.log1p(_gap_from_arrays(lam, Lam) / r)


def gap_terms(seq: WeightSequence, n_max: int) -> np.ndarray:
    """Lambda_{k+1}/lambda_{k+1} - Lambda_k/lambda_k for k = 1..n_max."""
    lam, Lam = seq.arrays(n_max + 1)
    return _gap_from_arrays(lam, Lam)


def ratio_term(seq: WeightSequence, n: int) -> float:
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    lam_n, lam_n1 = seq.lam(n), seq.lam(n + 1)
    r = seq.prefix(n) / lam_n
    gap = 1.0 + r * (lam_n - lam_n1) / lam_n1
    return r * math.log1p(gap / r)


def _effective_range(seq: WeightSequence, k_max: int, extra: int = 1) -> int:
    if seq.length is None:
        return k_max
    return min(k_max, seq.length - extra)


def estimate_constants(seq: WeightSequence, k_max: int) -> WeightConstants:
    """Closed-form M and C when the family has them, otherwise estimates."""
    if k_max < 100:
        raise PreconditionError(f"k_max must be >= 100, got {k_max}")
    if seq.family is Family.UNIT:
        return WeightConstants(M=1.0, M_source="closed_form", C=1.0, C_source="closed_form",
                               M_tail_limit=True)
    if seq.family is Family.POWER:
        C = seq.alpha + 1.0
        return WeightConstants(M=1.0 / C, M_source="closed_form", C=C, C_source="closed_form",
                               M_tail_limit=True)

    K = _effective_range(seq, k_max)
    if K < 1:
        raise PreconditionError(f"{seq.spec} needs at least two weights to estimate M")
    terms = ratio_terms(seq, K)
    if not np.all(np.isfinite(terms)):
        raise NonConvergenceError("ratio terms are not finite")
    argmax = int(np.argmax(terms))
    M = float(terms[argmax])
    tail_limit = False

    if K >= 20:
        tail = terms[K // 10 - 1:]
        if np.all(np.diff(tail) > 0):
            # Terms behave like L - a/n: one Richardson step in 1/n.
            t_quarter, t_half, t_full = terms[K // 4 - 1], terms[K // 2 - 1], terms[K - 1]
            g1, g2 = t_half - t_quarter, t_full - t_half
            if g1 > 0 and g2 > 0.75 * g1:
                raise NonConvergenceError(
                    f"supremum still growing at k_max={K} (last increments {g1:.3g}, {g2:.3g})")
            m = K // 2
            limit = (K * t_full - m * t_half) / (K - m)
            M = max(M, float(limit))
            tail_limit = True
            logger.info(f"[WEIGHTS] {seq.spec}: monotone tail, M extrapolated to {M:.17g}")

    Kc = _effective_range(seq, k_max, extra=0)
    lam, Lam = seq.arrays(Kc)
    ks = np.arange(1, Kc + 1, dtype=float)
    C_k = ks * lam / Lam
    half = Kc // 2
    if half >= 1:
        C = 2.0 * C_k[2 * half - 1] - C_k[half - 1]
        C_err = abs(C_k[Kc - 1] - C_k[half - 1])
        if C <= 0:
            C = C_k[Kc - 1]
    else:
        C, C_err = C_k[0], math.inf
    return WeightConstants(M=M, M_source="estimated", C=float(C), C_source="estimated",
                           C_error_estimate=float(C_err),
                           M_argmax=None if tail_limit else argmax + 1,
                           M_tail_limit=tail_limit)


@dataclass
class Witness:
    k: int
    lhs: float
    rhs: float


@dataclass
class HypothesisEntry:
    name: str
    description: str
    checked_range: Tuple[int, int]
    status: Status
    margin: Optional[float] = None
    statistic: Optional[float] = None
    witness: Optional[Witness] = None
    required: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.value
        d["checked_range"] = list(self.checked_range)
        return d


@dataclass
class HypothesisReport:
    spec: str
    k_max: int
    constants: WeightConstants
    entries: Dict[str, HypothesisEntry] = field(default_factory=dict)

    @property
    def failures(self) -> List[HypothesisEntry]:
        return [e for e in self.entries.values() if e.required and e.status is Status.FAIL]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "k_max": self.k_max,
            "constants": self.constants.to_dict(),
            "passed": self.passed,
            "entries": {name: e.to_dict() for name, e in self.entries.items()},
        }


def _inequality(name: str, description: str, ks: np.ndarray, lhs: np.ndarray, rhs: np.ndarray,
                required: bool = True) -> HypothesisEntry:
    """Entry for lhs_k <= rhs_k; margin is the smallest relative slack."""
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    slack = (rhs - lhs) / scale
    worst = int(np.argmin(slack))
    violated = np.flatnonzero(slack < -_REL_TOL)
    entry = HypothesisEntry(name, description, (int(ks[0]), int(ks[-1])), Status.PASS,
                            margin=float(slack[worst]), required=required)
    if violated.size:
        i = int(violated[0])
        entry.status = Status.FAIL
        entry.witness = Witness(int(ks[i]), float(lhs[i]), float(rhs[i]))
    return entry


def _power_entries(seq: WeightSequence, ks: np.ndarray, Lam: np.ndarray) -> List[HypothesisEntry]:
    alpha = seq.alpha
    n = ks
    sums = Lam[:-1]
    step = np.expm1(alpha * np.log1p(1.0 / n))            # ((n+1)/n)^alpha - 1
    step_next = np.expm1(alpha * np.log1p(1.0 / (n + 1)))  # ((n+2)/(n+1))^alpha - 1
    lower = alpha / (alpha + 1.0) * (n + 1.0) ** alpha / step
    upper = (n + 1.0) ** (alpha + 1.0) / (alpha + 1.0)
    gap_bound = alpha / (alpha + 1.0) * (n + 1.0) ** alpha / step_next
    bennett = np.exp((np.log(sums / n) - np.log(Lam[1:] / (n + 1.0))) / alpha)
    mean_value = n * -np.expm1(-alpha * np.log1p(1.0 / (n + 1.0)))
    return [
        _inequality("power_sum_lower", "a/(a+1) n^a (n+1)^a / ((n+1)^a - n^a) <= sum i^a",
                    ks, lower, sums),
        _inequality("power_sum_upper", "sum i^a <= (n+1)^(a+1)/(a+1)", ks, sums, upper),
        _inequality("power_sum_gap", "sum i^a <= a/(a+1) (n+1)^(2a) / ((n+2)^a - (n+1)^a)",
                    ks, sums, gap_bound),
        _inequality("bennett_ratio", "P_n(a) <= P_n(1) = (n+1)/(n+2)",
                    ks, bennett, (n + 1.0) / (n + 2.0)),
        _inequality("mean_value_step", "n ((n+2)^a - (n+1)^a) <= a (n+2)^a",
                    ks, mean_value, np.full_like(n, alpha), required=False),
    ]


def check_hypotheses(seq: WeightSequence, consts: WeightConstants, k_max: int) -> HypothesisReport:
    """Evaluate every structural condition for k <= k_max; failures are data."""
    if k_max < 10:
        raise PreconditionError(f"k_max must be >= 10, got {k_max}")
    K = _effective_range(seq, k_max)
    if K < 1:
        raise PreconditionError(f"{seq.spec} needs at least two weights to check hypotheses")
    lam_all, Lam_all = seq.arrays(K + 1)
    lam, lam_next, Lam, Lam_next = lam_all[:-1], lam_all[1:], Lam_all[:-1], Lam_all[1:]
    ks = np.arange(1, K + 1, dtype=float)
    krange = (1, K)
    M, C = consts.M, consts.C
    r = Lam / lam
    gap = _gap_from_arrays(lam_all, Lam_all)
    log_ratio = np.log1p(gap / r)
    terms = r * log_ratio

    report = HypothesisReport(seq.spec, K, consts)
    def add(entry: HypothesisEntry) -> None:
        report.entries[entry.name] = entry

    add(_inequality("monotone", "lambda_k <= lambda_{k+1}", ks, lam, lam_next))
    add(_inequality("ratio_sup", "ratio term <= M", ks, terms, np.full_like(terms, M)))

    growth = lam_next / lam
    add(HypothesisEntry("growth_bounded", "sup lambda_{k+1}/lambda_k < inf", krange,
                        Status.PASS if np.all(np.isfinite(growth)) else Status.FAIL,
                        statistic=float(np.max(growth))))

    add(_inequality("step_inequality",
                    "M + log(lambda_k/lambda_{k+1}) <= (Lambda_{k+1}/lambda_k) log(ratio step)",
                    ks, M + np.log(lam / lam_next), Lam_next / lam * log_ratio))

    rate = np.abs(terms - M) * r
    add(HypothesisEntry("ratio_rate", "|ratio term - M| <= c lambda_k/Lambda_k", krange,
                        Status.PASS if np.all(np.isfinite(rate)) else Status.FAIL,
                        statistic=float(np.max(rate))))

    worst = int(np.argmin(gap))
    gap_entry = HypothesisEntry("ratio_gap", "inf (Lambda_{k+1}/lambda_{k+1} - Lambda_k/lambda_k) > 0",
                                krange, Status.PASS, margin=float(gap[worst]),
                                statistic=float(gap[worst]))
    if not gap[worst] > 0:
        gap_entry.status = Status.FAIL
        gap_entry.witness = Witness(worst + 1, float(gap[worst]), 0.0)
    add(gap_entry)

    constant = ks * np.abs(ks * lam / Lam - C)
    add(HypothesisEntry("rate_constant", "|k lambda_k/Lambda_k - C| <= c'/k", krange,
                        Status.PASS if np.all(np.isfinite(constant)) else Status.FAIL,
                        statistic=float(np.max(constant))))

    add(_inequality("gap_sufficient", "gap >= M lambda_k/lambda_{k+1}",
                    ks, M * lam / lam_next, gap, required=False))

    if seq.family is Family.POWER:
        for entry in _power_entries(seq, ks, Lam_all):
            add(entry)
    else:
        for name in ("power_sum_lower", "power_sum_upper", "power_sum_gap",
                     "bennett_ratio", "mean_value_step"):
            add(HypothesisEntry(name, "power families only", krange, Status.NOT_APPLICABLE))

    for e in report.failures:
        logger.warning(f"[WEIGHTS] {seq.spec}: {e.name} fails at k={e.witness.k if e.witness else '?'}")
    return report
