import json
import logging
import math
import os
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Sequence, Tuple

import psutil

from sections.asymptotics import (
    predicted_log_breakdown,
    predicted_mu,
    quadratic_surrogate,
    fit_residual,
    theta_band,
    theta_infinity,
)
from sections.errors import NonConvergenceError, PreconditionError, SectionError
from sections.extremal import OracleSettings, oracle_maximize, reconstruct_extremal, verify_stationarity
from sections.recursion import breakdown_index, section_constant
from sections.weights import WeightConstants, WeightSequence, check_hypotheses, estimate_constants

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    "kmax": 10000,
    "cap": 100000000,
    "restarts": 8,
    "seed": 0,
    "tol_factor": 1e-14,
    "max_iterations": 200,
    "upper_backoff": 2.0 ** -40,
    "grid": [1000, 10000, 100000, 1000000],
    "block_size": 1 << 20,
    "max_cache": 1 << 24,
    "workers": None,
    "oracle": {},
    "theta": {"epsabs": 1e-10, "cutoff": 40.0},
}

# Failure reasons grouped by how front ends report them.
USAGE_REASONS = {"precondition", "invalid_weights", "out_of_range", "usage"}
HYPOTHESIS_REASONS = {"hypothesis_failure"}

EXIT_OK = 0
EXIT_HYPOTHESIS = 1
EXIT_NUMERIC = 2
EXIT_USAGE = 64


def exit_code(result: dict) -> int:
    """Map a command result onto the CLI exit-code contract."""
    if result.get("ok"):
        return EXIT_OK if result.get("passed", True) else EXIT_HYPOTHESIS
    reason = result.get("reason")
    if reason in USAGE_REASONS:
        return EXIT_USAGE
    if reason in HYPOTHESIS_REASONS:
        return EXIT_HYPOTHESIS
    return EXIT_NUMERIC


class SectionTool:
    def __init__(self, config_path: str = None):
        self.config_path = config_path or os.getenv("SECTIONS_CONFIG", "sections.json")

        # Load configuration, falling back to built-in defaults for missing keys
        self.config = dict(DEFAULT_CONFIG)
        path = Path(self.config_path)
        if path.exists():
            with open(path, 'r') as f:
                self.config.update(json.load(f))
        else:
            logger.warning(f"[SECTION_TOOL] config {path} not found, using defaults")

        self.oracle_settings = OracleSettings.from_dict(self.config.get("oracle"))
        workers = os.getenv("SECTIONS_WORKERS") or self.config.get("workers")
        self.workers = int(workers) if workers else (psutil.cpu_count(logical=False) or 1)

        # Parsed weight sequences and their constants, shared across runs
        self._sequences: Dict[str, WeightSequence] = {}
        self._constants: Dict[Tuple[str, int], WeightConstants] = {}

        # Run history (keep last 1000 entries)
        self._run_history: deque = deque(maxlen=1000)

        # Lock for thread safety
        self._lock = threading.Lock()

    def record_run_event(self, command: str, weights: str, elapsed: float, result: dict):
        """Record a command run in history"""
        with self._lock:
            event = {
                "command": command,
                "weights": weights,
                "elapsed": elapsed,
                "timestamp": time.time(),
                "ok": result.get("ok", False),
                "reason": result.get("reason"),
            }
            self._run_history.append(event)

    def get_run_history(self) -> List[dict]:
        """Get run history as list"""
        with self._lock:
            return list(self._run_history)

    def get_run_metrics(self) -> dict:
        """Get aggregated run metrics per command"""
        with self._lock:
            history = list(self._run_history)

        metrics = {}
        for command in COMMANDS:
            runs = [h for h in history if h["command"] == command]
            if runs:
                durations = [h["elapsed"] for h in runs]
                metrics[command] = {
                    "count": len(runs),
                    "failures": sum(1 for h in runs if not h["ok"]),
                    "avg_duration": sum(durations) / len(durations),
                    "max_duration": max(durations),
                    "min_duration": min(durations),
                }
            else:
                metrics[command] = {
                    "count": 0,
                    "failures": 0,
                    "avg_duration": 0,
                    "max_duration": 0,
                    "min_duration": 0,
                }
        return metrics

    def get_sequence(self, spec: str) -> WeightSequence:
        with self._lock:
            seq = self._sequences.get(spec)
        if seq is None:
            seq = WeightSequence.parse(spec, max_cache=self.config["max_cache"])
            with self._lock:
                seq = self._sequences.setdefault(spec, seq)
        return seq

    def get_constants(self, seq: WeightSequence, kmax: int = None) -> WeightConstants:
        kmax = max(int(kmax or self.config["kmax"]), 100)
        key = (seq.spec, kmax)
        with self._lock:
            consts = self._constants.get(key)
        if consts is None:
            consts = estimate_constants(seq, kmax)
            with self._lock:
                self._constants[key] = consts
        return consts

    def _section_kwargs(self, tol: float = None) -> dict:
        return {
            "tol_factor": tol if tol is not None else self.config["tol_factor"],
            "max_iterations": self.config["max_iterations"],
            "upper_backoff": self.config["upper_backoff"],
            "block_size": self.config["block_size"],
        }

    def _map(self, fn: Callable, items: Sequence, workers: int = None) -> list:
        """Evaluate ``fn`` over ``items`` on the pool; results keep input order."""
        items = list(items)
        workers = min(int(workers or self.workers), max(len(items), 1))
        if workers <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def _run(self, command: str, weights: str, body: Callable[[], dict]) -> dict:
        start = time.time()
        try:
            result = body()
            result = {"ok": True, "command": command, "weights": weights, **result}
        except SectionError as e:
            logger.warning(f"[SECTION_TOOL] {command} {weights} failed: {e}")
            result = {"ok": False, "command": command, "weights": weights,
                      "error": str(e), "reason": e.reason}
        elapsed = time.time() - start
        logger.info(f"[SECTION_TOOL] {command} {weights} finished in {elapsed:.3f}s ok={result['ok']}")
        self.record_run_event(command, weights, elapsed, result)
        return result

    def mu(self, weights: str, n: Sequence[int], kmax: int = None, tol: float = None,
           workers: int = None) -> dict:
        """mu_N for every requested N."""
        def body():
            Ns = [int(N) for N in n]
            if not Ns:
                raise PreconditionError("mu needs at least one N", reason="usage")
            seq = self.get_sequence(weights)
            consts = self.get_constants(seq, kmax)
            kwargs = self._section_kwargs(tol)
            sections = self._map(lambda N: section_constant(seq, consts, N, **kwargs), Ns, workers)
            rows = [[s.N, s.mu_N, s.residual, s.iterations] for s in sections]
            return {"columns": ["N", "mu_N", "residual", "iterations"], "rows": rows,
                    "footer": {"M": consts.M, "C": consts.C, "e_M": consts.e_M}}
        return self._run("mu", weights, body)

    def hypotheses(self, weights: str, kmax: int = None) -> dict:
        """Structural conditions on the weights; failed conditions come back as data."""
        def body():
            kmax_ = int(kmax or self.config["kmax"])
            seq = self.get_sequence(weights)
            try:
                consts = self.get_constants(seq, kmax_)
            except NonConvergenceError as e:
                raise NonConvergenceError(f"ratio_sup: {e}", reason="hypothesis_failure")
            report = check_hypotheses(seq, consts, kmax_)
            rows = []
            for entry in report.entries.values():
                w = entry.witness
                rows.append([entry.name, entry.status.value, entry.checked_range[0],
                             entry.checked_range[1], entry.margin, entry.statistic,
                             w.k if w else None, w.lhs if w else None, w.rhs if w else None,
                             entry.required])
            failed = [e.name for e in report.failures]
            footer = {"M": consts.M, "M_source": consts.M_source, "C": consts.C,
                      "C_source": consts.C_source, "C_error_estimate": consts.C_error_estimate,
                      "M_tail_limit": consts.M_tail_limit, "passed": report.passed,
                      "failed": ";".join(failed)}
            return {"columns": ["condition", "status", "k_from", "k_to", "margin", "statistic",
                                "witness_k", "lhs", "rhs", "required"],
                    "rows": rows, "footer": footer, "passed": report.passed}
        return self._run("hypotheses", weights, body)

    def breakdown(self, weights: str, mus: Sequence[float], cap: int = None, kmax: int = None,
                  workers: int = None) -> dict:
        """N_mu for every mu, with the predicted log N_mu."""
        def body():
            values = [float(m) for m in mus]
            if not values:
                raise PreconditionError("breakdown needs at least one mu", reason="usage")
            cap_ = int(cap or self.config["cap"])
            seq = self.get_sequence(weights)
            consts = self.get_constants(seq, kmax)
            block = self.config["block_size"]
            results = self._map(lambda m: breakdown_index(seq, m, cap_, block), values, workers)
            rows = []
            for r in results:
                above = r.mu >= consts.e_M
                predicted = math.inf if above else predicted_log_breakdown(consts, r.mu)
                note = ("cap_reached" if r.infinite else "") + (";mu>=e^M" if above else "")
                rows.append([r.mu, math.inf if r.infinite else r.index, predicted, r.infinite, note.lstrip(";")])
            return {"columns": ["mu", "N_mu", "predicted_log_N", "infinite", "note"],
                    "rows": rows, "footer": {"cap": cap_, "M": consts.M, "C": consts.C}}
        return self._run("breakdown", weights, body)

    def asymptotic(self, weights: str, grid: Sequence[int] = None, kmax: int = None,
                   tol: float = None, workers: int = None) -> dict:
        """Exact mu_N against the two-term expansion, with the residual fit."""
        def body():
            grid_ = [int(N) for N in (grid or self.config["grid"])]
            seq = self.get_sequence(weights)
            consts = self.get_constants(seq, kmax)
            with ThreadPoolExecutor(max_workers=int(workers or self.workers)) as pool:
                fit = fit_residual(seq, consts, grid_, map_fn=pool.map, **self._section_kwargs(tol))
            rows = [[int(N), float(mu), predicted_mu(consts, int(N)).mu_predicted, float(r)]
                    for N, mu, r in zip(fit.grid, fit.mu_values, fit.r_values)]
            footer = {"fitted_A": fit.fitted_A, "fitted_B": fit.fitted_B, "fit_rms": fit.fit_rms,
                      "target": fit.target, "decreasing_gap": fit.decreasing_gap}
            return {"columns": ["N", "mu_exact", "mu_predicted", "r"], "rows": rows, "footer": footer}
        return self._run("asymptotic", weights, body)

    def extremal(self, weights: str, n: int, kmax: int = None, tol: float = None,
                 restarts: int = None, seed: int = None) -> dict:
        """Optimising vector at mu_N with its stationarity residual and an oracle cross-check."""
        def body():
            N = int(n)
            seq = self.get_sequence(weights)
            consts = self.get_constants(seq, kmax)
            section = section_constant(seq, consts, N, **self._section_kwargs(tol))
            vector = reconstruct_extremal(seq, section.mu_N, N)
            footer = {"mu_N": section.mu_N, "objective": vector.objective,
                      "stationarity_residual": verify_stationarity(seq, vector, section.mu_N)}
            if N <= self.oracle_settings.max_n:
                oracle = oracle_maximize(
                    seq, N,
                    restarts=int(restarts if restarts is not None else self.config["restarts"]),
                    seed=int(seed if seed is not None else self.config["seed"]),
                    settings=self.oracle_settings)
                footer["oracle_objective"] = oracle.objective
                footer["oracle_gap"] = abs(oracle.objective - vector.objective)
            rows = [[k, float(a), float(g)] for k, (a, g) in enumerate(zip(vector.a, vector.G), start=1)]
            return {"columns": ["k", "a_k", "G_k"], "rows": rows, "footer": footer}
        return self._run("extremal", weights, body)

    def theta(self, weights: str, mus: Sequence[float] = None, grid: Sequence[int] = None,
              kmax: int = None, tol: float = None, workers: int = None) -> dict:
        """theta(inf) against its closed form (per mu) or against C log N (per N)."""
        def body():
            if (mus is None) == (grid is None):
                raise PreconditionError("theta needs exactly one of mu values or a grid",
                                        reason="usage")
            seq = self.get_sequence(weights)
            consts = self.get_constants(seq, kmax)
            settings = self.config["theta"]
            epsabs, cutoff = settings.get("epsabs", 1e-10), settings.get("cutoff", 40.0)
            if mus is not None:
                rows = []
                for m in mus:
                    value = theta_infinity(float(m), consts.M, epsabs, cutoff)
                    surrogate = quadratic_surrogate(float(m), consts.M)
                    rows.append([float(m), value, surrogate, value - surrogate])
                return {"columns": ["mu", "theta_inf", "surrogate", "difference"], "rows": rows,
                        "footer": {"M": consts.M}}
            with ThreadPoolExecutor(max_workers=int(workers or self.workers)) as pool:
                band = theta_band(seq, consts, grid, map_fn=pool.map, epsabs=epsabs,
                                  cutoff=cutoff, **self._section_kwargs(tol))
            rows = [[int(N), float(mu), float(t), float(c), float(g)] for N, mu, t, c, g in
                    zip(band.grid, band.mu_values, band.theta_values, band.c_log_n, band.gaps)]
            return {"columns": ["N", "mu_N", "theta_inf", "c_log_n", "gap"], "rows": rows,
                    "footer": {"band_width": band.band_width,
                               "monotone_growth": band.monotone_growth}}
        return self._run("theta", weights, body)


COMMANDS = ("mu", "hypotheses", "breakdown", "asymptotic", "extremal", "theta")


if __name__ == "__main__":
    # Simple CLI for testing
    import sys

    tool = SectionTool()

    if len(sys.argv) < 3:
        print("Usage: python section_tool.py <mu|extremal> <weights> <N>")
        sys.exit(1)

    command, weights = sys.argv[1], sys.argv[2]

    if command == "mu" and len(sys.argv) > 3:
        result = tool.mu(weights, [int(sys.argv[3])])
    elif command == "extremal" and len(sys.argv) > 3:
        result = tool.extremal(weights, int(sys.argv[3]))
    else:
        print("Invalid command or missing arguments")
        sys.exit(1)
    print(json.dumps(result, indent=2))
