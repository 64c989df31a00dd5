import argparse
import json
import logging
import math
import os
import time
from typing import List, Optional

from fastapi import FastAPI, Response
import uvicorn

from section_tool import HYPOTHESIS_REASONS, USAGE_REASONS, SectionTool

logger = logging.getLogger(__name__)


def _json_safe(value):
	"""Replace non-finite floats with null so the payload is strict JSON."""
	if isinstance(value, float) and not math.isfinite(value):
		return None
	if isinstance(value, dict):
		return {k: _json_safe(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [_json_safe(v) for v in value]
	return value


def _json_response(payload, status_code: int = 200) -> Response:
	content = json.dumps(_json_safe(payload), ensure_ascii=False, allow_nan=False).encode("utf-8")
	return Response(content=content, media_type="application/json", status_code=status_code)


def _status_for(result: dict) -> int:
	if result.get("ok"):
		return 200
	reason = result.get("reason")
	if reason in USAGE_REASONS:
		return 400
	if reason in HYPOTHESIS_REASONS:
		return 200
	return 422


def _numbers(text: Optional[str], cast) -> Optional[List]:
	if text is None:
		return None
	return [cast(float(item)) if cast is int else cast(item) for item in text.split(",") if item.strip()]


def _n_values(n: Optional[int], n_range: Optional[str]) -> List[int]:
	if n_range:
		parts = [int(float(p)) for p in n_range.split(":")]
		start, stop = parts[0], parts[1]
		step = parts[2] if len(parts) > 2 else 1
		return list(range(start, stop + 1, step))
	return [n] if n is not None else []


def _bad_request(error: str) -> Response:
	return _json_response({"ok": False, "error": error, "reason": "usage"}, status_code=400)


class SectionAPI:
	def __init__(self, host: str = "127.0.0.1", port: int = 8000):
		self.host = host
		self.port = port
		self.app = FastAPI(title="Finite Section Constants")
		self.section_tool = SectionTool()
		self._setup_routes()

	def _reply(self, result: dict) -> Response:
		status = _status_for(result)
		if status != 200:
			logger.info(f"[SECTION_API] {result.get('command')} -> {status}: {result.get('error')}")
		return _json_response(result, status_code=status)

	def _setup_routes(self):
		tool = self.section_tool

		@self.app.get("/api/health")
		async def api_health():
			return _json_response({"status": "healthy", "timestamp": time.time()})

		@self.app.get("/api/mu")
		def api_mu(weights: str, n: Optional[int] = None, n_range: Optional[str] = None,
				   kmax: Optional[int] = None, tol: Optional[float] = None,
				   workers: Optional[int] = None):
			try:
				values = _n_values(n, n_range)
			except (ValueError, IndexError) as e:
				return _bad_request(f"bad n_range {n_range!r}: {e}")
			return self._reply(tool.mu(weights, values, kmax=kmax, tol=tol, workers=workers))

		@self.app.get("/api/hypotheses")
		def api_hypotheses(weights: str, kmax: Optional[int] = None):
			return self._reply(tool.hypotheses(weights, kmax=kmax))

		@self.app.get("/api/breakdown")
		def api_breakdown(weights: str, mu: str, cap: Optional[int] = None,
						  kmax: Optional[int] = None, workers: Optional[int] = None):
			try:
				mus = _numbers(mu, float)
			except ValueError:
				return _bad_request(f"bad mu list {mu!r}")
			return self._reply(tool.breakdown(weights, mus, cap=cap, kmax=kmax, workers=workers))

		@self.app.get("/api/asymptotic")
		def api_asymptotic(weights: str, grid: Optional[str] = None, kmax: Optional[int] = None,
						   tol: Optional[float] = None, workers: Optional[int] = None):
			try:
				values = _numbers(grid, int)
			except ValueError:
				return _bad_request(f"bad grid {grid!r}")
			return self._reply(tool.asymptotic(weights, values, kmax=kmax, tol=tol, workers=workers))

		@self.app.get("/api/extremal")
		def api_extremal(weights: str, n: int, kmax: Optional[int] = None, tol: Optional[float] = None,
						 restarts: Optional[int] = None, seed: int = 0):
			return self._reply(tool.extremal(weights, n, kmax=kmax, tol=tol, restarts=restarts, seed=seed))

		@self.app.get("/api/theta")
		def api_theta(weights: str, mu: Optional[str] = None, grid: Optional[str] = None,
					  kmax: Optional[int] = None, tol: Optional[float] = None,
					  workers: Optional[int] = None):
			try:
				mus, values = _numbers(mu, float), _numbers(grid, int)
			except ValueError:
				return _bad_request(f"bad mu list or grid ({mu!r}, {grid!r})")
			return self._reply(tool.theta(weights, mus=mus, grid=values, kmax=kmax, tol=tol,
										  workers=workers))

		@self.app.get("/api/run-history")
		async def api_run_history():
			return _json_response({"history": tool.get_run_history()})

		@self.app.get("/api/run-metrics")
		async def api_run_metrics():
			return _json_response(tool.get_run_metrics())

	def run(self):
		"""Run the API server"""
		logger.warning(f"[SECTION_API] API will be available at: http://{self.host}:{self.port}")
		uvicorn.run(self.app, host=self.host, port=self.port, log_level="info")


def main():
	from logging_config import setup_logging
	setup_logging(enable_file_logging=False, level=os.getenv("LOG_LEVEL", "INFO"))

	parser = argparse.ArgumentParser(description="Finite section constants API")
	parser.add_argument("--host", default=os.getenv("SECTIONS_API_HOST", "127.0.0.1"), help="Host to bind to")
	parser.add_argument("--port", type=int, default=int(os.getenv("SECTIONS_API_PORT", "8000")), help="Port to bind to")

	args = parser.parse_args()

	api = SectionAPI(host=args.host, port=args.port)
	api.run()


if __name__ == "__main__":
	main()
