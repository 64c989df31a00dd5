#!/usr/bin/env python3
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from logging_config import setup_logging
from section_tool import EXIT_USAGE, SectionTool, exit_code

logger = setup_logging(enable_file_logging=False)


@dataclass
class RunConfig:
    command: str
    weights_spec: str
    output_format: str = "csv"
    output_path: Optional[str] = None
    n: List[int] = field(default_factory=list)
    mu: Optional[List[float]] = None
    grid: Optional[List[int]] = None
    kmax: Optional[int] = None
    cap: Optional[int] = None
    restarts: Optional[int] = None
    seed: int = 0
    tol: Optional[float] = None
    workers: Optional[int] = None
    config_path: Optional[str] = None


class SectionArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 64 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value.is_integer() or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(value)


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text!r}")
    return value


def _n_range(text: str) -> List[int]:
    """start:stop:step, inclusive of stop."""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected start:stop[:step], got {text!r}")
    start, stop = _positive_int(parts[0]), _positive_int(parts[1])
    step = _positive_int(parts[2]) if len(parts) == 3 else 1
    if stop < start:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return list(range(start, stop + 1, step))


def _float_list(text: str) -> List[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values or not all(math.isfinite(v) and v > 0 for v in values):
        raise argparse.ArgumentTypeError(f"expected positive finite numbers, got {text!r}")
    return values


def _int_list(text: str) -> List[int]:
    return [_positive_int(item) for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = SectionArgumentParser(add_help=False)
    common.add_argument("--weights", required=True,
                        help="unit | power:alpha=<float> | file:<path>")
    common.add_argument("--format", dest="output_format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", dest="output_path", help="Write output here instead of stdout")
    common.add_argument("--seed", type=_seed, default=0, help="Oracle seed")
    common.add_argument("--kmax", type=_positive_int, help="Range for constant estimation and checks")
    common.add_argument("--cap", type=_positive_int, help="Largest index scanned for breakdown")
    common.add_argument("--tol", type=float, help="Bisection tolerance relative to e^M")
    common.add_argument("--workers", type=_positive_int, help="Worker threads for grid points")
    common.add_argument("--config", dest="config_path", help="Path to sections.json")

    parser = SectionArgumentParser(prog="sections",
                                   description="Best constants of finite sections of weighted Carleman inequalities")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mu", parents=[common], help="Section constants mu_N")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=_positive_int)
    group.add_argument("--n-range", type=_n_range, help="start:stop:step, inclusive")

    sub.add_parser("hypotheses", parents=[common], help="Check the structural conditions")

    p = sub.add_parser("breakdown", parents=[common], help="Breakdown index N_mu")
    p.add_argument("--mu", type=_float_list, required=True, help="Comma-separated mu values")

    p = sub.add_parser("asymptotic", parents=[common], help="Exact mu_N against the expansion")
    p.add_argument("--grid", type=_int_list, help="Comma-separated N values, e.g. 1e3,1e4")

    p = sub.add_parser("extremal", parents=[common], help="Optimising vector for one N")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--restarts", type=int, help="Random oracle starts")

    p = sub.add_parser("theta", parents=[common], help="theta(inf) diagnostics")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--mu", type=_float_list)
    group.add_argument("--grid", type=_int_list)
    return parser


def parse_config(argv: List[str] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    n = []
    if getattr(args, "n_range", None):
        n = args.n_range
    elif getattr(args, "n", None):
        n = [args.n]
    return RunConfig(
        command=args.command,
        weights_spec=args.weights,
        output_format=args.output_format,
        output_path=args.output_path,
        n=n,
        mu=getattr(args, "mu", None),
        grid=getattr(args, "grid", None),
        kmax=args.kmax,
        cap=args.cap,
        restarts=getattr(args, "restarts", None),
        seed=args.seed,
        tol=args.tol,
        workers=args.workers,
        config_path=args.config_path,
    )


def run(config: RunConfig, tool: SectionTool) -> dict:
    spec = config.weights_spec
    if config.command == "mu":
        return tool.mu(spec, config.n, kmax=config.kmax, tol=config.tol, workers=config.workers)
    if config.command == "hypotheses":
        return tool.hypotheses(spec, kmax=config.kmax)
    if config.command == "breakdown":
        return tool.breakdown(spec, config.mu, cap=config.cap, kmax=config.kmax,
                              workers=config.workers)
    if config.command == "asymptotic":
        return tool.asymptotic(spec, config.grid, kmax=config.kmax, tol=config.tol,
                               workers=config.workers)
    if config.command == "extremal":
        return tool.extremal(spec, config.n[0], kmax=config.kmax, tol=config.tol,
                             restarts=config.restarts, seed=config.seed)
    return tool.theta(spec, mus=config.mu, grid=config.grid, kmax=config.kmax, tol=config.tol,
                      workers=config.workers)


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "INF" if value > 0 else "-INF"
        if math.isnan(value):
            return "NAN"
        return f"{value:.17g}"
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render_csv(result: dict) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(result["columns"])
    for row in result["rows"]:
        writer.writerow([format_cell(v) for v in row])
    for key, value in result.get("footer", {}).items():
        buffer.write(f"# {key},{format_cell(value)}\n")
    return buffer.getvalue()


def render_json(result: dict) -> str:
    payload = {
        "command": result["command"],
        "weights": result["weights"],
        "columns": result["columns"],
        "rows": [{c: _json_value(v) for c, v in zip(result["columns"], row)}
                 for row in result["rows"]],
        "footer": {k: _json_value(v) for k, v in result.get("footer", {}).items()},
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def _report_failure(result: dict):
    if not result.get("ok"):
        print(f"error ({result.get('reason')}): {result.get('error')}", file=sys.stderr)
        return
    if result.get("passed", True):
        return
    index = result["columns"].index
    for row in result["rows"]:
        if row[index("status")] == "fail" and row[index("required")]:
            print(f"failed: {row[index('condition')]} at k={row[index('witness_k')]} "
                  f"(lhs={format_cell(row[index('lhs')])}, rhs={format_cell(row[index('rhs')])})",
                  file=sys.stderr)


def main(argv: List[str] = None) -> int:
    config = parse_config(argv)
    tool = SectionTool(config.config_path)
    logger.info(f"[MAIN] {config.command} {config.weights_spec}")
    result = run(config, tool)
    _report_failure(result)
    if result.get("ok"):
        text = render_json(result) if config.output_format == "json" else render_csv(result)
        if config.output_path:
            with open(Path(config.output_path), "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
    return exit_code(result)


if __name__ == "__main__":
    sys.exit(main())
