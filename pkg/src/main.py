#!/usr/bin/env python3
"""Command line and MCP entry point for the disorder-detection toolkit.

Usage Examples:
  # Classical threshold and value table
  python src/main.py solve --b 1 --sigma 1 --lambda 0.1 --c 1 --out sol.csv

  # Risk of a threshold rule on a model file, or the best threshold
  python src/main.py risk --model model.json --strategy threshold:0.8 --paths 20000
  python src/main.py risk --model model.json --format json

  # Experiment suite; exit code 1 when an inequality fails
  python src/main.py experiment --config configs/robustness_sandwich.json --out report.json

  # MCP server over stdio (default) or HTTP
  python src/main.py serve
  python src/main.py serve --transport http --port 8080
  MCP_TRANSPORT_MODE=http python src/main.py serve
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent))

from core.utils import ToolkitSettings, get_toolkit_settings  # noqa: E402
from disorder import io as report_io  # noqa: E402
from disorder.dp import extract_boundary, solve_dp  # noqa: E402
from disorder.errors import (  # noqa: E402
    ConfigError,
    DisorderError,
    EmptyBoundaryError,
    FilterInputError,
    GridError,
    ModelValidationError,
    ParameterError,
    RateOrderError,
    UnknownExperimentError,
    UnsupportedModelError,
)
from disorder.experiments import load_experiment_config, run_experiment, write_report  # noqa: E402
from disorder.filtering import EulerFilter, ExactFilter, PosteriorPath, run_filter  # noqa: E402
from disorder.model import ModelSpec, load_model  # noqa: E402
from disorder.risk import estimate_risk, optimize_threshold, parse_strategy  # noqa: E402
from disorder.shiryaev import ClassicalParams, solve_shiryaev  # noqa: E402
from disorder.sim import TimeGrid, default_grid, simulate_batch, simulate_scenario, write_path_csv  # noqa: E402

USAGE_ERRORS = (
    ConfigError,
    FileNotFoundError,
    FilterInputError,
    GridError,
    ModelValidationError,
    ParameterError,
    RateOrderError,
    UnknownExperimentError,
    UnsupportedModelError,
)


def _emit(args: argparse.Namespace, document: dict[str, Any], header: Sequence[str], table: np.ndarray) -> None:
    if args.format == "json":
        report_io.write_json({**document, "columns": list(header), "rows": table}, args.out)
    else:
        report_io.write_table(header, table, args.out)


def _grid(args: argparse.Namespace, model: ModelSpec, settings: ToolkitSettings) -> TimeGrid:
    return default_grid(
        [model.disorder], args.dt or settings.dt, args.horizon, settings.horizon_mean_disorder_times
    )


def cmd_simulate(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    model = load_model(args.model)
    grid = _grid(args, model, settings)
    indices = range(args.first, args.first + args.paths)
    if args.path_dir:
        target = Path(args.path_dir)
        target.mkdir(parents=True, exist_ok=True)
        for i in indices:
            write_path_csv(simulate_scenario(model, grid, args.seed, i), target / f"path_{i}.csv")
        logging.info(f"wrote {len(indices)} path files to {target}")
        return 0
    batch = simulate_batch(model, grid, args.seed, indices)
    t = grid.times[:-1]
    blocks = []
    for i in range(len(batch)):
        x = batch.magnitude[i] * (batch.theta[i] <= t)
        index = np.full_like(t, batch.path_indices[i], dtype=float)
        blocks.append(np.column_stack([index, t, batch.dW[i], batch.dY[i], x]))
    document = {
        "seed": args.seed,
        "dt": grid.dt,
        "horizon": grid.horizon,
        "theta": batch.theta,
        "magnitude": batch.magnitude,
    }
    _emit(args, document, ["path", "t", "dW", "dY", "X"], np.vstack(blocks))
    return 0


def _observations(args: argparse.Namespace, model: ModelSpec, settings: ToolkitSettings) -> tuple[np.ndarray, TimeGrid]:
    if args.observations:
        table = np.loadtxt(args.observations, delimiter=",", skiprows=1, ndmin=2)
        columns = Path(args.observations).read_text().splitlines()[0].split(",")
        if "dY" not in columns:
            raise FilterInputError(f"{args.observations} has no dY column")
        dY = table[:, columns.index("dY")]
        dt = args.dt or settings.dt
        return dY[None, :], TimeGrid(dt, len(dY) * dt)
    grid = _grid(args, model, settings)
    return simulate_batch(model, grid, args.seed, [args.path_index]).dY, grid


def cmd_filter(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    model = load_model(args.model)
    dY, grid = _observations(args, model, settings)
    stream = EulerFilter.from_model(model, grid) if args.method == "euler" else ExactFilter.from_model(model, grid)
    posterior = PosteriorPath(grid, run_filter(stream, dY)[0])
    header = ["t", *[f"pi_{i + 1}" for i in range(model.n)], "pi_tilde", "x_hat"]
    _emit(args, {"method": args.method, "dt": grid.dt}, header, posterior.table(model.atoms))
    return 0


def cmd_solve(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    params = ClassicalParams(args.b, args.sigma, args.lam, args.c)
    solution = solve_shiryaev(params, args.resolution or settings.shiryaev_resolution)
    logging.info(f"threshold a={solution.threshold:.10f}")
    header = ["pi", "U", "U_prime"]
    if args.format == "json":
        _emit(args, solution.header(), header, solution.table())
        return 0
    text = f"# {json.dumps(solution.header(), sort_keys=True)}\n" + report_io.table_text(header, solution.table())
    if args.out is None:
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def cmd_risk(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    model = load_model(args.model)
    grid = _grid(args, model, settings)
    n_paths = args.paths or settings.n_paths
    run = dict(batch_size=settings.batch_size, workers=args.workers or settings.workers)
    if args.strategy:
        estimate = estimate_risk(model, parse_strategy(args.strategy), grid, n_paths, args.seed, **run)
        row = estimate.to_dict()
        header = ["mean", "half_width", "se", "false_alarm", "delay", "n_paths", "truncated"]
        _emit(args, row, header, np.array([[row[k] for k in header]], dtype=float))
        return 0
    optimum = optimize_threshold(
        model, grid, n_paths, args.seed, points=settings.scan_points,
        refine_iterations=settings.refine_iterations, **run,
    )
    document = {"a_star": optimum.a_star, **optimum.estimate.to_dict()}
    _emit(args, document, ["a", "mean", "half_width", "false_alarm", "delay"], optimum.scan_table())
    return 0


def cmd_dp(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    model = load_model(args.model)
    h = args.h or (settings.dp_h_1d if model.n == 1 else settings.dp_h_2d)
    solution = solve_dp(
        model, h, args.dt or settings.dp_dt, settings.dp_tol, settings.dp_max_iterations
    )
    coords = [f"pi_{i + 1}" for i in range(model.n)]
    document = {"iterations": solution.iterations, "sup_change": solution.sup_change, "h": h, "dt": solution.dt}
    _emit(args, document, [*coords, "value", "stop"], solution.table())
    if model.n == 2 and args.out is not None:
        try:
            boundary = extract_boundary(solution)
        except EmptyBoundaryError as e:
            logging.warning(f"no boundary written: {e}")
        else:
            report_io.write_table([*coords, "norm"], boundary.table(), report_io.sibling(args.out, "boundary"))
    return 0


def cmd_experiment(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    if not Path(args.config).is_file():
        raise FileNotFoundError(f"experiment config not found: {args.config}")
    config = load_experiment_config(args.config, settings.model_dump())
    report = run_experiment(config)
    write_report(report, args.out, args.format)
    if report.passed:
        return 0
    for row in report.failures:
        print(f"FAIL {row.check} at {row.point}: {row.relation} slack={row.slack:.4g} margin={row.margin:.4g}",
              file=sys.stderr)
    return 1


def cmd_serve(args: argparse.Namespace, settings: ToolkitSettings) -> int:
    from core.server import DynamicMCPServer

    transport_mode = os.getenv("MCP_TRANSPORT_MODE", args.transport)
    if transport_mode not in ["http", "stdio"]:
        raise ConfigError(f"Invalid transport mode: {transport_mode}. Must be one of: http, or stdio")
    server = DynamicMCPServer(name="mcp-disorder-detection", tools_dir=str(Path(__file__).parent / "tools"))
    server.load_tools()
    try:
        server.run(transport_mode=transport_mode, host=args.host, port=args.port)
    except KeyboardInterrupt:
        logging.info("Shutting down server...")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Master seed for every random stream (default: 0)")
    common.add_argument("--out", default=None, help="Output file (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    model_args = argparse.ArgumentParser(add_help=False)
    model_args.add_argument("--model", required=True, help="JSON model file")
    model_args.add_argument("--dt", type=float, default=None)
    model_args.add_argument("--horizon", type=float, default=None)

    parser = argparse.ArgumentParser(description="Bayesian quickest disorder detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, model_args], help="Simulate observation paths")
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--first", type=int, default=0, help="First path index")
    p.add_argument("--path-dir", default=None, help="Write one t,dW,dY,X file per path into this directory")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("filter", parents=[common, model_args], help="Posterior trajectory of one path")
    p.add_argument("--method", choices=["exact", "euler"], default="exact")
    p.add_argument("--path-index", type=int, default=0)
    p.add_argument("--observations", default=None, help="CSV with a dY column instead of a simulated path")
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("solve", parents=[common], help="Classical threshold and value function")
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--resolution", type=int, default=None)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("risk", parents=[common, model_args], help="Monte Carlo Bayes risk")
    p.add_argument("--strategy", default=None, help="threshold:A, mismatched:l=L,lambda=R,a=A or fixed:T")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_risk)

    p = sub.add_parser("dp", parents=[common], help="Value iteration on the simplex (n <= 2)")
    p.add_argument("--model", required=True)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(handler=cmd_dp)

    p = sub.add_parser("experiment", parents=[common], help="Run an experiment suite")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=cmd_experiment, format="json")

    p = sub.add_parser("serve", parents=[common], help="Start the MCP server")
    p.add_argument("--transport", choices=["stdio", "http"], default="stdio")
    p.add_argument("--host", default=os.getenv("HOST", "localhost"))
    p.add_argument("--port", type=int, default=int(os.getenv("PORT", "3000")))
    p.set_defaults(handler=cmd_serve)
    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code (0 ok, 1 failed checks, 2 bad input)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    try:
        settings = get_toolkit_settings()
        return int(args.handler(args, settings))
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DisorderError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    """Entry point for the installed script."""
    sys.exit(cli_main(sys.argv[1:]))


def dev() -> None:
    """Entry point for the 'dev' script: MCP over HTTP."""
    sys.exit(cli_main(["serve", "--transport", "http"]))


def start() -> None:
    """Entry point for the 'start' script: MCP over stdio."""
    sys.exit(cli_main(["serve", "--transport", "stdio"]))


if __name__ == "__main__":
    main()
