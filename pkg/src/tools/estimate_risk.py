"""Estimate_risk tool for MCP server.
"""

from typing import Any, Optional

from mcp.types import ToolAnnotations

from core.server import mcp
from core.utils import get_tool_config, get_toolkit_settings
from disorder.errors import DisorderError
from disorder.model import validate
from disorder.risk import estimate_risk as estimate
from disorder.risk import optimize_threshold, parse_strategy
from disorder.sim import default_grid


@mcp.tool(
    annotations=ToolAnnotations(
        title="Estimate_risk",
        readOnlyHint=True,
    ),
)
def estimate_risk(
    model: dict[str, Any],
    strategy: str = "",
    n_paths: int = 2000,
    seed: int = 0,
    dt: Optional[float] = None,
    horizon: Optional[float] = None,
) -> dict[str, Any]:
    """Monte Carlo Bayes risk of a stopping strategy, or the best threshold rule.

    Args:
        model: Model document with atoms, pi_tilde, disorder, sigma and cost

        strategy: "threshold:A", "mismatched:l=L,lambda=R,a=A" or "fixed:T". Leave empty to scan thresholds for the best one.

        n_paths: Number of simulated paths, capped by the tool's max_paths setting (default: 2000)

        seed: Master seed; equal seeds reuse the same scenarios (default: 0)

        dt: [Optional] time step, toolkit default otherwise

        horizon: [Optional] simulation horizon, 8 mean disorder times otherwise

    Returns:
        dict: risk estimate (mean, half_width, false_alarm, delay) or an error
    """
    config = get_tool_config("estimate_risk")
    max_paths = int(config.get("max_paths", 20000))
    if not 1 < n_paths <= max_paths:
        return {"error": f"n_paths must lie in [2, {max_paths}], got {n_paths}"}

    try:
        settings = get_toolkit_settings()
        spec = validate(model)
        grid = default_grid(
            [spec.disorder], dt or settings.dt, horizon, settings.horizon_mean_disorder_times
        )
        run = dict(batch_size=settings.batch_size, workers=settings.workers)
        if not strategy:
            optimum = optimize_threshold(
                spec, grid, n_paths, seed, points=settings.scan_points,
                refine_iterations=settings.refine_iterations, **run,
            )
            return {
                "a_star": optimum.a_star,
                **optimum.estimate.to_dict(),
                "scan": [vars(row) for row in optimum.scan],
            }
        result = estimate(spec, parse_strategy(strategy), grid, n_paths, seed, **run)
        return {**result.to_dict(), "horizon_too_short": result.horizon_too_short}
    except DisorderError as e:
        return {"error": f"{type(e).__name__}: {e}"}
