"""Run_experiment tool for MCP server.
"""

from typing import Any

from mcp.types import ToolAnnotations

from core.server import mcp
from core.utils import get_tool_config, get_toolkit_settings
from disorder.errors import DisorderError
from disorder.experiments import parse_experiment_config
from disorder.experiments import run_experiment as run


@mcp.tool(
    annotations=ToolAnnotations(
        title="Run_experiment",
        readOnlyHint=True,
    ),
)
def run_experiment(config: dict[str, Any]) -> dict[str, Any]:
    """Run one experiment suite and return its report.

    Args:
        config: Experiment document: name (e.g. "robustness_sandwich"), model, sweep, seed, n_paths and suite options

    Returns:
        dict: report with rows, pass/fail per inequality and metadata, or an error
    """
    limits = get_tool_config("run_experiment")
    max_paths = int(limits.get("max_paths", 20000))
    try:
        defaults = get_toolkit_settings().model_dump()
        defaults["n_paths"] = min(defaults["n_paths"], max_paths)
        parsed = parse_experiment_config(config, defaults)
        if parsed.n_paths > max_paths:
            return {"error": f"n_paths {parsed.n_paths} exceeds the tool limit {max_paths}"}
        return run(parsed).to_dict()
    except DisorderError as e:
        return {"error": f"{type(e).__name__}: {e}"}
