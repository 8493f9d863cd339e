"""Solve_shiryaev tool for MCP server.
"""

from typing import Any, Optional

from mcp.types import ToolAnnotations

from core.server import mcp
from core.utils import get_tool_config
from disorder.errors import DisorderError
from disorder.shiryaev import ClassicalParams, solve_shiryaev as solve


@mcp.tool(
    annotations=ToolAnnotations(
        title="Solve_shiryaev",
        readOnlyHint=True,
    ),
)
def solve_shiryaev(
    b: float,
    sigma: float,
    lam: float,
    c: float,
    pi: Optional[list[float]] = None,
    include_table: bool = False,
) -> dict[str, Any]:
    """Optimal threshold and value function of the classical disorder problem.

    Args:
        b: Post-change drift (non-zero)

        sigma: Observation volatility (> 0)

        lam: Exponential disorder rate (> 0)

        c: Delay cost per unit time (> 0)

        pi: [Optional] prior probabilities at which to evaluate U and U'

        include_table: Return the tabulated U and U' on the uniform grid (default: False)

    Returns:
        dict: threshold, the lower bound lam / (lam + c), requested values, or an error
    """
    config = get_tool_config("solve_shiryaev")
    try:
        params = ClassicalParams(b, sigma, lam, c)
        solution = solve(params, int(config.get("resolution", 2001)))
    except DisorderError as e:
        return {"error": f"{type(e).__name__}: {e}"}

    result: dict[str, Any] = {
        **solution.header(),
        "lower_bound": lam / (lam + c),
    }
    if pi:
        if any(not 0.0 <= p <= 1.0 for p in pi):
            return {"error": "pi values must lie in [0, 1]"}
        result["values"] = [
            {"pi": p, "U": solution.value(p), "U_prime": solution.derivative(p)} for p in pi
        ]
    if include_table:
        result["table"] = solution.table().tolist()
    return result
