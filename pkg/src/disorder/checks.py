"""Statistical pass rule for inequalities between estimated quantities.

``A <= B`` passes when ``B - A >= -(z * sqrt(se_A^2 + se_B^2) + allowance)``,
where the allowance covers deterministic discretization effects (dt, h).
"""

import math
from dataclasses import asdict, dataclass
from typing import Any

# result each named check bears on; reports carry it for traceability
ANCHORS: dict[str, str] = {
    "mismatch-upper-bound": "robustness:mismatched-filter-bound",
    "coupled-stopping-order": "robustness:mismatched-filter-bound",
    "threshold-upper-bound": "robustness:threshold-bound",
    "threshold-suboptimal": "robustness:lower-bounds",
    "mismatch-suboptimal": "robustness:lower-bounds",
    "mismatch-suboptimal-r": "robustness:lower-bounds",
    "lower-bracket": "robustness:lower-bounds",
    "classical-value-vs-mc": "classical:solver-oracle",
    "solver-value-vs-mc": "classical:solver-oracle",
    "solver-threshold-vs-mc": "classical:solver-oracle",
    "threshold-decreasing-in-sigma": "classical:threshold-monotonicity",
    "threshold-increasing-in-magnitude": "classical:threshold-monotonicity",
    "threshold-decreasing-in-cost": "classical:threshold-monotonicity",
    "threshold-increasing-in-lambda": "classical:threshold-monotonicity",
    "risk-increasing-in-sigma": "monotonicity:volatility",
    "risk-decreasing-in-scale": "monotonicity:magnitude-scale",
    "risk-increasing-in-cost": "monotonicity:cost",
    "loss-pathwise-increasing-in-cost": "monotonicity:cost",
    "solver-below-weaker-intensity": "monotonicity:intensity",
    "dominating-intensity-lower-risk": "monotonicity:intensity",
    "bracket-lower": "magnitude:risk-gap",
    "bracket-upper": "magnitude:risk-gap",
    "mismatch-gap-nonnegative": "magnitude:risk-gap",
    "mismatch-gap-bounded": "magnitude:risk-gap",
    "dp-matches-solver": "dp:classical-agreement",
    "stop-onset-near-threshold": "dp:classical-agreement",
    "strip-lower": "boundary:strip",
    "strip-upper": "boundary:strip",
    "false-alarm-floor": "boundary:strip",
    "false-alarm-ceiling": "boundary:strip",
    "dp-below-threshold-optimum": "boundary:threshold-upper-bound",
    "value-concave": "value:concavity",
    "value-nonincreasing-on-rays": "value:concavity",
    "discrepancy-ratio-lower": "filter:euler-order",
    "discrepancy-ratio-upper": "filter:euler-order",
    "posterior-mean-matches-cdf": "filter:posterior-mean",
}


@dataclass(frozen=True)
class InequalityCheck:
    check: str
    lhs_label: str
    lhs: float
    rhs_label: str
    rhs: float
    lhs_se: float = 0.0
    rhs_se: float = 0.0
    z: float = 3.0
    allowance: float = 0.0
    gating: bool = True
    anchor: str = ""

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def margin(self) -> float:
        return self.z * math.hypot(self.lhs_se, self.rhs_se) + self.allowance

    @property
    def passed(self) -> bool:
        return self.slack >= -self.margin

    @property
    def relation(self) -> str:
        return f"{self.lhs_label} <= {self.rhs_label}"

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out.update(slack=self.slack, margin=self.margin, passed=self.passed, relation=self.relation)
        return out


def at_most(
    check: str,
    lhs: tuple[str, float, float],
    rhs: tuple[str, float, float],
    z: float,
    allowance: float = 0.0,
    gating: bool = True,
) -> InequalityCheck:
    """Build ``lhs <= rhs`` from (label, value, standard error) triples."""
    return InequalityCheck(
        check=check,
        lhs_label=lhs[0],
        lhs=float(lhs[1]),
        lhs_se=float(lhs[2]),
        rhs_label=rhs[0],
        rhs=float(rhs[1]),
        rhs_se=float(rhs[2]),
        z=z,
        allowance=allowance,
        gating=gating,
        anchor=ANCHORS.get(check, ""),
    )
