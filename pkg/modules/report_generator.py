import json
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
from jinja2 import Environment
from pydantic import BaseModel, ConfigDict, Field

from modules.game_model import AssumptionACertificate, Scenario, evader_radius
from modules.game_value import GameValue
from modules.simulator import SimResult
from utils.config import config
from utils.helpers import create_output_folder, format_timestamp

# Coordinates shown in the text rendering before eliding.
SHOWN_COORDINATES = 6

TEXT_TEMPLATE = """\
{{ title }}
{% if report.scenario_digest %}Scenario: {{ report.scenario_digest[:12] }} (d={{ report.dimension }}, N={{ report.pursuers }}, theta={{ report.theta }}, sigma={{ report.sigma }})
{% endif %}{% if report.value %}Value: gamma = {{ "%.6f"|format(report.value.gamma) }} [{{ report.value.method }}]{% if report.value.lower is not none %} bracket [{{ "%.6f"|format(report.value.lower) }}, {{ "%.6f"|format(report.value.upper) }}]{% endif %}
  witness: {{ report.value.witness|coords }}
  tightest pursuer: {{ report.value.tightest_pursuer }} (deficit {{ "%.6f"|format(report.value.min_deficit) }})
{% endif %}{% if report.assumption_a %}Assumption (A): holds, p0 = {{ report.assumption_a.p0|coords }}, slack {{ "%.3e"|format(report.assumption_a.min_slack) }}{% if report.assumption_a.marginal %} (marginal){% endif %}
{% elif report.scenario_digest %}Assumption (A): no certificate found; the covering guarantee is not certified
{% endif %}{% for row in report.example %}  d={{ "%-6d"|format(row.dimension) }} gamma={{ "%.6f"|format(row.gamma) }}{% if row.analytic is not none %} analytic={{ "%.6f"|format(row.analytic) }} error={{ "%.1e"|format(row.error) }}{% endif %}{% if row.oracle_lower is not none %} oracle=[{{ "%.4f"|format(row.oracle_lower) }}, {{ "%.4f"|format(row.oracle_upper) }}]{% endif %}
{% endfor %}{% for sim in report.simulations %}  run {{ loop.index0 }} ({{ sim.strategy }}): payoff {{ "%.6f"|format(sim.payoff) }}{% if sim.label %} [{{ sim.label }}]{% endif %}
{% endfor %}{% for key, value in report.extras.items() %}  {{ key }}: {{ value }}
{% endfor %}{% for v in report.verdicts %}{{ "PASS" if v.passed else "FAIL" }} {{ v.check }} (margin {{ "%.3e"|format(v.margin) }}){% if v.detail %}: {{ v.detail }}{% endif %}
{% endfor %}"""


class Verdict(BaseModel):
    check: str
    passed: bool
    margin: float
    detail: str = ""


class ValueSummary(BaseModel):
    gamma: float
    method: str
    witness: List[float]
    deficits: Dict[str, float]
    min_deficit: float
    tightest_pursuer: int
    lower: Optional[float] = None
    upper: Optional[float] = None


class AssumptionSummary(BaseModel):
    p0: List[float]
    min_slack: float
    marginal: bool
    degenerate: bool


class ExampleRow(BaseModel):
    dimension: int
    gamma: float
    analytic: Optional[float] = None
    error: Optional[float] = None
    oracle_lower: Optional[float] = None
    oracle_upper: Optional[float] = None


class SimulationSummary(BaseModel):
    model_config = ConfigDict(extra='allow')
    strategy: str
    payoff: float
    label: str = ""


class RunReport(BaseModel):
    command: str
    scenario_digest: Optional[str] = None
    dimension: Optional[int] = None
    pursuers: Optional[int] = None
    theta: Optional[float] = None
    sigma: Optional[float] = None
    seed: Optional[int] = None
    value: Optional[ValueSummary] = None
    assumption_a: Optional[AssumptionSummary] = None
    example: List[ExampleRow] = Field(default_factory=list)
    simulations: List[SimulationSummary] = Field(default_factory=list)
    verdicts: List[Verdict] = Field(default_factory=list)
    extras: Dict[str, Any] = Field(default_factory=dict)
    generated_at: str = ""

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def _coords(values: List[float]) -> str:
    shown = ", ".join(f"{c:.4f}" for c in values[:SHOWN_COORDINATES])
    if len(values) > SHOWN_COORDINATES:
        shown += f", ... ({len(values)} coordinates)"
    return f"({shown})"


class ReportGenerator:
    """Assemble run reports and write them as text, JSON and CSV."""

    def __init__(self):
        self.env = Environment(trim_blocks=False, lstrip_blocks=False, autoescape=False)
        self.env.filters['coords'] = _coords
        self.template = self.env.from_string(TEXT_TEMPLATE)

    def new_report(self, command: str, scenario: Scenario = None, seed: int = None) -> RunReport:
        report = RunReport(command=command, seed=seed, generated_at=datetime.now().isoformat(timespec='seconds'))
        if scenario is not None:
            report.scenario_digest = scenario.digest
            report.dimension = scenario.dimension
            report.pursuers = scenario.size
            report.theta = scenario.theta
            report.sigma = scenario.sigma
        return report

    def value_summary(self, s: Scenario, gv: GameValue) -> ValueSummary:
        tightest = int(np.argmin(gv.deficits))
        return ValueSummary(
            gamma=gv.gamma,
            method=gv.method,
            witness=[float(c) for c in gv.witness],
            deficits={str(int(i)): float(d) for i, d in zip(s.ids, gv.deficits)},
            min_deficit=float(gv.deficits[tightest]),
            tightest_pursuer=int(s.ids[tightest]),
            lower=gv.lower,
            upper=gv.upper,
        )

    def assumption_summary(self, cert: Optional[AssumptionACertificate]) -> Optional[AssumptionSummary]:
        if cert is None:
            return None
        return AssumptionSummary(p0=[float(c) for c in cert.p0], min_slack=cert.min_slack,
                                 marginal=cert.marginal, degenerate=cert.degenerate)

    def simulation_summary(self, result: SimResult, label: str = "") -> SimulationSummary:
        return SimulationSummary(label=label, **result.summary())

    def verdict(self, check: str, margin: float, detail: str = "") -> Verdict:
        """A check passes when its margin is nonnegative."""
        return Verdict(check=check, passed=bool(margin >= 0), margin=float(margin), detail=detail)

    def witness_verdict(self, s: Scenario, gv: GameValue) -> Verdict:
        slack = evader_radius(s) + config.CONTAINMENT_TOL - float(np.linalg.norm(gv.witness - s.y0))
        return self.verdict("witness lies in the evader ball", slack)

    def render_text(self, report: RunReport) -> str:
        title = f"Pursuit game report: {report.command}"
        if report.generated_at:
            title += f" ({format_timestamp(datetime.fromisoformat(report.generated_at))})"
        return self.template.render(report=report, title=title).rstrip() + "\n"

    def to_json(self, report: RunReport) -> str:
        return json.dumps(report.model_dump(mode='json'), indent=2, allow_nan=False)

    def write_json(self, report: RunReport, path: str) -> str:
        create_output_folder(os.path.dirname(path) or ".")
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.to_json(report))
        return path

    def write_trajectories(self, result: SimResult, path: str) -> str:
        """CSV with header t,player_id,role,c0,...,c{d-1}."""
        create_output_folder(os.path.dirname(path) or ".")
        result.to_frame().to_csv(path, index=False)
        return path


# Global generator instance
generator = ReportGenerator()
