from .log import COLUMNS, RunMetrics, Verdict, check_rows, compute_metrics, read_csv, replay_check, write_csv
from .runner import RunResult, Simulation, run
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "COLUMNS",
    "RunMetrics",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "Verdict",
    "check_rows",
    "compute_metrics",
    "load_scenario",
    "parse_scenario",
    "read_csv",
    "replay_check",
    "run",
    "write_csv",
]
