"""Scenario files in, verification reports out."""

from .checks import REGISTRY, SUITES, expand_checks
from .report import FORMATS, Report, emit_report, run_suite
from .scenario import ScenarioSpec, parse_scenario

__all__ = [
    "FORMATS", "REGISTRY", "SUITES", "Report", "ScenarioSpec", "emit_report", "expand_checks",
    "parse_scenario", "run_suite",
]
