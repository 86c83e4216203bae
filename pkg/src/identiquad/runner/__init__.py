"""Scenario files, trajectories, closed-loop simulation and outputs."""

from .scenario import Scenario, ScenarioError, load, loads
from .simulate import RunResult, ScenarioInfeasible, analyze, simulate

__all__ = ["Scenario", "ScenarioError", "load", "loads", "RunResult", "ScenarioInfeasible",
           "analyze", "simulate"]
