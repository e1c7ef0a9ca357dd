"""Prescribed-performance consensus of double-integrator agents on switching graphs."""

from .analysis import compliance, consensus_metrics, export_csv, lyapunov
from .controller import FeasibilityReport, GainSet, control, validate_gains
from .errors import (
    ConsensusError,
    DomainError,
    FunnelViolation,
    GainValidationError,
    InfeasibleActivation,
    IntegrationBlowup,
    ScenarioError,
    SimulationHalted,
    StructuralError,
)
from .performance import PerformanceFunction, alpha, alpha_bar, rho, rho_dot
from .scenario_file import paper_scenario, parse_scenario
from .simulator import Scenario, SystemState, Trajectory, simulate
from .topology import Graph, SwitchingSchedule, build_incidence, is_jointly_connected

__version__ = "0.1.0"
