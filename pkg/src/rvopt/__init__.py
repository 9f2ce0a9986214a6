"""Trajectory optimization for energy-sharing UAV-UGV rendezvous missions.

A ground vehicle confined to a star-shaped road network doubles as a mobile
charger for an aerial vehicle that must visit a set of task locations. The
joint minimum-time trajectory problem has disjunctive constraints (visit
scheduling, charge-or-discharge); this package replaces them with softmin
approximations (lp-norm or log-sum-exp), solves the smooth program with an
augmented Lagrangian method, and ships a big-M mixed-integer oracle for
micro-scale cross-checks.
"""

from .alm_solver import AlmConfig, SolveReport, SolveStatus, solve
from .instances import (GeneratorConfig, fixture_map, generate,
                        paper_default_params, warm_start)
from .minlp_oracle import (Assignment, ExactSolveResult, MinlpModel,
                           OracleLimits, bigM_residuals, solve_exact)
from .model import (Arm, DecisionVector, PhysicalParams, ProblemInstance,
                    StarGraph, VariableLayout, default_stamp_count,
                    graph_position, graph_position_jacobian, load_instance,
                    project_to_network, save_instance)
from .smoothing import (SmoothingConfig, SoftminMethod, sigma_delta,
                        softmin_lp, softmin_lse)
from .transcription import (ResidualBundle, Transcription, ViolationBreakdown,
                            full_gradient, violation_report)

__version__ = "0.1.0"

__all__ = [
    "AlmConfig", "Arm", "Assignment", "DecisionVector", "ExactSolveResult",
    "GeneratorConfig", "MinlpModel", "OracleLimits", "PhysicalParams",
    "ProblemInstance", "ResidualBundle", "SmoothingConfig", "SoftminMethod",
    "SolveReport", "SolveStatus", "StarGraph", "Transcription",
    "VariableLayout", "ViolationBreakdown", "bigM_residuals",
    "default_stamp_count", "fixture_map", "full_gradient", "generate",
    "graph_position", "graph_position_jacobian", "load_instance",
    "paper_default_params", "project_to_network", "save_instance",
    "sigma_delta", "softmin_lp", "softmin_lse", "solve", "solve_exact",
    "violation_report", "warm_start",
]
