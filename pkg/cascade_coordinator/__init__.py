"""Cascade coordinator: sequential Bayesian social learning with a self-interested information coordinator."""

try:
    from importlib.metadata import version

    __version__ = version("cascade-coordinator")
except Exception:
    # Fallback for local development
    __version__ = "0.0.0.dev0"

from .analytic import ChainModel, WelfareReport, build_chain, coordinator_revenue, welfare_report
from .core import MechanismPolicy, ModelParams, Prescription, SummaryBelief
from .mechanisms import Mechanism, bhw_policy, nsii_policy, policy_for
from .mdp_solver import DpSolution, evaluate_policy_finite, solve_finite_horizon
from .simulator import EpisodeRecord, estimate, run_episode

__all__ = [
    "ChainModel",
    "DpSolution",
    "EpisodeRecord",
    "Mechanism",
    "MechanismPolicy",
    "ModelParams",
    "Prescription",
    "SummaryBelief",
    "WelfareReport",
    "bhw_policy",
    "build_chain",
    "coordinator_revenue",
    "estimate",
    "evaluate_policy_finite",
    "nsii_policy",
    "policy_for",
    "run_episode",
    "solve_finite_horizon",
    "welfare_report",
]
