from .beliefs import (
    action_probability,
    belief_transition,
    cost_of_lying,
    expected_utility,
    in_learning_set,
    is_truth_telling,
    outside_best_response,
    posterior_state,
    public_log_ratio,
    signal_probability,
    state_posterior_given_summary,
    tax,
)
from .types import ACTIONS, MechanismPolicy, ModelParams, Prescription, SummaryBelief

__all__ = [
    "ACTIONS",
    "MechanismPolicy",
    "ModelParams",
    "Prescription",
    "SummaryBelief",
    "action_probability",
    "belief_transition",
    "cost_of_lying",
    "expected_utility",
    "in_learning_set",
    "is_truth_telling",
    "outside_best_response",
    "posterior_state",
    "public_log_ratio",
    "signal_probability",
    "state_posterior_given_summary",
    "tax",
]
