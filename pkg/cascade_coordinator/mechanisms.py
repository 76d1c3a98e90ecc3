"""
Concrete prescriptions and the two reference mechanisms.

``theta_L`` lets the action reveal the report, ``theta_cascade`` herds on a fixed action and
``theta_N`` follows the sign of the summary including the current report, keeping the previous
recommendation when the likelihood ratio is exactly balanced.

BHW plays ``theta_L`` inside the learning set and cascades outside it. NSII plays ``theta_L``
inside the learning set and ``theta_N`` everywhere else.
"""

from collections.abc import Callable
from enum import Enum
from functools import cache

from .core import MechanismPolicy, ModelParams, Prescription, SummaryBelief, in_learning_set, public_log_ratio
from .core.utils import sign
from .errors import ConfigurationError


class Mechanism(str, Enum):
    BHW = "bhw"
    NSII = "nsii"


@cache
def theta_L() -> Prescription:
    return Prescription.from_rule("theta_L", lambda n, m: 1.0 if m == 1 else 0.0)


@cache
def theta_cascade(direction: int) -> Prescription:
    """Constant recommendation ``direction`` for every ``(n, m)``."""
    if direction not in (-1, 1):
        raise ConfigurationError(f"cascade direction must be -1 or +1, got {direction}")
    prob_plus = 1.0 if direction == 1 else 0.0
    return Prescription.from_rule("theta_C+" if direction == 1 else "theta_C-", lambda n, m: prob_plus)


def _no_switch_if_indifferent(n: int, m: int) -> float:
    total = n + m
    return 1.0 if sign(total if total != 0 else n) == 1 else 0.0


@cache
def theta_N() -> Prescription:
    return Prescription.from_rule("theta_N", _no_switch_if_indifferent)


def bhw_policy(params: ModelParams) -> MechanismPolicy:
    def rule(eta: SummaryBelief) -> Prescription:
        if in_learning_set(params, eta):
            return theta_L()
        if public_log_ratio(params, eta) > params.log_ratio:
            return theta_cascade(1)
        return theta_cascade(-1)

    return MechanismPolicy(name="bhw", rule=rule)


def nsii_policy(params: ModelParams) -> MechanismPolicy:
    def rule(eta: SummaryBelief) -> Prescription:
        return theta_L() if in_learning_set(params, eta) else theta_N()

    return MechanismPolicy(name="nsii", rule=rule)


def custom_policy(name: str, rule: Callable[[SummaryBelief], Prescription]) -> MechanismPolicy:
    """Wrap a user rule; truth-telling feasibility is checked where the policy is used."""
    return MechanismPolicy(name=name, rule=rule)


def policy_for(mechanism: Mechanism | str, params: ModelParams) -> MechanismPolicy:
    try:
        mechanism = Mechanism(mechanism)
    except ValueError:
        raise ConfigurationError(f"unknown mechanism {mechanism!r}; expected one of bhw, nsii") from None
    if mechanism is Mechanism.BHW:
        return bhw_policy(params)
    return nsii_policy(params)
