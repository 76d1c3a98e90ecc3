"""
Summary-belief calculus.

Posterior of the state given a summary belief, the learning-set test, the outside-option
best response of an agent, the belief transition after a public action, and the two
quantities that decide whether a prescription is usable: its cost of lying (truth-telling
feasibility) and its profit-maximizing tax.

All ratio comparisons are made on the log-likelihood scale, so beliefs far out in the
summary do not overflow.
"""

import logging
import math
from collections import defaultdict

from ..errors import UnreachableObservationError
from .types import ACTIONS, ModelParams, Prescription, SummaryBelief
from .utils import log_weighted_posterior, prune_and_normalize, summary_posterior

logger = logging.getLogger(__name__)

LOG_TOLERANCE = 1e-12
FEASIBILITY_TOLERANCE = 1e-12
PRUNE_THRESHOLD = 1e-15
ZERO_TAX_TOLERANCE = 1e-15


def state_posterior_given_summary(params: ModelParams, n: int, w: int) -> float:
    """``q(w | n)``: posterior of state ``w`` once the summary of past signals is known to be ``n``."""
    return summary_posterior(params.log_ratio, n, w)


def posterior_state(params: ModelParams, eta: SummaryBelief) -> float:
    """Public posterior probability of ``W = +1`` under belief ``eta``."""
    return math.fsum(v * summary_posterior(params.log_ratio, n, 1) for n, v in eta.items())


def public_log_ratio(params: ModelParams, eta: SummaryBelief) -> float:
    """``log(pi(+1) / pi(-1))`` for the public posterior; ``+inf``/``-inf`` when one side vanishes."""
    log_plus = log_weighted_posterior(params.log_ratio, eta.mass, 1)
    log_minus = log_weighted_posterior(params.log_ratio, eta.mass, -1)
    if log_minus == -math.inf:
        return math.inf
    if log_plus == -math.inf:
        return -math.inf
    return log_plus - log_minus


def in_learning_set(params: ModelParams, eta: SummaryBelief) -> bool:
    """
    Whether an agent's action under ``eta`` still reveals her private signal.

    The boundary ``p/pbar <= ratio <= pbar/p`` is inclusive.
    """
    ratio = public_log_ratio(params, eta)
    return abs(ratio) <= params.log_ratio + LOG_TOLERANCE


def outside_best_response(params: ModelParams, eta: SummaryBelief, y: int) -> int:
    """
    Action an agent with signal ``y`` takes without joining the mechanism.

    Ties (posterior-times-likelihood ratio exactly 1) are broken towards ``+1``.
    """
    ratio = public_log_ratio(params, eta) + y * params.log_ratio
    return 1 if ratio >= -LOG_TOLERANCE else -1


def signal_probability(params: ModelParams, n: int, y: int) -> float:
    """``P(y | n) = sum_w q(w|n) Q^y(y|w)``."""
    q_plus = summary_posterior(params.log_ratio, n, 1)
    return q_plus * params.signal_likelihood(y, 1) + (1.0 - q_plus) * params.signal_likelihood(y, -1)


def _action_weights(
    params: ModelParams, eta: SummaryBelief, a: int, theta: Prescription
) -> dict[int, float]:
    weights: dict[int, float] = defaultdict(float)
    for n, v in eta.items():
        for y in ACTIONS:
            prob = theta.prob(a, n, y)
            if prob > 0.0:
                weights[n + y] += v * signal_probability(params, n, y) * prob
    return weights


def action_probability(params: ModelParams, eta: SummaryBelief, theta: Prescription, a: int) -> float:
    """Probability that the public action is ``a`` when agents report truthfully and obey ``theta``."""
    return math.fsum(_action_weights(params, eta, a, theta).values())


def belief_transition(params: ModelParams, eta: SummaryBelief, a: int, theta: Prescription) -> SummaryBelief:
    """
    Update the public summary belief after observing action ``a`` taken under prescription ``theta``.

    Args:
    ----
        params: Model constants
        eta: Belief before the action
        a: The observed action, +1 or -1
        theta: The prescription in force at this step

    Returns:
    -------
        The normalized belief over ``n + y``; entries below 1e-15 are pruned

    Raises:
    ------
        UnreachableObservationError: if ``a`` has probability zero under ``eta`` and ``theta``

    """
    weights = _action_weights(params, eta, a, theta)
    total = math.fsum(weights.values())
    if total <= 0.0:
        raise UnreachableObservationError(
            f"action {a:+d} has zero probability under prescription {theta.name!r} at belief {eta.support}"
        )
    return SummaryBelief.model_construct(mass=prune_and_normalize(weights, PRUNE_THRESHOLD))


def _weighted_terms(params: ModelParams, eta: SummaryBelief, y: int):
    # (n, w, Q^y(y|w) eta(n) q(w|n)) for every support point and state
    for n, v in eta.items():
        q_plus = summary_posterior(params.log_ratio, n, 1)
        for w, q_w in ((1, q_plus), (-1, 1.0 - q_plus)):
            yield n, w, params.signal_likelihood(y, w) * v * q_w


def cost_of_lying(params: ModelParams, eta: SummaryBelief, theta: Prescription, y: int) -> float:
    """
    Expected utility an agent with signal ``y`` loses by reporting ``-y`` instead of ``y``.

    ``theta`` is truth-telling feasible at ``eta`` iff this is nonnegative for both signals.
    """
    return math.fsum(g * (theta.prob(w, n, y) - theta.prob(w, n, -y)) for n, w, g in _weighted_terms(params, eta, y))


def is_truth_telling(params: ModelParams, eta: SummaryBelief, theta: Prescription) -> bool:
    return all(cost_of_lying(params, eta, theta, y) >= -FEASIBILITY_TOLERANCE for y in ACTIONS)


def tax(params: ModelParams, eta: SummaryBelief, theta: Prescription) -> float:
    """
    Profit-maximizing tax: the expected utility gain of obeying ``theta`` over the outside option.

    This binds individual rationality, so the coordinator extracts the whole informational surplus.
    """
    terms = []
    for y in ACTIONS:
        outside = outside_best_response(params, eta, y)
        terms.extend(
            g * (theta.prob(w, n, y) - (1.0 if outside == w else 0.0)) for n, w, g in _weighted_terms(params, eta, y)
        )
    total = math.fsum(terms)
    # float residue from ties with the outside option
    return 0.0 if abs(total) < ZERO_TAX_TOLERANCE else total


def expected_utility(params: ModelParams, eta: SummaryBelief, theta: Prescription) -> float:
    """Expected gross utility ``P(A = W)`` of an agent who reports truthfully and obeys ``theta``."""
    return math.fsum(
        g * theta.prob(w, n, y) for y in ACTIONS for n, w, g in _weighted_terms(params, eta, y)
    )
