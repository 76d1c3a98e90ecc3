"""
Markov reward chain of public beliefs under NSII.

Starting from ``1_0``, NSII only ever visits the beliefs ``xi_k``: point masses for
``|k| <= 2`` and, further out, the beliefs obtained by repeatedly observing the cascade
action under ``theta_N``. Odd states always move outwards; even states beyond 2 either move
outwards or, when the hidden summary was 0 and the signal disagreed, collapse back to
``xi_{-1}`` (or ``xi_{+1}`` on the negative side). The coordinator's revenue is the value of
this chain with the per-state tax as reward.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import sparse

from ..core import ModelParams, SummaryBelief, belief_transition
from ..errors import ConfigurationError, ConvergenceError
from ..mechanisms import theta_N

logger = logging.getLogger(__name__)

DEFAULT_TRUNCATION = 200
VALUE_TOLERANCE = 1e-12
MAX_ITERATIONS = 10**6


class ChainModel(BaseModel):
    """
    The NSII belief chain truncated to ``k in [-K, K]``.

    Arrays are indexed by ``k + K``. The states ``+-K`` keep their return transition and fold
    the outward mass into a self loop.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ModelParams
    truncation: int
    states: tuple[SummaryBelief, ...]
    trans: sparse.csr_matrix
    taxes: np.ndarray

    def index(self, k: int) -> int:
        if abs(k) > self.truncation:
            raise IndexError(f"state {k} lies outside the truncated chain [-{self.truncation}, {self.truncation}]")
        return k + self.truncation

    def state(self, k: int) -> SummaryBelief:
        return self.states[self.index(k)]

    def q(self, j: int, k: int) -> float:
        """Transition probability from ``xi_j`` to ``xi_k``."""
        return float(self.trans[self.index(j), self.index(k)])

    def r(self, k: int) -> float:
        return float(self.taxes[self.index(k)])

    def index_of(self, eta: SummaryBelief, tolerance: float = 1e-9) -> int | None:
        """The label ``k`` of the chain state within total variation ``tolerance`` of ``eta``, if any."""
        lo, hi = min(eta.support), max(eta.support)
        # xi_k has support within [-|k|, |k|] and max support point k for k > 0
        for k in (hi, lo, hi + 1, lo - 1, 0):
            if abs(k) <= self.truncation and self.state(k).total_variation(eta) <= tolerance:
                return k
        for k in range(-self.truncation, self.truncation + 1):
            if self.state(k).total_variation(eta) <= tolerance:
                return k
        return None

    def truncation_bound(self, delta: float) -> float:
        """Upper bound on the revenue error introduced by truncating at ``K``."""
        if delta == 0.0:
            return 0.0
        return delta**self.truncation * float(self.taxes.max()) / (1.0 - delta)


def _nsii_states(params: ModelParams, truncation: int) -> list[SummaryBelief]:
    positive = [SummaryBelief.point(k) for k in range(3)]
    for _ in range(3, truncation + 1):
        positive.append(belief_transition(params, positive[-1], 1, theta_N()))
    negative = [xi.mirror() for xi in reversed(positive[1:])]
    return negative + positive


def build_chain(params: ModelParams, truncation: int = DEFAULT_TRUNCATION) -> ChainModel:
    """
    Build the NSII Markov reward chain.

    Args:
    ----
        params: Model constants
        truncation: Largest ``|k|`` kept; ``+-K`` become (nearly) absorbing

    Returns:
    -------
        The chain with beliefs, transition matrix and per-state taxes

    """
    if truncation < 4:
        raise ConfigurationError(f"chain truncation K must be at least 4, got {truncation}")

    K = truncation
    states = _nsii_states(params, K)
    p, pbar = params.p, params.pbar
    size = 2 * K + 1

    trans = sparse.lil_matrix((size, size))
    taxes = np.zeros(size)

    def add(j: int, k: int, prob: float) -> None:
        trans[j + K, k + K] += prob

    add(0, 1, 0.5)
    add(0, -1, 0.5)
    for i in (1, -1):
        add(i, 2 * i, pbar**2 + p**2)
        add(i, 0, 1.0 - pbar**2 - p**2)
        add(2 * i, 3 * i, 1.0)
        for k in range(3, K + 1):
            zero_mass = states[i * k + K][0]
            taxes[i * k + K] = 0.5 * (pbar - p) * zero_mass
            forward = i * k if k == K else i * (k + 1)
            if k % 2 == 1:
                add(i * k, forward, 1.0)
            else:
                add(i * k, forward, 1.0 - 0.5 * zero_mass)
                add(i * k, -i, 0.5 * zero_mass)

    logger.info(f"Built NSII chain with K={K} for p={p}")
    return ChainModel(params=params, truncation=K, states=tuple(states), trans=trans.tocsr(), taxes=taxes)


def revenue_to_go(
    chain: ChainModel, delta: float | None = None, tol: float = VALUE_TOLERANCE, max_iter: int = MAX_ITERATIONS
) -> np.ndarray:
    """
    Solve ``R_k = r_k + delta * sum_j q_{k,j} R_j`` by value iteration.

    Returns
    -------
        The coordinator's expected discounted revenue-to-go at every chain state

    Raises
    ------
        ConvergenceError: if the sup-norm residual is still above ``tol`` after ``max_iter`` sweeps

    """
    delta = chain.params.delta if delta is None else delta
    if not 0.0 <= delta < 1.0:
        raise ConfigurationError(f"delta must lie in [0, 1), got {delta}")

    values = chain.taxes.copy()
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        updated = chain.taxes + delta * (chain.trans @ values)
        residual = float(np.max(np.abs(updated - values)))
        values = updated
        if residual < tol:
            logger.info(f"Revenue value iteration converged after {iteration} sweeps (residual={residual:.2e})")
            return values
    raise ConvergenceError("revenue value iteration did not converge", iterations=max_iter, residual=residual)


def coordinator_revenue(chain: ChainModel, delta: float | None = None) -> float:
    """The coordinator's expected discounted revenue ``R^C_0`` starting from ``1_0``."""
    delta = chain.params.delta if delta is None else delta
    revenue = float(revenue_to_go(chain, delta)[chain.index(0)])
    bound = chain.truncation_bound(delta)
    logger.debug(f"Coordinator revenue {revenue:.12g} with truncation bound {bound:.2e}")
    return revenue
