"""
Finite-horizon dynamic program over summary beliefs.

The coordinator's state is the public summary belief. At every reachable belief the
solver enumerates all deterministic prescriptions on the belief's ``(n, m)`` pairs, keeps
the truth-telling ones, and backs up ``tax + delta * E[V_next]``. Randomized prescriptions
are not searched, so the root value is a lower bound on the optimal revenue.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .analytic import WelfareReport
from .core import (
    ACTIONS,
    MechanismPolicy,
    ModelParams,
    Prescription,
    SummaryBelief,
    action_probability,
    belief_transition,
    expected_utility,
    outside_best_response,
    state_posterior_given_summary,
    tax,
)
from .core.beliefs import FEASIBILITY_TOLERANCE, PRUNE_THRESHOLD, ZERO_TAX_TOLERANCE
from .core.utils import KEY_DECIMALS
from .errors import ConfigurationError, PrescriptionDomainError

logger = logging.getLogger(__name__)

MAX_DP_HORIZON = 6
MAX_EVAL_HORIZON = 20
TIE_TOLERANCE = 1e-12

BeliefKey = tuple[tuple[int, float], ...]


class DpSolution(BaseModel):
    """
    Optimal deterministic prescriptions and values for every stage ``t = 1..T``.

    Stage tables are keyed by the canonical belief key (sorted support, masses rounded
    to 1e-12).
    """

    model_config = ConfigDict(frozen=True)

    horizon: int
    delta: float
    values: tuple[dict[BeliefKey, float], ...]
    welfare: tuple[dict[BeliefKey, float], ...]
    policies: tuple[dict[BeliefKey, Prescription], ...]
    belief_sets: tuple[dict[BeliefKey, SummaryBelief], ...]
    root_value: float

    def _stage(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise ConfigurationError(f"stage must lie in 1..{self.horizon}, got {t}")
        return t - 1

    def value(self, t: int, belief: SummaryBelief) -> float:
        try:
            return self.values[self._stage(t)][belief.key()]
        except KeyError:
            raise KeyError(f"belief {belief.key()} is not reachable at stage {t}") from None

    def prescription(self, t: int, belief: SummaryBelief) -> Prescription:
        try:
            return self.policies[self._stage(t)][belief.key()]
        except KeyError:
            raise PrescriptionDomainError(f"no prescription stored for belief {belief.key()} at stage {t}") from None

    def beliefs(self, t: int) -> list[SummaryBelief]:
        """Reachable beliefs at stage ``t`` in canonical order."""
        stage = self.belief_sets[self._stage(t)]
        return [stage[key] for key in sorted(stage)]

    def report(self) -> WelfareReport:
        """Root revenue and the gross welfare earned under the optimal prescriptions."""
        root = SummaryBelief.point(0).key()
        gsw = self.welfare[0][root]
        return WelfareReport(
            mechanism="dp", mode="dp", delta=self.delta, gsw=gsw, nsw=gsw - self.root_value, revenue=self.root_value
        )


class _Options(NamedTuple):
    """Feasible deterministic prescriptions at one belief with their taxes and successors."""

    pairs: tuple[tuple[int, int], ...]
    codes: np.ndarray
    tables: np.ndarray
    taxes: np.ndarray
    utilities: np.ndarray
    probs: np.ndarray
    child_beliefs: tuple[SummaryBelief, ...]
    # row -> index into child_beliefs per action, -1 where the action cannot occur
    child_index: np.ndarray


def _pair_weights(params: ModelParams, eta: SummaryBelief) -> tuple[list[tuple[int, int]], np.ndarray, np.ndarray]:
    # g(n, w, y) = Q(y|w) eta(n) q(w|n) per (n, m = y) pair, m = -1 first
    pairs = [(n, m) for n in eta.support for m in ACTIONS]
    g_plus = np.empty(len(pairs))
    g_minus = np.empty(len(pairs))
    for i, (n, y) in enumerate(pairs):
        q_plus = state_posterior_given_summary(params, n, 1)
        g_plus[i] = params.signal_likelihood(y, 1) * eta[n] * q_plus
        g_minus[i] = params.signal_likelihood(y, -1) * eta[n] * (1.0 - q_plus)
    return pairs, g_plus, g_minus


def _enumerate_options(params: ModelParams, eta: SummaryBelief, with_children: bool) -> _Options:
    pairs, g_plus, g_minus = _pair_weights(params, eta)
    width = len(pairs)
    codes = np.arange(2**width, dtype=np.int64)
    # first (n, m) pair is the most significant bit; bit 1 recommends +1
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    tables = ((codes[:, np.newaxis] >> shifts) & 1).astype(float)

    outside = np.array(
        [1.0 if outside_best_response(params, eta, y) == 1 else 0.0 for _, y in pairs],
    )
    baseline = float(np.sum(outside * g_plus + (1.0 - outside) * g_minus))
    taxes = tables @ g_plus + (1.0 - tables) @ g_minus - baseline
    taxes[np.abs(taxes) < ZERO_TAX_TOLERANCE] = 0.0

    diff = (g_plus - g_minus).reshape(-1, 2)
    grid = tables.reshape(codes.size, -1, 2)
    col_plus = (grid[:, :, 1] - grid[:, :, 0]) @ diff[:, 1]
    col_minus = (grid[:, :, 0] - grid[:, :, 1]) @ diff[:, 0]
    feasible = (col_plus >= -FEASIBILITY_TOLERANCE) & (col_minus >= -FEASIBILITY_TOLERANCE)

    codes, tables, taxes = codes[feasible], tables[feasible], taxes[feasible]
    weights = g_plus + g_minus
    lo = min(eta.support) - 1
    targets = np.array([n + y - lo for n, y in pairs])
    scatter = np.zeros((width, int(targets.max()) + 1))
    scatter[np.arange(width), targets] = 1.0

    child_mass = {1: (tables * weights) @ scatter, -1: ((1.0 - tables) * weights) @ scatter}
    probs = np.stack([child_mass[a].sum(axis=1) for a in ACTIONS], axis=1)

    if with_children:
        stacked = np.concatenate([child_mass[a] for a in ACTIONS])
        child_beliefs, flat_index = _intern_children(stacked, probs.T.reshape(-1), lo)
        child_index = flat_index.reshape(len(ACTIONS), -1).T
    else:
        child_beliefs, child_index = (), np.full(probs.shape, -1, dtype=np.int64)

    return _Options(
        pairs=tuple(pairs),
        codes=codes,
        tables=tables,
        taxes=taxes,
        utilities=taxes + baseline,
        probs=probs,
        child_beliefs=child_beliefs,
        child_index=child_index,
    )


def _intern_children(mass: np.ndarray, probs: np.ndarray, lo: int) -> tuple[tuple[SummaryBelief, ...], np.ndarray]:
    """
    Normalize and prune every child mass row, then build one belief per distinct row.

    Rows are compared after rounding to the canonical key precision. Returns the distinct
    beliefs and, per input row, the index of its belief (``-1`` for zero-probability rows).
    """
    live = probs > 0.0
    normalized = mass[live] / probs[live][:, np.newaxis]
    normalized[normalized <= PRUNE_THRESHOLD] = 0.0
    normalized /= normalized.sum(axis=1, keepdims=True)

    _, first, inverse = np.unique(np.round(normalized, KEY_DECIMALS), axis=0, return_index=True, return_inverse=True)
    beliefs = tuple(
        SummaryBelief.model_construct(mass={int(k) + lo: float(v) for k, v in enumerate(normalized[row]) if v > 0.0})
        for row in first
    )
    index = np.full(probs.size, -1, dtype=np.int64)
    index[live] = inverse.reshape(-1)
    return beliefs, index


def solve_finite_horizon(params: ModelParams, T: int) -> DpSolution:
    """
    Maximize the coordinator's expected discounted revenue over ``T`` agents.

    Args:
    ----
        params: Model constants; ``params.delta`` discounts the stage taxes
        T: Number of agents, between 1 and 6

    Returns:
    -------
        Per-stage values and argmax prescriptions on every reachable belief, with ties
        broken towards the lexicographically smallest action table

    """
    if not 1 <= T <= MAX_DP_HORIZON:
        raise ConfigurationError(f"DP horizon must lie in 1..{MAX_DP_HORIZON}, got {T}")

    root = SummaryBelief.point(0)
    belief_sets: list[dict[BeliefKey, SummaryBelief]] = [{root.key(): root}]
    options: list[dict[BeliefKey, _Options]] = []
    for t in range(T):
        last = t == T - 1
        stage_options = {key: _enumerate_options(params, eta, not last) for key, eta in belief_sets[t].items()}
        options.append(stage_options)
        if last:
            break
        following: dict[BeliefKey, SummaryBelief] = {}
        for opt in stage_options.values():
            for child in opt.child_beliefs:
                following.setdefault(child.key(), child)
        belief_sets.append(following)
        logger.debug(f"Stage {t + 2}: {len(following)} reachable beliefs")

    values: list[dict[BeliefKey, float]] = [{} for _ in range(T)]
    welfare: list[dict[BeliefKey, float]] = [{} for _ in range(T)]
    policies: list[dict[BeliefKey, Prescription]] = [{} for _ in range(T)]
    for t in range(T - 1, -1, -1):
        for key, opt in options[t].items():
            totals = opt.taxes.copy()
            gross = opt.utilities.copy()
            if t < T - 1:
                totals = totals + params.delta * _continuation(opt, values[t + 1])
                gross = gross + params.delta * _continuation(opt, welfare[t + 1])
            best = int(np.flatnonzero(totals >= totals.max() - TIE_TOLERANCE)[0])
            values[t][key] = float(totals[best])
            welfare[t][key] = float(gross[best])
            actions = {pair: 1 if opt.tables[best, i] == 1.0 else -1 for i, pair in enumerate(opt.pairs)}
            policies[t][key] = Prescription.from_actions(f"dp[t={t + 1}]", actions)

    root_value = values[0][root.key()]
    logger.info(f"Solved {T}-stage DP over {sum(len(s) for s in belief_sets)} beliefs: V_1 = {root_value:.12g}")
    return DpSolution(
        horizon=T,
        delta=params.delta,
        values=tuple(values),
        welfare=tuple(welfare),
        policies=tuple(policies),
        belief_sets=tuple(belief_sets),
        root_value=root_value,
    )


def _continuation(opt: _Options, following: dict[BeliefKey, float]) -> np.ndarray:
    # trailing zero is picked up by index -1
    values = np.array([following[child.key()] for child in opt.child_beliefs] + [0.0])
    return (opt.probs * values[opt.child_index]).sum(axis=1)


def _finite_totals(params: ModelParams, policy: MechanismPolicy, T: int) -> tuple[float, float]:
    if not 1 <= T <= MAX_EVAL_HORIZON:
        raise ConfigurationError(f"evaluation horizon must lie in 1..{MAX_EVAL_HORIZON}, got {T}")

    root = SummaryBelief.point(0)
    layer: dict[BeliefKey, tuple[SummaryBelief, float]] = {root.key(): (root, 1.0)}
    utilities = []
    taxes = []
    for t in range(T):
        following: dict[BeliefKey, tuple[SummaryBelief, float]] = {}
        for eta, prob in layer.values():
            theta = policy(eta)
            weight = params.delta**t * prob
            utilities.append(weight * expected_utility(params, eta, theta))
            taxes.append(weight * tax(params, eta, theta))
            if t == T - 1:
                continue
            for a in ACTIONS:
                p_a = action_probability(params, eta, theta, a)
                if p_a <= 0.0:
                    continue
                child = belief_transition(params, eta, a, theta)
                _, seen = following.get(child.key(), (child, 0.0))
                following[child.key()] = (child, seen + prob * p_a)
        layer = following
        logger.debug(f"Stage {t + 2}: {len(layer)} distinct beliefs under {policy.name}")
    return math.fsum(utilities), math.fsum(taxes)


def evaluate_policy_finite(params: ModelParams, policy: MechanismPolicy, T: int) -> float:
    """Exact ``E[sum_{t <= T} delta^(t-1) tax_t]`` by forward enumeration of the belief tree."""
    return _finite_totals(params, policy, T)[1]


def finite_horizon_report(params: ModelParams, policy: MechanismPolicy, T: int) -> WelfareReport:
    """Exact ``T``-agent gross/net welfare and revenue of ``policy``."""
    gsw, revenue = _finite_totals(params, policy, T)
    return WelfareReport(
        mechanism=policy.name, mode="dp", delta=params.delta, gsw=gsw, nsw=gsw - revenue, revenue=revenue
    )


def one_step_values(params: ModelParams, eta: SummaryBelief) -> dict[tuple[int, ...], float]:
    """Tax of every feasible deterministic action table at ``eta``, keyed by the table in ``(n, m)`` order."""
    opt = _enumerate_options(params, eta, with_children=False)
    return {tuple(1 if v == 1.0 else -1 for v in row): float(t) for row, t in zip(opt.tables, opt.taxes)}
