import math
from collections import defaultdict
from typing import NamedTuple

from .core import ACTIONS, MechanismPolicy, ModelParams, SummaryBelief, action_probability, belief_transition


class HistoryPosterior(NamedTuple):
    probability: float
    belief: SummaryBelief


class BayesOracle:
    """
    Public beliefs by brute force over every signal sequence and hidden state.

    Sequences are grouped by the action history they generate; the belief after a history
    is the normalized mass of the signal sums within its group.
    """

    __test__ = False  # <- skip pytest

    def __init__(self, params: ModelParams, policy: MechanismPolicy):
        self.params = params
        self.policy = policy

    def histories(self, t: int) -> dict[tuple[int, ...], HistoryPosterior]:
        """Every action history of length ``t`` with positive probability and its public belief."""
        # history -> list of (n, weight given W=+1, weight given W=-1)
        groups: dict[tuple[int, ...], list[tuple[int, float, float]]] = {(): [(0, 0.5, 0.5)]}
        for _ in range(t):
            extended: dict[tuple[int, ...], list[tuple[int, float, float]]] = defaultdict(list)
            for history, prefixes in groups.items():
                theta = self.policy(self._belief(prefixes))
                for n, plus, minus in prefixes:
                    for y in ACTIONS:
                        lik_plus = plus * self.params.signal_likelihood(y, 1)
                        lik_minus = minus * self.params.signal_likelihood(y, -1)
                        for a in ACTIONS:
                            prob = theta.prob(a, n, y)
                            if prob > 0.0:
                                extended[history + (a,)].append((n + y, lik_plus * prob, lik_minus * prob))
            groups = dict(extended)

        return {
            history: HistoryPosterior(math.fsum(p + m for _, p, m in prefixes), self._belief(prefixes))
            for history, prefixes in sorted(groups.items())
        }

    @staticmethod
    def _belief(prefixes: list[tuple[int, float, float]]) -> SummaryBelief:
        mass: dict[int, float] = defaultdict(float)
        for n, plus, minus in prefixes:
            mass[n] += plus + minus
        total = math.fsum(mass.values())
        return SummaryBelief.model_construct(mass={n: v / total for n, v in sorted(mass.items()) if v > 0.0})

    def iterated(self, history: tuple[int, ...]) -> SummaryBelief:
        """The belief reached by applying the library's transition along ``history``."""
        eta = SummaryBelief.point(0)
        for a in history:
            eta = belief_transition(self.params, eta, a, self.policy(eta))
        return eta


def reachable_beliefs(params: ModelParams, policy: MechanismPolicy, steps: int) -> list[SummaryBelief]:
    """Every public belief ``policy`` reaches from ``1_0`` within ``steps`` actions, in discovery order."""
    root = SummaryBelief.point(0)
    seen = {root.key(): root}
    frontier = [root]
    for _ in range(steps):
        following = []
        for eta in frontier:
            theta = policy(eta)
            for a in ACTIONS:
                if action_probability(params, eta, theta, a) <= 0.0:
                    continue
                child = belief_transition(params, eta, a, theta)
                if child.key() not in seen:
                    seen[child.key()] = child
                    following.append(child)
        frontier = following
    return list(seen.values())
