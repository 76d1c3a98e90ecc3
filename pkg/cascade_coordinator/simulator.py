"""
Seeded Monte-Carlo episodes for any mechanism policy.

:func:`run_episode` plays a single episode step by step and keeps the whole history.
:func:`estimate`, :func:`period_means` and :func:`sample_paths` run many episodes at once
on numpy arrays. Episodes are split into fixed-size blocks, each with its own Philox
stream derived from the master seed and the block number, so the results do not depend
on how many worker threads process the blocks.
"""

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .analytic import WelfareReport
from .core import (
    ACTIONS,
    MechanismPolicy,
    ModelParams,
    Prescription,
    SummaryBelief,
    belief_transition,
    in_learning_set,
    is_truth_telling,
    tax,
)
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 16384
HORIZON_TOLERANCE = 1e-8

T = TypeVar("T")


class StepRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    y: int
    a: int
    tax: float = Field(..., ge=-1.0)
    belief: SummaryBelief

    @model_validator(mode="after")
    def _check_symbols(self) -> "StepRecord":
        if self.y not in ACTIONS or self.a not in ACTIONS:
            raise ValueError(f"signal and action must be -1 or +1, got y={self.y}, a={self.a}")
        return self


class EpisodeRecord(BaseModel):
    """One simulated episode: hidden state, per-step history and discounted totals."""

    model_config = ConfigDict(frozen=True)

    state: int
    steps: tuple[StepRecord, ...]
    gsw: float
    nsw: float
    revenue: float
    horizon: int
    final_belief: SummaryBelief

    @model_validator(mode="after")
    def _check_totals(self) -> "EpisodeRecord":
        if self.nsw != self.gsw - self.revenue:
            raise ValueError("nsw must equal gsw - revenue")
        if len(self.steps) != self.horizon:
            raise ValueError(f"expected {self.horizon} steps, got {len(self.steps)}")
        return self

    @property
    def signals(self) -> tuple[int, ...]:
        return tuple(step.y for step in self.steps)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(step.a for step in self.steps)

    @property
    def taxes(self) -> tuple[float, ...]:
        return tuple(step.tax for step in self.steps)


class PeriodMeans(BaseModel):
    """Per-period Monte-Carlo means of the agent's utility, tax and net utility, with standard errors."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    utility: np.ndarray
    utility_stderr: np.ndarray
    tax: np.ndarray
    tax_stderr: np.ndarray
    net: np.ndarray
    net_stderr: np.ndarray
    episodes: int


class PathBatch(BaseModel):
    """
    Full histories of a batch of episodes.

    Per-step arrays have shape ``(horizon, episodes)``. ``belief_ids`` has one extra row for
    the belief after the last step and indexes into ``beliefs``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    states: np.ndarray
    signals: np.ndarray
    actions: np.ndarray
    taxes: np.ndarray
    learning: np.ndarray
    belief_ids: np.ndarray
    beliefs: tuple[SummaryBelief, ...]


def default_horizon(delta: float, tolerance: float = HORIZON_TOLERANCE) -> int:
    """Smallest ``T`` with ``delta**T <= tolerance``."""
    return max(1, math.ceil(math.log(tolerance) / math.log(delta) - 1e-9))


def run_episode(
    params: ModelParams,
    policy: MechanismPolicy,
    horizon: int,
    seed: int | None = None,
    signals: Sequence[int] | None = None,
    state: int | None = None,
) -> EpisodeRecord:
    """
    Play one episode in which every agent joins, reports truthfully and obeys.

    Args:
    ----
        params: Model constants
        policy: Mechanism mapping public beliefs to prescriptions
        horizon: Number of agents
        seed: Seed of the episode's random stream
        signals: Forced private signals for the first steps, drawn from the channel otherwise
        state: Forced hidden state, drawn uniformly otherwise

    Returns:
    -------
        The episode history and its discounted welfare and revenue

    """
    if horizon < 1:
        raise ConfigurationError(f"horizon must be at least 1, got {horizon}")
    if state is not None and state not in ACTIONS:
        raise ConfigurationError(f"state must be -1 or +1, got {state}")
    if signals is not None and any(y not in ACTIONS for y in signals):
        raise ConfigurationError("forced signals must be -1 or +1")

    rng = np.random.default_rng(seed)
    w = state if state is not None else (1 if rng.random() < 0.5 else -1)
    forced = list(signals or [])

    eta = SummaryBelief.point(0)
    n = 0
    steps = []
    gsw = revenue = 0.0
    discount = 1.0
    for t in range(horizon):
        if t < len(forced):
            y = forced[t]
        else:
            y = w if rng.random() < params.pbar else -w
        theta = policy(eta)
        a = 1 if rng.random() < theta.prob_plus(n, y) else -1
        step_tax = tax(params, eta, theta)
        steps.append(StepRecord(n=n, y=y, a=a, tax=step_tax, belief=eta))

        gsw += discount * (1.0 if a == w else 0.0)
        revenue += discount * step_tax
        eta = belief_transition(params, eta, a, theta)
        n += y
        discount *= params.delta

    return EpisodeRecord(
        state=w,
        steps=tuple(steps),
        gsw=gsw,
        nsw=gsw - revenue,
        revenue=revenue,
        horizon=horizon,
        final_belief=eta,
    )


class _BeliefTable:
    """Block-local interning of the public beliefs met so far, with their prescriptions and taxes."""

    def __init__(self, params: ModelParams, policy: MechanismPolicy, horizon: int, capacity: int = 64):
        self.params = params
        self.policy = policy
        self.offset = horizon + 1
        self.beliefs: list[SummaryBelief] = []
        self.prescriptions: list[Prescription] = []
        self._ids: dict[tuple, int] = {}
        self.p_plus = np.full((capacity, 2 * horizon + 3, 2), np.nan)
        self.taxes = np.zeros(capacity)
        self.learning = np.zeros(capacity, dtype=bool)
        self.next_ids = np.full((capacity, 2), -1, dtype=np.int64)

    def _grow(self) -> None:
        extra = self.taxes.size
        self.p_plus = np.concatenate([self.p_plus, np.full_like(self.p_plus, np.nan)])
        self.taxes = np.concatenate([self.taxes, np.zeros(extra)])
        self.learning = np.concatenate([self.learning, np.zeros(extra, dtype=bool)])
        self.next_ids = np.concatenate([self.next_ids, np.full((extra, 2), -1, dtype=np.int64)])

    def intern(self, eta: SummaryBelief) -> int:
        key = eta.key()
        if key in self._ids:
            return self._ids[key]

        i = len(self.beliefs)
        if i == self.taxes.size:
            self._grow()
        theta = self.policy(eta)
        if not is_truth_telling(self.params, eta, theta):
            logger.warning(f"Prescription {theta.name!r} of policy {self.policy.name!r} is not truth-telling at {key}")

        self._ids[key] = i
        self.beliefs.append(eta)
        self.prescriptions.append(theta)
        self.taxes[i] = tax(self.params, eta, theta)
        self.learning[i] = in_learning_set(self.params, eta)
        for n in eta.support:
            if abs(n) < self.offset:
                for col, m in enumerate(ACTIONS):
                    self.p_plus[i, n + self.offset, col] = theta.prob_plus(n, m)
        logger.debug(f"Interned belief #{i} with support size {len(eta.support)}")
        return i

    def successor(self, i: int, a: int) -> int:
        col = (a + 1) // 2
        if self.next_ids[i, col] < 0:
            child = belief_transition(self.params, self.beliefs[i], a, self.prescriptions[i])
            # interning may reallocate next_ids
            child_id = self.intern(child)
            self.next_ids[i, col] = child_id
        return int(self.next_ids[i, col])


class _Block(NamedTuple):
    gsw: np.ndarray
    revenue: np.ndarray
    states: np.ndarray
    signals: np.ndarray | None
    actions: np.ndarray | None
    taxes: np.ndarray | None
    learning: np.ndarray | None
    belief_ids: np.ndarray | None
    beliefs: list[SummaryBelief]


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _simulate_block(
    params: ModelParams,
    policy: MechanismPolicy,
    horizon: int,
    seed: int,
    block: int,
    size: int,
    record: bool,
) -> _Block:
    rng = _block_rng(seed, block)
    table = _BeliefTable(params, policy, horizon)

    w = np.where(rng.random(size) < 0.5, 1, -1)
    n = np.zeros(size, dtype=np.int64)
    ids = np.full(size, table.intern(SummaryBelief.point(0)), dtype=np.int64)
    gsw = np.zeros(size)
    revenue = np.zeros(size)

    if record:
        signals = np.zeros((horizon, size), dtype=np.int8)
        actions = np.zeros((horizon, size), dtype=np.int8)
        taxes = np.zeros((horizon, size))
        learning = np.zeros((horizon, size), dtype=bool)
        belief_ids = np.zeros((horizon + 1, size), dtype=np.int64)
        belief_ids[0] = ids

    discount = 1.0
    for t in range(horizon):
        u = rng.random((2, size))
        y = np.where(u[0] < params.pbar, w, -w)
        pp = table.p_plus[ids, n + table.offset, (y + 1) // 2]
        missing = np.flatnonzero(np.isnan(pp))
        for k in missing:
            # summary pruned out of the public belief
            pp[k] = table.prescriptions[ids[k]].prob_plus(int(n[k]), int(y[k]))
        a = np.where(u[1] < pp, 1, -1)
        step_tax = table.taxes[ids]

        gsw += discount * (a == w)
        revenue += discount * step_tax
        if record:
            signals[t] = y
            actions[t] = a
            taxes[t] = step_tax
            learning[t] = table.learning[ids]

        acol = (a + 1) // 2
        pending = np.flatnonzero(table.next_ids[ids, acol] < 0)
        if pending.size:
            for i, col in np.unique(np.stack([ids[pending], acol[pending]], axis=1), axis=0):
                table.successor(int(i), 1 if col == 1 else -1)
        ids = table.next_ids[ids, acol]
        n += y
        discount *= params.delta
        if record:
            belief_ids[t + 1] = ids

    logger.debug(f"Block {block}: {size} episodes, {len(table.beliefs)} distinct beliefs")
    if not record:
        return _Block(gsw, revenue, w, None, None, None, None, None, table.beliefs)
    return _Block(gsw, revenue, w, signals, actions, taxes, learning, belief_ids, table.beliefs)


def _run_blocks(
    params: ModelParams,
    policy: MechanismPolicy,
    episodes: int,
    horizon: int,
    seed: int,
    workers: int,
    block_size: int,
    record: bool,
) -> list[_Block]:
    if episodes < 1:
        raise ConfigurationError(f"episodes must be at least 1, got {episodes}")
    if horizon < 1:
        raise ConfigurationError(f"horizon must be at least 1, got {horizon}")
    if workers < 1 or block_size < 1:
        raise ConfigurationError("workers and block size must be positive")

    sizes = [min(block_size, episodes - start) for start in range(0, episodes, block_size)]

    def job(block: int) -> _Block:
        return _simulate_block(params, policy, horizon, seed, block, sizes[block], record)

    blocks = _map_ordered(job, range(len(sizes)), workers)
    logger.info(f"Simulated {episodes} episodes of {policy.name} in {len(sizes)} blocks")
    return blocks


def _map_ordered(fn: Callable[[int], T], items: range, workers: int) -> list[T]:
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _mean_and_stderr(values: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    count = values.shape[axis]
    mean = np.mean(values, axis=axis)
    if count < 2:
        return mean, np.zeros_like(mean)
    return mean, np.std(values, axis=axis, ddof=1) / math.sqrt(count)


def estimate(
    params: ModelParams,
    policy: MechanismPolicy,
    episodes: int,
    horizon: int | None = None,
    seed: int = 0,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> WelfareReport:
    """
    Monte-Carlo estimate of the discounted gross/net welfare and revenue.

    The horizon defaults to the smallest ``T`` with ``delta**T <= 1e-8``; the resulting
    truncation bias ``delta**T / (1 - delta)`` is reported as ``truncation_bound``.
    """
    if horizon is None:
        horizon = default_horizon(params.delta)
    blocks = _run_blocks(params, policy, episodes, horizon, seed, workers, block_size, record=False)
    gsw = np.concatenate([b.gsw for b in blocks])
    revenue = np.concatenate([b.revenue for b in blocks])

    gsw_mean, gsw_se = _mean_and_stderr(gsw)
    revenue_mean, revenue_se = _mean_and_stderr(revenue)
    _, nsw_se = _mean_and_stderr(gsw - revenue)
    return WelfareReport(
        mechanism=policy.name,
        mode="simulate",
        delta=params.delta,
        gsw=float(gsw_mean),
        nsw=float(gsw_mean) - float(revenue_mean),
        revenue=float(revenue_mean),
        gsw_stderr=float(gsw_se),
        nsw_stderr=float(nsw_se),
        revenue_stderr=float(revenue_se),
        episodes=episodes,
        truncation_bound=params.delta**horizon / (1.0 - params.delta),
    )


def sample_paths(
    params: ModelParams,
    policy: MechanismPolicy,
    episodes: int,
    horizon: int,
    seed: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> PathBatch:
    """Simulate ``episodes`` episodes and keep every signal, action, tax and belief."""
    blocks = _run_blocks(params, policy, episodes, horizon, seed, 1, block_size, record=True)

    beliefs: list[SummaryBelief] = []
    index: dict[tuple, int] = {}
    remapped = []
    for b in blocks:
        assert b.belief_ids is not None
        local = []
        for eta in b.beliefs:
            key = eta.key()
            if key not in index:
                index[key] = len(beliefs)
                beliefs.append(eta)
            local.append(index[key])
        remapped.append(np.asarray(local, dtype=np.int64)[b.belief_ids])

    return PathBatch(
        states=np.concatenate([b.states for b in blocks]),
        signals=np.concatenate([b.signals for b in blocks], axis=1),
        actions=np.concatenate([b.actions for b in blocks], axis=1),
        taxes=np.concatenate([b.taxes for b in blocks], axis=1),
        learning=np.concatenate([b.learning for b in blocks], axis=1),
        belief_ids=np.concatenate(remapped, axis=1),
        beliefs=tuple(beliefs),
    )


def period_means(
    params: ModelParams,
    policy: MechanismPolicy,
    episodes: int,
    horizon: int,
    seed: int = 0,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> PeriodMeans:
    """Undiscounted mean utility ``1{a_t = W}``, tax and their difference for every period ``t <= horizon``."""
    blocks = _run_blocks(params, policy, episodes, horizon, seed, workers, block_size, record=True)
    actions = np.concatenate([b.actions for b in blocks], axis=1)
    states = np.concatenate([b.states for b in blocks])
    taxes = np.concatenate([b.taxes for b in blocks], axis=1)
    utility = (actions == states[np.newaxis, :]).astype(float)

    utility_mean, utility_se = _mean_and_stderr(utility, axis=1)
    tax_mean, tax_se = _mean_and_stderr(taxes, axis=1)
    net_mean, net_se = _mean_and_stderr(utility - taxes, axis=1)
    return PeriodMeans(
        utility=utility_mean,
        utility_stderr=utility_se,
        tax=tax_mean,
        tax_stderr=tax_se,
        net=net_mean,
        net_stderr=net_se,
        episodes=episodes,
    )
